/** Deterministic synthetic scene images for tests and demos. */

import { RgbImage } from './image'

/** mulberry32: tiny deterministic PRNG */
export function rng(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a |= 0
    a = (a + 0x6d2b79f5) | 0
    let t = Math.imul(a ^ (a >>> 15), 1 | a)
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/**
 * Renders a scene of colored rectangles and disks over a two-tone
 * background split, producing plenty of quantization structure for the
 * segmenter.
 */
export function renderScene(seed: number, width = 320, height = 240): RgbImage {
  const rand = rng(seed)
  const pixels = new Uint8Array(width * height * 3)
  const horizon = Math.floor(height * (0.35 + 0.2 * rand()))
  const sky = [140 + 60 * rand(), 160 + 60 * rand(), 200 + 40 * rand()]
  const ground = [60 + 60 * rand(), 110 + 60 * rand(), 50 + 50 * rand()]
  for (let y = 0; y < height; y++) {
    const base = y < horizon ? sky : ground
    const shade = 1 - 0.25 * (y / height)
    for (let x = 0; x < width; x++) {
      const p = 3 * (y * width + x)
      pixels[p] = Math.round(base[0] * shade)
      pixels[p + 1] = Math.round(base[1] * shade)
      pixels[p + 2] = Math.round(base[2] * shade)
    }
  }
  const shapes = 18 + Math.floor(8 * rand())
  for (let s = 0; s < shapes; s++) {
    const color = [
      Math.floor(40 + 200 * rand()),
      Math.floor(40 + 200 * rand()),
      Math.floor(40 + 200 * rand()),
    ]
    const cx = Math.floor(width * rand())
    const cy = Math.floor(height * rand())
    const w = Math.floor(10 + (width / 6) * rand())
    const h = Math.floor(10 + (height / 6) * rand())
    const disk = rand() < 0.5
    for (let y = Math.max(0, cy - h); y < Math.min(height, cy + h); y++) {
      for (let x = Math.max(0, cx - w); x < Math.min(width, cx + w); x++) {
        if (disk) {
          const dx = (x - cx) / w
          const dy = (y - cy) / h
          if (dx * dx + dy * dy > 1) continue
        }
        const p = 3 * (y * width + x)
        pixels[p] = color[0]
        pixels[p + 1] = color[1]
        pixels[p + 2] = color[2]
      }
    }
  }
  return { width, height, pixels }
}

export function encodePpm(image: RgbImage): Buffer {
  const header = Buffer.from(`P6\n${image.width} ${image.height}\n255\n`, 'ascii')
  return Buffer.concat([header, Buffer.from(image.pixels)])
}
