/** Image loading (PNG, binary PPM) and resizing. */

import * as fs from 'fs'
import { PNG } from 'pngjs'

export interface RgbImage {
  width: number
  height: number
  /** RGB interleaved, 3 bytes per pixel, row-major */
  pixels: Uint8Array
}

function decodePpm(raw: Buffer): RgbImage {
  // P6 header: "P6" <whitespace> width <ws> height <ws> maxval <single ws> data
  let pos = 0
  const token = (): string => {
    while (pos < raw.length && /\s/.test(String.fromCharCode(raw[pos]))) pos++
    if (raw[pos] === 0x23) {
      // comment line
      while (pos < raw.length && raw[pos] !== 0x0a) pos++
      return token()
    }
    const start = pos
    while (pos < raw.length && !/\s/.test(String.fromCharCode(raw[pos]))) pos++
    return raw.toString('ascii', start, pos)
  }
  if (token() !== 'P6') throw new Error('not a binary PPM (P6) file')
  const width = parseInt(token(), 10)
  const height = parseInt(token(), 10)
  const maxval = parseInt(token(), 10)
  pos++ // single whitespace after maxval
  if (!(width > 0 && height > 0) || maxval !== 255) {
    throw new Error('unsupported PPM header')
  }
  const need = width * height * 3
  if (raw.length < pos + need) throw new Error('truncated PPM payload')
  return { width, height, pixels: new Uint8Array(raw.subarray(pos, pos + need)) }
}

function decodePng(raw: Buffer): RgbImage {
  const png = PNG.sync.read(raw)
  const pixels = new Uint8Array(png.width * png.height * 3)
  for (let i = 0; i < png.width * png.height; i++) {
    pixels[3 * i] = png.data[4 * i]
    pixels[3 * i + 1] = png.data[4 * i + 1]
    pixels[3 * i + 2] = png.data[4 * i + 2]
  }
  return { width: png.width, height: png.height, pixels }
}

export function loadImage(path: string): RgbImage {
  const raw = fs.readFileSync(path)
  if (raw.length >= 8 && raw.readUInt32BE(0) === 0x89504e47) return decodePng(raw)
  if (raw.length >= 2 && raw.toString('ascii', 0, 2) === 'P6') return decodePpm(raw)
  throw new Error(`unreadable image: ${path}`)
}

/** box-average resize; deterministic pure integer/float arithmetic */
export function resize(image: RgbImage, width: number, height: number): RgbImage {
  const out = new Uint8Array(width * height * 3)
  const sx = image.width / width
  const sy = image.height / height
  for (let y = 0; y < height; y++) {
    const y0 = Math.floor(y * sy)
    const y1 = Math.max(y0 + 1, Math.floor((y + 1) * sy))
    for (let x = 0; x < width; x++) {
      const x0 = Math.floor(x * sx)
      const x1 = Math.max(x0 + 1, Math.floor((x + 1) * sx))
      let r = 0
      let g = 0
      let b = 0
      let n = 0
      for (let yy = y0; yy < Math.min(y1, image.height); yy++) {
        for (let xx = x0; xx < Math.min(x1, image.width); xx++) {
          const p = 3 * (yy * image.width + xx)
          r += image.pixels[p]
          g += image.pixels[p + 1]
          b += image.pixels[p + 2]
          n++
        }
      }
      const q = 3 * (y * width + x)
      out[q] = Math.round(r / n)
      out[q + 1] = Math.round(g / n)
      out[q + 2] = Math.round(b / n)
    }
  }
  return { width, height, pixels: out }
}

export interface Planes {
  width: number
  height: number
  /** luma and two opponent-color channels, each in [0, 255] */
  luma: Float64Array
  cr: Float64Array
  cb: Float64Array
}

export function toPlanes(image: RgbImage): Planes {
  const n = image.width * image.height
  const luma = new Float64Array(n)
  const cr = new Float64Array(n)
  const cb = new Float64Array(n)
  for (let i = 0; i < n; i++) {
    const r = image.pixels[3 * i]
    const g = image.pixels[3 * i + 1]
    const b = image.pixels[3 * i + 2]
    luma[i] = 0.299 * r + 0.587 * g + 0.114 * b
    cr[i] = 128 + (r - g) / 2
    cb[i] = 128 + (b - (r + g) / 2) / 2
  }
  return { width: image.width, height: image.height, luma, cr, cb }
}
