/**
 * Classical open-set-style segmenter.
 *
 * Quantizes luma and two chroma planes at several coarseness levels and
 * takes 4-connected components of each quantized level set. Components
 * from different planes/levels overlap freely, mimicking the overlapping
 * "things and stuff" masks of promptable segmenters. Deterministic, no
 * model weights involved; any tool emitting the same file formats can
 * replace this one.
 */

import { Planes } from './image'

export interface SegmenterOptions {
  /** quantization levels per plane (coarse to fine) */
  levels?: number[]
  /** drop components smaller than this many pixels */
  minArea?: number
  /** drop components covering more than this fraction of the image */
  maxAreaFraction?: number
  /** keep at most this many masks (largest first) */
  maxSegments?: number
}

const DEFAULTS: Required<SegmenterOptions> = {
  levels: [2, 3, 5],
  minArea: 24,
  maxAreaFraction: 0.9,
  maxSegments: 220,
}

function connectedComponents(labels: Int32Array, width: number, height: number): Uint8Array[] {
  const n = width * height
  const seen = new Int32Array(n).fill(-1)
  const masks: Uint8Array[] = []
  const stack = new Int32Array(n)
  let componentId = 0
  for (let seed = 0; seed < n; seed++) {
    if (seen[seed] >= 0) continue
    const value = labels[seed]
    let top = 0
    stack[top++] = seed
    seen[seed] = componentId
    const members: number[] = []
    while (top > 0) {
      const p = stack[--top]
      members.push(p)
      const x = p % width
      const y = (p - x) / width
      if (x > 0 && seen[p - 1] < 0 && labels[p - 1] === value) {
        seen[p - 1] = componentId
        stack[top++] = p - 1
      }
      if (x + 1 < width && seen[p + 1] < 0 && labels[p + 1] === value) {
        seen[p + 1] = componentId
        stack[top++] = p + 1
      }
      if (y > 0 && seen[p - width] < 0 && labels[p - width] === value) {
        seen[p - width] = componentId
        stack[top++] = p - width
      }
      if (y + 1 < height && seen[p + width] < 0 && labels[p + width] === value) {
        seen[p + width] = componentId
        stack[top++] = p + width
      }
    }
    const mask = new Uint8Array(n)
    for (const p of members) mask[p] = 1
    masks.push(mask)
    componentId++
  }
  return masks
}

function quantize(plane: Float64Array, levels: number): Int32Array {
  let lo = Infinity
  let hi = -Infinity
  for (const v of plane) {
    if (v < lo) lo = v
    if (v > hi) hi = v
  }
  const span = hi - lo
  const out = new Int32Array(plane.length)
  if (span <= 1e-9) return out
  for (let i = 0; i < plane.length; i++) {
    const q = Math.floor(((plane[i] - lo) / span) * levels)
    out[i] = Math.min(q, levels - 1)
  }
  return out
}

function maskKey(mask: Uint8Array): string {
  // compact digest for dedup: run-length string
  const parts: number[] = []
  let start = -1
  for (let i = 0; i <= mask.length; i++) {
    const on = i < mask.length && mask[i] !== 0
    if (on && start < 0) start = i
    if (!on && start >= 0) {
      parts.push(start, i - start)
      start = -1
    }
  }
  return parts.join(',')
}

export function segment(planes: Planes, options: SegmenterOptions = {}): Uint8Array[] {
  const opts = { ...DEFAULTS, ...options }
  const n = planes.width * planes.height
  const maxArea = Math.floor(opts.maxAreaFraction * n)
  const collected: Array<{ mask: Uint8Array; area: number }> = []
  const seenKeys = new Set<string>()
  for (const plane of [planes.luma, planes.cr, planes.cb]) {
    for (const levels of opts.levels) {
      const labels = quantize(plane, levels)
      for (const mask of connectedComponents(labels, planes.width, planes.height)) {
        let area = 0
        for (const v of mask) area += v
        if (area < opts.minArea || area > maxArea) continue
        const key = maskKey(mask)
        if (seenKeys.has(key)) continue
        seenKeys.add(key)
        collected.push({ mask, area })
      }
    }
  }
  // deterministic order: area descending, then first pixel ascending
  collected.sort((a, b) => {
    if (a.area !== b.area) return b.area - a.area
    return a.mask.findIndex(v => v !== 0) - b.mask.findIndex(v => v !== 0)
  })
  return collected.slice(0, opts.maxSegments).map(c => c.mask)
}
