/**
 * Dense per-cell feature encoder.
 *
 * Splits the encoder-resolution image into a grid of 14x14-pixel cells
 * (ViT-style patches, trailing pixels dropped) and computes a 64-d
 * hand-crafted descriptor per cell: color statistics, intensity and color
 * histograms, and gradient-orientation histograms at two scales.
 */

import { Planes, RgbImage, toPlanes } from './image'

export const CELL_SIZE = 14
export const FEATURE_DIM = 64

export interface FeatureGrid {
  gridWidth: number
  gridHeight: number
  dim: number
  /** (gridHeight, gridWidth, dim) row-major */
  data: Float32Array
}

function orientationHistogram(
  planes: Planes,
  x0: number,
  y0: number,
  size: number,
  step: number,
  bins: number
): number[] {
  const hist = new Array(bins).fill(0)
  const { luma, width, height } = planes
  for (let y = y0 + step; y < y0 + size - step && y < height - step; y += step) {
    for (let x = x0 + step; x < x0 + size - step && x < width - step; x += step) {
      const gx = luma[y * width + x + step] - luma[y * width + x - step]
      const gy = luma[(y + step) * width + x] - luma[(y - step) * width + x]
      const mag = Math.hypot(gx, gy)
      if (mag < 1e-9) continue
      let angle = Math.atan2(gy, gx) // [-pi, pi]
      if (angle < 0) angle += Math.PI * 2
      const bin = Math.min(bins - 1, Math.floor((angle / (Math.PI * 2)) * bins))
      hist[bin] += mag
    }
  }
  const total = hist.reduce((a, b) => a + b, 0)
  return total > 0 ? hist.map(v => v / total) : hist
}

export function encode(image: RgbImage): FeatureGrid {
  const planes = toPlanes(image)
  const gridWidth = Math.floor(image.width / CELL_SIZE)
  const gridHeight = Math.floor(image.height / CELL_SIZE)
  const data = new Float32Array(gridWidth * gridHeight * FEATURE_DIM)
  for (let gy = 0; gy < gridHeight; gy++) {
    for (let gx = 0; gx < gridWidth; gx++) {
      const features: number[] = []
      const x0 = gx * CELL_SIZE
      const y0 = gy * CELL_SIZE
      const rgbSum = [0, 0, 0]
      const rgbSq = [0, 0, 0]
      let lumaSum = 0
      let lumaSq = 0
      const lumaHist = new Array(16).fill(0)
      const colorHist = [new Array(8).fill(0), new Array(8).fill(0), new Array(8).fill(0)]
      const count = CELL_SIZE * CELL_SIZE
      for (let y = y0; y < y0 + CELL_SIZE; y++) {
        for (let x = x0; x < x0 + CELL_SIZE; x++) {
          const p = y * image.width + x
          for (let c = 0; c < 3; c++) {
            const v = image.pixels[3 * p + c]
            rgbSum[c] += v
            rgbSq[c] += v * v
            colorHist[c][Math.min(7, v >> 5)]++
          }
          const l = planes.luma[p]
          lumaSum += l
          lumaSq += l * l
          lumaHist[Math.min(15, Math.floor(l / 16))]++
        }
      }
      for (let c = 0; c < 3; c++) features.push(rgbSum[c] / count / 255)
      for (let c = 0; c < 3; c++) {
        const mean = rgbSum[c] / count
        features.push(Math.sqrt(Math.max(0, rgbSq[c] / count - mean * mean)) / 255)
      }
      const lumaMean = lumaSum / count
      features.push(lumaMean / 255)
      features.push(Math.sqrt(Math.max(0, lumaSq / count - lumaMean * lumaMean)) / 255)
      features.push(...orientationHistogram(planes, x0, y0, CELL_SIZE, 1, 8))
      features.push(...orientationHistogram(planes, x0, y0, CELL_SIZE, 2, 8))
      features.push(...lumaHist.map(v => v / count))
      for (let c = 0; c < 3; c++) features.push(...colorHist[c].map(v => v / count))
      if (features.length !== FEATURE_DIM) {
        throw new Error(`descriptor has ${features.length} dims, expected ${FEATURE_DIM}`)
      }
      data.set(features, (gy * gridWidth + gx) * FEATURE_DIM)
    }
  }
  return { gridWidth, gridHeight, dim: FEATURE_DIM, data }
}
