/**
 * Extraction pipeline: images in, mask/feature/manifest files out.
 *
 * Segmentation runs at the segmenter resolution and features at the
 * encoder resolution; the engine aligns the two by downsampling masks
 * onto the feature grid. Unreadable images are skipped and logged, and
 * all outputs are written atomically (write-then-rename).
 */

import * as fs from 'fs'
import * as path from 'path'

import { CELL_SIZE, encode } from './encoder'
import {
  Manifest,
  ManifestEntry,
  MaskSet,
  encodeManifest,
  encodeMasks,
  encodeTensor,
  maskFromBitmap,
  writeFileAtomic,
} from './formats'
import { loadImage, resize, toPlanes } from './image'
import { SegmenterOptions, segment } from './segmenter'

export interface Resolution {
  width: number
  height: number
}

export interface ExtractionConfig {
  /** dense feature encoder input size (default 640x480) */
  encoderRes: Resolution
  /** segmenter input size; masks are emitted at this size (default 320x240) */
  segmenterRes: Resolution
  outDir: string
  datasetName: string
  segmenter?: SegmenterOptions
}

export const DEFAULT_CONFIG: Omit<ExtractionConfig, 'outDir'> = {
  encoderRes: { width: 640, height: 480 },
  segmenterRes: { width: 320, height: 240 },
  datasetName: 'extracted',
}

export interface ExtractionResult {
  manifestPath: string
  processed: string[]
  skipped: Array<{ image: string; reason: string }>
  segmentCounts: number[]
}

const IMAGE_EXTENSIONS = new Set(['.png', '.ppm'])

export function listImages(dir: string): string[] {
  return fs
    .readdirSync(dir)
    .filter(f => IMAGE_EXTENSIONS.has(path.extname(f).toLowerCase()))
    .sort()
    .map(f => path.join(dir, f))
}

/** segments smaller than this never survive extraction */
export const MIN_SEGMENT_PIXELS = 3

export function extractImage(
  imagePath: string,
  config: ExtractionConfig
): { maskData: Buffer; featureData: Buffer; segmentCount: number } {
  const image = loadImage(imagePath)
  const encoderInput = resize(image, config.encoderRes.width, config.encoderRes.height)
  const grid = encode(encoderInput)
  const featureData = encodeTensor({
    dtype: 'f32',
    dims: [grid.gridHeight, grid.gridWidth, grid.dim],
    data: grid.data,
  })

  const segmenterInput = resize(
    image,
    config.segmenterRes.width,
    config.segmenterRes.height
  )
  const minArea = Math.max(MIN_SEGMENT_PIXELS, config.segmenter?.minArea ?? 24)
  const bitmaps = segment(toPlanes(segmenterInput), {
    ...config.segmenter,
    minArea,
  })
  const maskSet: MaskSet = {
    height: config.segmenterRes.height,
    width: config.segmenterRes.width,
    segments: bitmaps.map(b =>
      maskFromBitmap(b, config.segmenterRes.height, config.segmenterRes.width)
    ),
  }
  return {
    maskData: encodeMasks(maskSet),
    featureData,
    segmentCount: bitmaps.length,
  }
}

export function extract(
  imagePaths: string[],
  config: ExtractionConfig,
  queryPaths: string[] = []
): ExtractionResult {
  fs.mkdirSync(config.outDir, { recursive: true })
  const result: ExtractionResult = {
    manifestPath: path.join(config.outDir, 'manifest.json'),
    processed: [],
    skipped: [],
    segmentCounts: [],
  }

  const processSplit = (paths: string[], split: 'reference' | 'query') => {
    const entries: ManifestEntry[] = []
    for (const [index, imagePath] of paths.entries()) {
      const imageId = path.basename(imagePath).replace(/\.[^.]+$/, '')
      try {
        const { maskData, featureData, segmentCount } = extractImage(
          imagePath,
          config
        )
        const maskName = `${imageId}.svm`
        const featName = `${imageId}.svt`
        writeFileAtomic(path.join(config.outDir, maskName), maskData)
        writeFileAtomic(path.join(config.outDir, featName), featureData)
        entries.push({
          image_id: imageId,
          mask_path: maskName,
          feature_path: featName,
          frame_index: index,
        })
        result.processed.push(imagePath)
        result.segmentCounts.push(segmentCount)
      } catch (err) {
        const reason = err instanceof Error ? err.message : String(err)
        console.error(`skipping ${imagePath}: ${reason}`)
        result.skipped.push({ image: imagePath, reason })
      }
    }
    return entries
  }

  const manifest: Manifest = {
    name: config.datasetName,
    reference: processSplit(imagePaths, 'reference'),
    query: processSplit(queryPaths, 'query'),
  }
  writeFileAtomic(result.manifestPath, encodeManifest(manifest))
  return result
}

export function parseResolution(text: string): Resolution {
  const match = /^(\d+)x(\d+)$/.exec(text)
  if (!match) throw new Error(`bad resolution ${text}; expected WxH like 640x480`)
  return { width: parseInt(match[1], 10), height: parseInt(match[2], 10) }
}

export { CELL_SIZE }
