#!/usr/bin/env node
/**
 * extract --images DIR --out DIR [--query-images DIR]
 *         [--encoder-res 640x480] [--segmenter-res 320x240] [--name NAME]
 */

import { DEFAULT_CONFIG, extract, listImages, parseResolution } from './extract'

function main(argv: string[]): number {
  const args = new Map<string, string>()
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith('--') || i + 1 >= argv.length) {
      console.error(`bad argument: ${argv[i]}`)
      return 2
    }
    args.set(argv[i].slice(2), argv[i + 1])
  }
  const imagesDir = args.get('images')
  const outDir = args.get('out')
  if (!imagesDir || !outDir) {
    console.error(
      'usage: extract --images DIR --out DIR [--query-images DIR] ' +
        '[--encoder-res 640x480] [--segmenter-res 320x240] [--name NAME]'
    )
    return 2
  }
  const config = {
    ...DEFAULT_CONFIG,
    outDir,
    encoderRes: args.has('encoder-res')
      ? parseResolution(args.get('encoder-res')!)
      : DEFAULT_CONFIG.encoderRes,
    segmenterRes: args.has('segmenter-res')
      ? parseResolution(args.get('segmenter-res')!)
      : DEFAULT_CONFIG.segmenterRes,
    datasetName: args.get('name') ?? DEFAULT_CONFIG.datasetName,
  }
  const queryDir = args.get('query-images')
  const result = extract(
    listImages(imagesDir),
    config,
    queryDir ? listImages(queryDir) : []
  )
  const avg =
    result.segmentCounts.reduce((a, b) => a + b, 0) /
    Math.max(1, result.segmentCounts.length)
  console.log(
    `extracted ${result.processed.length} images ` +
      `(skipped ${result.skipped.length}), avg ${avg.toFixed(1)} segments/image`
  )
  console.log(`manifest: ${result.manifestPath}`)
  return 0
}

process.exit(main(process.argv.slice(2)))
