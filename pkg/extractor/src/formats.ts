/**
 * Binary file formats shared with the retrieval engine.
 *
 * Tensor ("SVT1"): magic(4) | version u8 | dtype u8 | ndim u8 | pad u8 |
 *   dims u64*ndim | row-major little-endian payload.
 * Masks ("SVM1"): magic(4) | version u8 | H u32 | W u32 | S u32 |
 *   per segment: run_count u32 then (start u32, len u32) pairs.
 *
 * Everything little-endian so files are byte-identical across platforms.
 */

import * as fs from 'fs'
import * as path from 'path'

export const TENSOR_MAGIC = 'SVT1'
export const MASK_MAGIC = 'SVM1'
export const FORMAT_VERSION = 1

export type DType = 'f32' | 'u8' | 'u32'
const DTYPE_CODES: Record<DType, number> = { f32: 1, u8: 2, u32: 3 }
const DTYPE_SIZES: Record<DType, number> = { f32: 4, u8: 1, u32: 4 }

export interface Tensor {
  dtype: DType
  dims: number[]
  /** flat row-major values */
  data: Float32Array | Uint8Array | Uint32Array
}

export function encodeTensor(tensor: Tensor): Buffer {
  const { dtype, dims, data } = tensor
  if (dims.length === 0) throw new Error('tensor needs at least one dimension')
  const count = dims.reduce((a, b) => a * b, 1)
  if (count !== data.length) {
    throw new Error(`dims ${dims} do not match payload length ${data.length}`)
  }
  const header = Buffer.alloc(8 + 8 * dims.length)
  header.write(TENSOR_MAGIC, 0, 'ascii')
  header.writeUInt8(FORMAT_VERSION, 4)
  header.writeUInt8(DTYPE_CODES[dtype], 5)
  header.writeUInt8(dims.length, 6)
  header.writeUInt8(0, 7)
  dims.forEach((d, i) => header.writeBigUInt64LE(BigInt(d), 8 + 8 * i))
  const payload = Buffer.alloc(count * DTYPE_SIZES[dtype])
  if (dtype === 'f32') {
    const arr = data as Float32Array
    for (let i = 0; i < count; i++) payload.writeFloatLE(arr[i], 4 * i)
  } else if (dtype === 'u32') {
    const arr = data as Uint32Array
    for (let i = 0; i < count; i++) payload.writeUInt32LE(arr[i], 4 * i)
  } else {
    payload.set(data as Uint8Array)
  }
  return Buffer.concat([header, payload])
}

export function decodeTensor(raw: Buffer): Tensor {
  if (raw.length < 8 || raw.toString('ascii', 0, 4) !== TENSOR_MAGIC) {
    throw new Error('bad magic')
  }
  if (raw.readUInt8(4) !== FORMAT_VERSION) throw new Error('unsupported version')
  const code = raw.readUInt8(5)
  const dtype = (Object.keys(DTYPE_CODES) as DType[]).find(
    k => DTYPE_CODES[k] === code
  )
  if (!dtype) throw new Error(`unknown dtype code ${code}`)
  const ndim = raw.readUInt8(6)
  const dims: number[] = []
  for (let i = 0; i < ndim; i++) dims.push(Number(raw.readBigUInt64LE(8 + 8 * i)))
  const count = dims.reduce((a, b) => a * b, 1)
  const offset = 8 + 8 * ndim
  if (raw.length !== offset + count * DTYPE_SIZES[dtype]) {
    throw new Error('truncated payload')
  }
  let data: Tensor['data']
  if (dtype === 'f32') {
    const arr = new Float32Array(count)
    for (let i = 0; i < count; i++) arr[i] = raw.readFloatLE(offset + 4 * i)
    data = arr
  } else if (dtype === 'u32') {
    const arr = new Uint32Array(count)
    for (let i = 0; i < count; i++) arr[i] = raw.readUInt32LE(offset + 4 * i)
    data = arr
  } else {
    data = new Uint8Array(raw.subarray(offset))
  }
  return { dtype, dims, data }
}

/** one segment = sorted, non-overlapping (start, length) runs over row-major pixels */
export type SegmentRuns = Array<[number, number]>

export interface MaskSet {
  height: number
  width: number
  segments: SegmentRuns[]
}

export function maskFromBitmap(
  bitmap: Uint8Array,
  height: number,
  width: number
): SegmentRuns {
  const runs: SegmentRuns = []
  const n = height * width
  let start = -1
  for (let i = 0; i <= n; i++) {
    const on = i < n && bitmap[i] !== 0
    if (on && start < 0) start = i
    if (!on && start >= 0) {
      runs.push([start, i - start])
      start = -1
    }
  }
  return runs
}

export function encodeMasks(masks: MaskSet): Buffer {
  const parts: Buffer[] = []
  const header = Buffer.alloc(17)
  header.write(MASK_MAGIC, 0, 'ascii')
  header.writeUInt8(FORMAT_VERSION, 4)
  header.writeUInt32LE(masks.height, 5)
  header.writeUInt32LE(masks.width, 9)
  header.writeUInt32LE(masks.segments.length, 13)
  parts.push(header)
  for (const runs of masks.segments) {
    const buf = Buffer.alloc(4 + 8 * runs.length)
    buf.writeUInt32LE(runs.length, 0)
    runs.forEach(([start, len], i) => {
      buf.writeUInt32LE(start, 4 + 8 * i)
      buf.writeUInt32LE(len, 8 + 8 * i)
    })
    parts.push(buf)
  }
  return Buffer.concat(parts)
}

export function decodeMasks(raw: Buffer): MaskSet {
  if (raw.length < 17 || raw.toString('ascii', 0, 4) !== MASK_MAGIC) {
    throw new Error('bad magic')
  }
  if (raw.readUInt8(4) !== FORMAT_VERSION) throw new Error('unsupported version')
  const height = raw.readUInt32LE(5)
  const width = raw.readUInt32LE(9)
  const count = raw.readUInt32LE(13)
  const segments: SegmentRuns[] = []
  let offset = 17
  for (let s = 0; s < count; s++) {
    if (raw.length < offset + 4) throw new Error('truncated segment table')
    const runCount = raw.readUInt32LE(offset)
    offset += 4
    if (raw.length < offset + 8 * runCount) throw new Error('truncated runs')
    const runs: SegmentRuns = []
    for (let i = 0; i < runCount; i++) {
      runs.push([raw.readUInt32LE(offset), raw.readUInt32LE(offset + 4)])
      offset += 8
    }
    segments.push(runs)
  }
  return { height, width, segments }
}

export interface ManifestEntry {
  image_id: string
  mask_path: string
  feature_path: string
  position?: [number, number]
  frame_index?: number
}

export interface Manifest {
  name: string
  reference: ManifestEntry[]
  query: ManifestEntry[]
}

function sortKeys(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(sortKeys)
  if (value && typeof value === 'object') {
    const out: Record<string, unknown> = {}
    for (const key of Object.keys(value).sort()) {
      out[key] = sortKeys((value as Record<string, unknown>)[key])
    }
    return out
  }
  return value
}

export function encodeManifest(manifest: Manifest): string {
  return JSON.stringify(sortKeys(manifest), null, 2) + '\n'
}

/** write-then-rename so readers never observe partial files */
export function writeFileAtomic(target: string, data: Buffer | string): void {
  const tmp = path.join(
    path.dirname(target),
    `.${path.basename(target)}.tmp-${process.pid}`
  )
  fs.writeFileSync(tmp, data)
  fs.renameSync(tmp, target)
}
