import { describe, expect, it } from 'vitest'

import {
  decodeMasks,
  decodeTensor,
  encodeManifest,
  encodeMasks,
  encodeTensor,
  maskFromBitmap,
} from '../src/formats'

describe('tensor format', () => {
  it('round-trips f32 exactly', () => {
    const data = new Float32Array([0, 1, 2, 3, 4, 5])
    const raw = encodeTensor({ dtype: 'f32', dims: [2, 3], data })
    expect(raw.length).toBe(8 + 16 + 24)
    const back = decodeTensor(raw)
    expect(back.dims).toEqual([2, 3])
    expect(Array.from(back.data)).toEqual(Array.from(data))
  })

  it('emits the documented header bytes', () => {
    const raw = encodeTensor({
      dtype: 'f32',
      dims: [2, 3],
      data: new Float32Array(6),
    })
    expect(raw.subarray(0, 8)).toEqual(
      Buffer.from([0x53, 0x56, 0x54, 0x31, 1, 1, 2, 0]) // "SVT1", v1, f32, ndim 2
    )
    expect(raw.readBigUInt64LE(8)).toBe(2n)
    expect(raw.readBigUInt64LE(16)).toBe(3n)
  })

  it('round-trips u8 and u32', () => {
    for (const tensor of [
      { dtype: 'u8' as const, dims: [4], data: new Uint8Array([9, 8, 7, 6]) },
      { dtype: 'u32' as const, dims: [2, 1], data: new Uint32Array([1, 70000]) },
    ]) {
      const back = decodeTensor(encodeTensor(tensor))
      expect(back.dtype).toBe(tensor.dtype)
      expect(Array.from(back.data)).toEqual(Array.from(tensor.data))
    }
  })

  it('rejects bad magic and truncation', () => {
    const raw = encodeTensor({
      dtype: 'f32',
      dims: [2, 2],
      data: new Float32Array(4),
    })
    const corrupted = Buffer.from(raw)
    corrupted.write('NOPE', 0, 'ascii')
    expect(() => decodeTensor(corrupted)).toThrow(/bad magic/)
    expect(() => decodeTensor(raw.subarray(0, raw.length - 4))).toThrow(/truncated/)
  })

  it('rejects mismatched dims', () => {
    expect(() =>
      encodeTensor({ dtype: 'f32', dims: [3], data: new Float32Array(4) })
    ).toThrow(/match/)
  })
})

describe('mask format', () => {
  it('round-trips runs', () => {
    const masks = {
      height: 4,
      width: 4,
      segments: [
        [[0, 16]] as Array<[number, number]>,
        [[2, 3], [9, 1]] as Array<[number, number]>,
      ],
    }
    const back = decodeMasks(encodeMasks(masks))
    expect(back).toEqual(masks)
  })

  it('encodes bitmaps as sorted disjoint runs', () => {
    const bitmap = new Uint8Array([0, 1, 1, 0, 1, 0, 0, 1, 1])
    expect(maskFromBitmap(bitmap, 3, 3)).toEqual([
      [1, 2],
      [4, 1],
      [7, 2],
    ])
  })

  it('handles an empty mask set', () => {
    const back = decodeMasks(encodeMasks({ height: 2, width: 5, segments: [] }))
    expect(back.height).toBe(2)
    expect(back.width).toBe(5)
    expect(back.segments).toEqual([])
  })
})

describe('manifest', () => {
  it('serializes with sorted keys and trailing newline', () => {
    const text = encodeManifest({
      name: 'demo',
      reference: [
        { image_id: 'a', mask_path: 'a.svm', feature_path: 'a.svt', frame_index: 0 },
      ],
      query: [],
    })
    expect(text.endsWith('\n')).toBe(true)
    const doc = JSON.parse(text)
    expect(doc.name).toBe('demo')
    expect(doc.reference[0].image_id).toBe('a')
    const keys = Object.keys(doc.reference[0])
    expect(keys).toEqual([...keys].sort())
  })
})
