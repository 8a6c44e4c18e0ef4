/**
 * BLW1 writer/reader.  Little-endian, no padding or compression:
 *
 *   magic "BLW1"
 *   u32  tensor count
 *   per tensor: u16 name length, UTF-8 name, u8 ndim, u32 dims[ndim],
 *               f32 values[prod(dims)]
 */

export interface BlwTensor {
  name: string;
  shape: number[];
  /** Little-endian f32 payload. */
  bytes: Uint8Array;
}

export class BlwError extends Error {}

export function encodeBlw(tensors: BlwTensor[]): Uint8Array {
  const parts: Uint8Array[] = [];
  const head = new Uint8Array(8);
  head.set([0x42, 0x4c, 0x57, 0x31]); // "BLW1"
  new DataView(head.buffer).setUint32(4, tensors.length, true);
  parts.push(head);
  for (const t of tensors) {
    const name = new TextEncoder().encode(t.name);
    const meta = new Uint8Array(2 + name.length + 1 + 4 * t.shape.length);
    const view = new DataView(meta.buffer);
    view.setUint16(0, name.length, true);
    meta.set(name, 2);
    meta[2 + name.length] = t.shape.length;
    t.shape.forEach((d, i) => view.setUint32(2 + name.length + 1 + 4 * i, d, true));
    parts.push(meta, t.bytes);
  }
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const p of parts) {
    out.set(p, offset);
    offset += p.length;
  }
  return out;
}

export function decodeBlw(data: Uint8Array): BlwTensor[] {
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  let pos = 0;
  const take = (n: number) => {
    if (pos + n > data.length) {
      throw new BlwError(`truncated BLW payload at offset ${pos}`);
    }
    const slice = data.subarray(pos, pos + n);
    pos += n;
    return slice;
  };
  const magic = new TextDecoder().decode(take(4));
  if (magic !== "BLW1") {
    throw new BlwError(`bad magic ${JSON.stringify(magic)}`);
  }
  const count = view.getUint32(pos, true);
  pos += 4;
  const tensors: BlwTensor[] = [];
  for (let i = 0; i < count; i++) {
    const nameLen = view.getUint16(pos, true);
    pos += 2;
    const name = new TextDecoder().decode(take(nameLen));
    const ndim = take(1)[0];
    const shape: number[] = [];
    for (let d = 0; d < ndim; d++) {
      shape.push(view.getUint32(pos, true));
      pos += 4;
    }
    const bytes = take(4 * shape.reduce((a, b) => a * b, 1));
    tensors.push({ name, shape, bytes });
  }
  return tensors;
}
