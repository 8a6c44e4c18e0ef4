/**
 * Minimal safetensors reader: little-endian u64 header length, JSON header
 * mapping tensor name -> {dtype, shape, data_offsets}, then raw payload.
 * Only F32 tensors are accepted; the converter never transforms values.
 */

export interface TensorEntry {
  shape: number[];
  /** Raw little-endian f32 payload, byte-exact from the file. */
  bytes: Uint8Array;
}

export interface Checkpoint {
  tensors: Map<string, TensorEntry>;
  metadata: Record<string, string>;
}

export class CheckpointError extends Error {}

interface HeaderEntry {
  dtype: string;
  shape: number[];
  data_offsets: [number, number];
}

export function parseSafetensors(buffer: Uint8Array): Checkpoint {
  if (buffer.length < 8) {
    throw new CheckpointError("checkpoint too short for a safetensors header");
  }
  const view = new DataView(buffer.buffer, buffer.byteOffset, buffer.byteLength);
  const headerLength = Number(view.getBigUint64(0, true));
  if (8 + headerLength > buffer.length) {
    throw new CheckpointError("safetensors header length exceeds the file size");
  }
  let header: Record<string, unknown>;
  try {
    const text = new TextDecoder().decode(buffer.subarray(8, 8 + headerLength));
    header = JSON.parse(text);
  } catch (err) {
    throw new CheckpointError(`safetensors header is not valid JSON: ${err}`);
  }

  const dataStart = 8 + headerLength;
  const tensors = new Map<string, TensorEntry>();
  let metadata: Record<string, string> = {};
  for (const [name, info] of Object.entries(header)) {
    if (name === "__metadata__") {
      metadata = info as Record<string, string>;
      continue;
    }
    const entry = info as HeaderEntry;
    if (entry.dtype !== "F32") {
      throw new CheckpointError(
        `tensor ${name}: dtype ${entry.dtype} unsupported (convert to F32 first)`,
      );
    }
    const [start, end] = entry.data_offsets;
    const expected = 4 * entry.shape.reduce((a, b) => a * b, 1);
    if (end - start !== expected) {
      throw new CheckpointError(
        `tensor ${name}: payload is ${end - start} bytes, shape needs ${expected}`,
      );
    }
    if (dataStart + end > buffer.length) {
      throw new CheckpointError(`tensor ${name}: payload runs past end of file`);
    }
    tensors.set(name, {
      shape: entry.shape,
      bytes: buffer.subarray(dataStart + start, dataStart + end),
    });
  }
  return { tensors, metadata };
}
