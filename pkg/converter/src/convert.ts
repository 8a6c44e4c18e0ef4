/**
 * VGG-16 weight export: pull the ten convolution layers through conv4_3
 * out of a safetensors checkpoint and serialize them as BLW1, with a JSON
 * manifest of shapes, per-tensor CRC-32 and the input-normalization tag.
 *
 * Checkpoints may name layers directly (conv1_1.weight / conv1_1.bias,
 * .kernel also accepted) or in torchvision order (features.0.weight ...).
 * Values are copied byte-exact; a checkpoint that declares a different
 * input normalization than mean/std in [0,1] space is refused rather than
 * transformed.
 */

import { crc32 } from "./crc32.js";
import { BlwTensor, encodeBlw } from "./blw.js";
import { Checkpoint, CheckpointError, TensorEntry } from "./safetensors.js";

export const NORMALIZATION_TAG = "mean-std-0-1";

/** Layer name, torchvision features index, out channels, in channels. */
const VGG_PLAN: [string, number, number, number][] = [
  ["conv1_1", 0, 64, 3],
  ["conv1_2", 2, 64, 64],
  ["conv2_1", 5, 128, 64],
  ["conv2_2", 7, 128, 128],
  ["conv3_1", 10, 256, 128],
  ["conv3_2", 12, 256, 256],
  ["conv3_3", 14, 256, 256],
  ["conv4_1", 17, 512, 256],
  ["conv4_2", 19, 512, 512],
  ["conv4_3", 21, 512, 512],
];

export interface ManifestTensor {
  name: string;
  shape: number[];
  crc32: number;
}

export interface ExportManifest {
  format: "BLW1";
  normalization: typeof NORMALIZATION_TAG;
  total_bytes: number;
  tensors: ManifestTensor[];
}

export class ConvertError extends Error {}

function shapesEqual(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}

function findTensor(
  checkpoint: Checkpoint,
  layer: string,
  index: number,
  kind: "weight" | "bias",
): TensorEntry {
  const candidates = [
    `${layer}.${kind}`,
    `${layer}.${kind === "weight" ? "kernel" : "bias"}`,
    `features.${index}.${kind}`,
  ];
  for (const name of candidates) {
    const entry = checkpoint.tensors.get(name);
    if (entry) return entry;
  }
  throw new ConvertError(
    `checkpoint is missing layer ${layer} (looked for ${candidates.join(", ")})`,
  );
}

export function convertCheckpoint(checkpoint: Checkpoint): {
  blw: Uint8Array;
  manifest: ExportManifest;
} {
  const declared = checkpoint.metadata["normalization"];
  if (declared !== undefined && declared !== NORMALIZATION_TAG) {
    throw new ConvertError(
      `checkpoint declares normalization ${JSON.stringify(declared)}; ` +
        `only ${JSON.stringify(NORMALIZATION_TAG)} can be exported without ` +
        `transforming the weights`,
    );
  }

  const tensors: BlwTensor[] = [];
  for (const [layer, index, cout, cin] of VGG_PLAN) {
    const kernel = findTensor(checkpoint, layer, index, "weight");
    const wantKernel = [cout, cin, 3, 3];
    if (!shapesEqual(kernel.shape, wantKernel)) {
      throw new ConvertError(
        `${layer} kernel has shape ${JSON.stringify(kernel.shape)}, ` +
          `expected ${JSON.stringify(wantKernel)}`,
      );
    }
    const bias = findTensor(checkpoint, layer, index, "bias");
    if (!shapesEqual(bias.shape, [cout])) {
      throw new ConvertError(
        `${layer} bias has shape ${JSON.stringify(bias.shape)}, expected [${cout}]`,
      );
    }
    tensors.push({ name: `${layer}.kernel`, shape: kernel.shape, bytes: kernel.bytes });
    tensors.push({ name: `${layer}.bias`, shape: bias.shape, bytes: bias.bytes });
  }

  const blw = encodeBlw(tensors);
  const manifest: ExportManifest = {
    format: "BLW1",
    normalization: NORMALIZATION_TAG,
    total_bytes: blw.length,
    tensors: tensors.map((t) => ({
      name: t.name,
      shape: t.shape,
      crc32: crc32(t.bytes),
    })),
  };
  return { blw, manifest };
}

export { CheckpointError };
