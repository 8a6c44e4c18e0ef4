#!/usr/bin/env node
/**
 * convert-vgg --in CHECKPOINT --out vgg16.blw --manifest vgg16.json
 *
 * Reads a safetensors checkpoint holding the VGG-16 convolutions through
 * conv4_3 and writes them as a BLW1 weight file plus a JSON manifest.
 */

import * as fs from "node:fs";
import { parseSafetensors } from "./safetensors.js";
import { convertCheckpoint } from "./convert.js";

interface CliOptions {
  input: string;
  output: string;
  manifest: string;
}

function parseArgs(argv: string[]): CliOptions {
  const opts: CliOptions = { input: "", output: "", manifest: "" };
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case "--in":
        opts.input = argv[++i] ?? "";
        break;
      case "--out":
        opts.output = argv[++i] ?? "";
        break;
      case "--manifest":
        opts.manifest = argv[++i] ?? "";
        break;
      case "--help":
      case "-h":
        console.log("usage: convert-vgg --in CHECKPOINT --out vgg16.blw --manifest vgg16.json");
        process.exit(0);
        break;
      default:
        throw new Error(`unknown argument ${argv[i]}`);
    }
  }
  for (const [flag, value] of [["--in", opts.input], ["--out", opts.output],
                               ["--manifest", opts.manifest]] as const) {
    if (!value) throw new Error(`${flag} is required`);
  }
  return opts;
}

function main(): number {
  let opts: CliOptions;
  try {
    opts = parseArgs(process.argv.slice(2));
  } catch (err) {
    console.error(`convert-vgg: ${(err as Error).message}`);
    return 1;
  }
  try {
    const raw = fs.readFileSync(opts.input);
    const checkpoint = parseSafetensors(new Uint8Array(raw.buffer, raw.byteOffset, raw.byteLength));
    const { blw, manifest } = convertCheckpoint(checkpoint);
    fs.writeFileSync(opts.output, blw);
    fs.writeFileSync(opts.manifest, JSON.stringify(manifest, null, 2) + "\n");
    console.log(
      `wrote ${manifest.tensors.length} tensors (${manifest.total_bytes} bytes) to ${opts.output}`,
    );
    return 0;
  } catch (err) {
    console.error(`convert-vgg: ${(err as Error).message}`);
    return 1;
  }
}

process.exit(main());
