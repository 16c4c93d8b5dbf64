/**
 * Node bindings for the fragvqa core: grid mini-cube fragment sampling,
 * sampled-fraction arithmetic, correlation metrics, and the fused training
 * objective.
 *
 * The core stays a separate process behind its command-line interface and
 * documented file formats (raw uint8 blobs with JSON sidecars), so these
 * bindings hold no interpreter lock of any kind: every call spawns an
 * independent child process and the Node event loop stays free while it
 * runs.  Calls are self-contained and safe to issue concurrently.
 *
 * Arrays cross the boundary as plain `Uint8Array` views plus an explicit
 * shape, the closest thing JavaScript has to a standard numeric-array
 * interchange.  Reads are zero-copy views over the bytes the core wrote.
 */

import { execFile } from "node:child_process";
import { mkdtemp, readFile, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";

const execFileAsync = promisify(execFile);

/** A core-reported failure (bad geometry, malformed input, ...), verbatim. */
export class CoreError extends Error {
  override name = "CoreError";
}

/** A dense uint8 video volume in (frames, height, width, channels) layout. */
export interface VideoArray {
  /** Contiguous row-major bytes; length must equal the shape product. */
  data: Uint8Array;
  shape: readonly [number, number, number, number];
}

/** Sampling controls; keys mirror the core's config schema. */
export interface SamplingOptions {
  temporal_segments: number;
  spatial_grids: number;
  frames_per_cube: number;
  patch_side: number;
  seed?: number;
  alignment?: "per_cube" | "per_clip";
  offset_policy?: "random" | "centered";
  temporal_policy?: "segmented" | "dense";
  /** Integer nearest-neighbor upscale of spatially undersized inputs. */
  upscale?: boolean;
}

/** A spliced fragment plus the provenance the core recorded for it. */
export interface FragmentResult {
  /** Zero-copy view over the fragment bytes, row-major. */
  data: Uint8Array;
  shape: readonly [number, number, number, number];
  dtype: "u8";
  /** One [segment, row, col, frame, top, left] entry per mini-cube. */
  offsets: number[][];
  /** The full sampling config the core resolved, seed included. */
  config: Record<string, unknown>;
  seed: number;
}

let cachedCli: string[] | undefined;

async function resolveCli(): Promise<string[]> {
  if (cachedCli) return cachedCli;
  const override = process.env.FRAGVQA_CLI;
  const candidates = override
    ? [override.split(/\s+/).filter(Boolean)]
    : [["fragvqa"], ["python3", "-m", "fragvqa.cli"]];
  for (const candidate of candidates) {
    try {
      await execFileAsync(candidate[0], [...candidate.slice(1), "--help"]);
      cachedCli = candidate;
      return candidate;
    } catch {
      // try the next spelling
    }
  }
  throw new CoreError(
    "cannot find the fragvqa CLI; install the core package or set FRAGVQA_CLI",
  );
}

async function runCli(args: string[]): Promise<string> {
  const cli = await resolveCli();
  try {
    const { stdout } = await execFileAsync(cli[0], [...cli.slice(1), ...args], {
      maxBuffer: 64 * 1024 * 1024,
    });
    return stdout;
  } catch (err) {
    const stderr = (err as { stderr?: string }).stderr;
    throw new CoreError(stderr?.trim() || String(err));
  }
}

async function runCliJson(args: string[]): Promise<Record<string, unknown>> {
  return JSON.parse(await runCli([...args, "--json"]));
}

async function inTempDir<T>(body: (dir: string) => Promise<T>): Promise<T> {
  const dir = await mkdtemp(join(tmpdir(), "fragvqa-"));
  try {
    return await body(dir);
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}

function configFlags(config: SamplingOptions): string[] {
  const flags = [
    "--gt", String(config.temporal_segments),
    "--gf", String(config.spatial_grids),
    "--tf", String(config.frames_per_cube),
    "--sf", String(config.patch_side),
  ];
  if (config.seed !== undefined) flags.push("--seed", String(config.seed));
  if (config.alignment) flags.push("--align", config.alignment);
  if (config.offset_policy) flags.push("--offset-policy", config.offset_policy);
  if (config.temporal_policy) flags.push("--temporal", config.temporal_policy);
  return flags;
}

async function writeScores(path: string, values: readonly number[]): Promise<void> {
  if (values.length === 0) throw new TypeError("empty score vector");
  // Number -> shortest round-trip decimal; the core parses it back exactly.
  await writeFile(path, values.map((v) => String(v)).join("\n") + "\n");
}

/**
 * Write a raw video volume in the core's blob + sidecar interchange format.
 * The blob write wraps the caller's view without copying.
 */
async function writeVideoBlob(dir: string, video: VideoArray): Promise<string> {
  const [t, h, w, c] = video.shape;
  for (const dim of video.shape) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new TypeError(`video shape must be positive integers, got ${video.shape}`);
    }
  }
  if (video.data.length !== t * h * w * c) {
    throw new TypeError(
      `video data has ${video.data.length} bytes, shape ${video.shape} needs ${t * h * w * c}`,
    );
  }
  const blob = join(dir, "video.bin");
  await writeFile(
    blob,
    Buffer.from(video.data.buffer, video.data.byteOffset, video.data.byteLength),
  );
  await writeFile(
    blob + ".json",
    JSON.stringify({ t, h, w, c, dtype: "u8", endianness: "le" }),
  );
  return blob;
}

/**
 * Sample one fragment from a video volume.
 *
 * The result is byte-identical to running the core's `sample` command on
 * the same bytes, config, and seed.
 */
export async function sample_fragment(
  video: VideoArray,
  config: SamplingOptions,
): Promise<FragmentResult> {
  return inTempDir(async (dir) => {
    const input = await writeVideoBlob(dir, video);
    const out = join(dir, "fragment.bin");
    const args = ["sample", "--input", input, ...configFlags(config), "--out", out];
    if (config.upscale) args.push("--upscale");
    await runCli(args);
    const [bytes, sidecarText] = await Promise.all([
      readFile(out),
      readFile(out + ".json", "utf8"),
    ]);
    const sidecar = JSON.parse(sidecarText) as {
      shape: [number, number, number, number];
      offsets: number[][];
      config: Record<string, unknown>;
      seed: number;
    };
    return {
      data: new Uint8Array(bytes.buffer, bytes.byteOffset, bytes.byteLength),
      shape: sidecar.shape,
      dtype: "u8",
      offsets: sidecar.offsets,
      config: sidecar.config,
      seed: sidecar.seed,
    };
  });
}

/**
 * Sampled-to-total pixel ratio for a source geometry under a config; with
 * `spatialOnly` the temporal axis is ignored.
 */
export async function sampled_fraction(
  dims: readonly [number, number, number],
  config: SamplingOptions,
  spatialOnly = false,
): Promise<number> {
  const payload = await runCliJson([
    "fraction",
    "--frames", String(dims[0]),
    "--height", String(dims[1]),
    "--width", String(dims[2]),
    ...configFlags(config),
  ]);
  return payload[spatialOnly ? "spatial_fraction" : "fraction"] as number;
}

async function correlations(
  pred: readonly number[],
  gt: readonly number[],
): Promise<Record<string, number>> {
  return (await inTempDir(async (dir) => {
    const predPath = join(dir, "pred.csv");
    const gtPath = join(dir, "gt.csv");
    await Promise.all([writeScores(predPath, pred), writeScores(gtPath, gt)]);
    return runCliJson(["metrics", "--pred", predPath, "--gt", gtPath]);
  })) as Record<string, number>;
}

/** Pearson linear correlation between predictions and labels. */
export async function plcc(
  pred: readonly number[],
  gt: readonly number[],
): Promise<number> {
  return (await correlations(pred, gt)).plcc;
}

/** Spearman rank-order correlation (fractional ranks, tie-aware). */
export async function srcc(
  pred: readonly number[],
  gt: readonly number[],
): Promise<number> {
  return (await correlations(pred, gt)).srcc;
}

/** Kendall rank-order correlation, tau-b. */
export async function krcc(
  pred: readonly number[],
  gt: readonly number[],
): Promise<number> {
  return (await correlations(pred, gt)).krcc;
}

/**
 * Linearity + weighted monotonicity objective; returns `lin`, `mono`, and
 * their fused sum exactly as the core computes them.
 */
export async function loss_fusion(
  pred: readonly number[],
  gt: readonly number[],
  monoWeight?: number,
): Promise<{ lin: number; mono: number; fusion: number }> {
  return (await inTempDir(async (dir) => {
    const predPath = join(dir, "pred.csv");
    const gtPath = join(dir, "gt.csv");
    await Promise.all([writeScores(predPath, pred), writeScores(gtPath, gt)]);
    const args = ["loss", "--pred", predPath, "--gt", gtPath];
    if (monoWeight !== undefined) args.push("--lambda", String(monoWeight));
    return runCliJson(args);
  })) as { lin: number; mono: number; fusion: number };
}
