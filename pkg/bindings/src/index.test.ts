/**
 * Binding parity suite: everything here compares the bindings against the
 * core invoked directly, over the same interchange files, so a drift in
 * either layer shows up as a byte or 1e-12 mismatch.
 *
 * Needs the core package importable (`python3 -m fragvqa.cli`), or set
 * FRAGVQA_CLI to the command that runs it.
 */

import assert from "node:assert/strict";
import { execFile } from "node:child_process";
import { mkdtemp, readFile, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";
import test from "node:test";
import { promisify } from "node:util";

import {
  CoreError,
  FragmentResult,
  SamplingOptions,
  VideoArray,
  krcc,
  loss_fusion,
  plcc,
  sample_fragment,
  sampled_fraction,
  srcc,
} from "./index.js";

const execFileAsync = promisify(execFile);

const CLI = process.env.FRAGVQA_CLI
  ? process.env.FRAGVQA_CLI.split(/\s+/).filter(Boolean)
  : ["python3", "-m", "fragvqa.cli"];

async function cli(args: string[]): Promise<string> {
  const { stdout } = await execFileAsync(CLI[0], [...CLI.slice(1), ...args], {
    maxBuffer: 64 * 1024 * 1024,
  });
  return stdout;
}

/** Deterministic 32-bit LCG so the "random" pairs are stable run to run. */
function lcg(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0;
    return state;
  };
}

function randomVideo(next: () => number): VideoArray {
  const t = 8 + (next() % 16);
  const h = 24 + (next() % 40);
  const w = 24 + (next() % 40);
  const c = next() % 2 ? 3 : 1;
  const data = new Uint8Array(t * h * w * c);
  for (let i = 0; i < data.length; i++) data[i] = next() & 0xff;
  return { data, shape: [t, h, w, c] };
}

function randomConfig(next: () => number, shape: readonly number[]): SamplingOptions {
  const [t, h, w] = shape;
  const gt = 1 + (next() % Math.min(4, t >> 1));
  const gf = 1 + (next() % Math.min(3, Math.floor(Math.min(h, w) / 4)));
  const tf = Math.max(1, Math.floor(Math.floor(t / gt) / (1 + (next() % 2))));
  const sf = Math.max(
    1,
    Math.floor(Math.floor(Math.min(h, w) / gf) / (1 + (next() % 2))),
  );
  return {
    temporal_segments: gt,
    spatial_grids: gf,
    frames_per_cube: tf,
    patch_side: sf,
    seed: next() % 100000,
    alignment: next() % 2 ? "per_clip" : "per_cube",
    offset_policy: next() % 4 ? "random" : "centered",
    temporal_policy: next() % 5 ? "segmented" : "dense",
  };
}

/** Run the core's `sample` directly on the same interchange files. */
async function cliSample(
  video: VideoArray,
  config: SamplingOptions,
): Promise<{ bytes: Buffer; sidecar: { offsets: number[][] } }> {
  const dir = await mkdtemp(join(tmpdir(), "fragvqa-test-"));
  try {
    const [t, h, w, c] = video.shape;
    const blob = join(dir, "video.bin");
    await writeFile(blob, Buffer.from(video.data));
    await writeFile(
      blob + ".json",
      JSON.stringify({ t, h, w, c, dtype: "u8", endianness: "le" }),
    );
    const out = join(dir, "fragment.bin");
    await cli([
      "sample", "--input", blob,
      "--gt", String(config.temporal_segments),
      "--gf", String(config.spatial_grids),
      "--tf", String(config.frames_per_cube),
      "--sf", String(config.patch_side),
      "--seed", String(config.seed ?? 0),
      "--align", config.alignment ?? "per_cube",
      "--offset-policy", config.offset_policy ?? "random",
      "--temporal", config.temporal_policy ?? "segmented",
      "--out", out,
    ]);
    return {
      bytes: await readFile(out),
      sidecar: JSON.parse(await readFile(out + ".json", "utf8")),
    };
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}

test("binding fragments are byte-identical to the CLI on 20 random pairs", async () => {
  const next = lcg(0xf7a9);
  for (let pair = 0; pair < 20; pair++) {
    const video = randomVideo(next);
    const config = randomConfig(next, video.shape);
    const bound: FragmentResult = await sample_fragment(video, config);
    const direct = await cliSample(video, config);
    assert.ok(
      direct.bytes.equals(Buffer.from(bound.data)),
      `pair ${pair}: fragment bytes differ for ${JSON.stringify(config)}`,
    );
    assert.deepEqual(bound.offsets, direct.sidecar.offsets, `pair ${pair}: offsets`);
    const [ft, fs] = [
      config.temporal_segments * config.frames_per_cube,
      config.spatial_grids * config.patch_side,
    ];
    assert.deepEqual([...bound.shape], [ft, fs, fs, video.shape[3]]);
  }
});

test("identity config returns the input bytes", async () => {
  const next = lcg(1);
  const data = new Uint8Array(6 * 32 * 32 * 3);
  for (let i = 0; i < data.length; i++) data[i] = next() & 0xff;
  const video: VideoArray = { data, shape: [6, 32, 32, 3] };
  const frag = await sample_fragment(video, {
    temporal_segments: 1,
    spatial_grids: 1,
    frames_per_cube: 6,
    patch_side: 32,
  });
  assert.ok(Buffer.from(frag.data).equals(Buffer.from(data)));
});

test("flagship geometry on a zero 720p clip", async () => {
  const video: VideoArray = {
    data: new Uint8Array(300 * 720 * 1280),
    shape: [300, 720, 1280, 1],
  };
  const frag = await sample_fragment(video, {
    temporal_segments: 8,
    spatial_grids: 7,
    frames_per_cube: 4,
    patch_side: 32,
    seed: 1,
  });
  assert.deepEqual([...frag.shape], [32, 224, 224, 1]);
  assert.ok(frag.data.every((v) => v === 0));
});

test("bound metrics and losses match the core within 1e-12", async () => {
  const next = lcg(77);
  for (let round = 0; round < 10; round++) {
    const n = 5 + (next() % 30);
    const pred = Array.from({ length: n }, () => (next() % 2000) / 100 - 10);
    const gt = Array.from({ length: n }, () => (next() % 2000) / 100 - 10);
    const dir = await mkdtemp(join(tmpdir(), "fragvqa-test-"));
    try {
      const predPath = join(dir, "pred.csv");
      const gtPath = join(dir, "gt.csv");
      await writeFile(predPath, pred.map(String).join("\n") + "\n");
      await writeFile(gtPath, gt.map(String).join("\n") + "\n");
      const core = JSON.parse(
        await cli(["metrics", "--pred", predPath, "--gt", gtPath, "--json"]),
      );
      assert.ok(Math.abs((await plcc(pred, gt)) - core.plcc) <= 1e-12);
      assert.ok(Math.abs((await srcc(pred, gt)) - core.srcc) <= 1e-12);
      assert.ok(Math.abs((await krcc(pred, gt)) - core.krcc) <= 1e-12);
      const coreLoss = JSON.parse(
        await cli(["loss", "--pred", predPath, "--gt", gtPath, "--json"]),
      );
      const bound = await loss_fusion(pred, gt);
      for (const key of ["lin", "mono", "fusion"] as const) {
        assert.ok(Math.abs(bound[key] - coreLoss[key]) <= 1e-12, key);
      }
    } finally {
      await rm(dir, { recursive: true, force: true });
    }
  }

  // known values, not just self-consistency
  assert.ok(Math.abs((await plcc([1, 2, 3], [10, 20, 30])) - 1) <= 1e-12);
  const frozen = await loss_fusion([0.5, 0.2], [1, 2], 0.3);
  assert.ok(Math.abs(frozen.mono - 0.6) <= 1e-12);
  assert.ok(Math.abs(frozen.fusion - 1.18) <= 1e-12);
});

test("sampled fractions reproduce the published numbers", async () => {
  const spatial: SamplingOptions = {
    temporal_segments: 1,
    spatial_grids: 7,
    frames_per_cube: 1,
    patch_side: 32,
  };
  const full: SamplingOptions = { ...spatial, temporal_segments: 8, frames_per_cube: 4 };
  assert.ok(Math.abs((await sampled_fraction([1, 1080, 1920], spatial, true)) - 0.0242) <= 1e-4);
  assert.ok(Math.abs((await sampled_fraction([1, 720, 1280], spatial, true)) - 0.0544) <= 1e-4);
  assert.ok(Math.abs((await sampled_fraction([300, 720, 1280], full)) - 0.0058) <= 1e-4);
});

test("core errors surface as CoreError; bad arrays are rejected locally", async () => {
  const tiny: VideoArray = { data: new Uint8Array(4 * 16 * 16), shape: [4, 16, 16, 1] };
  await assert.rejects(
    sample_fragment(tiny, {
      temporal_segments: 1,
      spatial_grids: 7,
      frames_per_cube: 1,
      patch_side: 32,
    }),
    (err: unknown) => err instanceof CoreError && /axis/.test((err as Error).message),
  );
  await assert.rejects(
    sample_fragment({ data: new Uint8Array(10), shape: [4, 16, 16, 1] }, {
      temporal_segments: 1,
      spatial_grids: 1,
      frames_per_cube: 1,
      patch_side: 16,
    }),
    TypeError,
  );
});

test("sampling leaves the event loop free", async () => {
  const video = randomVideo(lcg(9));
  const config = randomConfig(lcg(10), video.shape);
  let ticks = 0;
  const timer = setInterval(() => {
    ticks += 1;
  }, 5);
  try {
    await Promise.all([sample_fragment(video, config), sample_fragment(video, config)]);
  } finally {
    clearInterval(timer);
  }
  assert.ok(ticks > 0, "event loop never ticked while sampling ran");
});
