import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";
import { afterAll, describe, expect, it } from "vitest";
import { readPredictionMap } from "../src/wire";
import { tmpDir } from "./helpers";

// Full exchange with the pipeline over the file contracts only: synthetic
// slides go through segment/grid/label/export-patches, the trainer learns
// from the exports, its maps land back in the slide dirs, and the pipeline's
// own eval grades them on held-out slides.

const CLI = path.resolve("dist/cli.js");

function run(cmd: string, args: string[], cwd: string): string {
  const res = spawnSync(cmd, args, { cwd, encoding: "utf-8" });
  if (res.status !== 0) {
    throw new Error(
      `${cmd} ${args.join(" ")} exited ${res.status}:\n${res.stdout}\n${res.stderr}`
    );
  }
  return res.stdout;
}

function magfuse(cwd: string, ...args: string[]): string {
  return run("python3", ["-m", "magfuse.cli", ...args], cwd);
}

function trainer(cwd: string, ...args: string[]): string {
  return run(process.execPath, [CLI, ...args], cwd);
}

function subdirs(root: string): string[] {
  return fs
    .readdirSync(root)
    .map((d) => path.join(root, d))
    .filter((d) => fs.statSync(d).isDirectory())
    .sort();
}

function countPatches(root: string): number {
  let n = 0;
  for (const dir of subdirs(root)) {
    n += fs.readdirSync(dir).filter((f) => f.endsWith(".ppm")).length;
  }
  return n;
}

function mean(xs: number[]): number {
  return xs.reduce((a, b) => a + b, 0) / xs.length;
}

describe("trainer round trip against the pipeline", () => {
  const root = tmpDir("roundtrip-");
  afterAll(() => {
    fs.rmSync(root, { recursive: true, force: true });
  });

  it("trains on pipeline exports and scores held-out slides at AUROC >= 0.9", () => {
    expect(fs.existsSync(CLI), "dist/cli.js missing - run `npm run build` first").toBe(true);
    const t0 = Date.now();

    const SYNTH = [
      "--width", "4096", "--height", "4096", "--blobs", "2", "--tumors", "3",
      "--tumor-um-min", "200", "--tumor-um-max", "500", "--jobs", "1",
    ];
    magfuse(root, "synth", "--out", "train-slides", "--count", "3", "--seed", "7700", ...SYNTH);
    magfuse(root, "synth", "--out", "heldout-slides", "--count", "2", "--seed", "8800", ...SYNTH);
    for (const corpus of ["train-slides", "heldout-slides"]) {
      magfuse(root, "segment", "--slides", corpus, "--jobs", "1");
      magfuse(root, "grid", "--slides", corpus, "--mags", "40", "--jobs", "1");
      magfuse(root, "label", "--slides", corpus, "--mags", "40", "--min-frac", "0.25", "--jobs", "1");
    }

    // Balanced labeled exports feed training; held-out slides export bare
    // tissue patches so inference sees no labels at all.
    for (const d of subdirs(path.join(root, "train-slides"))) {
      magfuse(
        root, "export-patches", "--slides", d, "--mag", "40",
        "--out", "exports/train", "--labels", "clean", "--balance", "--seed", "1", "--jobs", "1"
      );
    }
    for (const d of subdirs(path.join(root, "heldout-slides"))) {
      magfuse(
        root, "export-patches", "--slides", d, "--mag", "40",
        "--out", "exports/heldout", "--labels", "none", "--jobs", "1"
      );
    }
    const trainDirs = subdirs(path.join(root, "exports/train"));
    expect(trainDirs.length).toBe(3);
    const trainPatches = countPatches(path.join(root, "exports/train"));
    expect(trainPatches).toBeGreaterThan(0);
    expect(trainPatches).toBeLessThanOrEqual(5000);
    expect(countPatches(path.join(root, "exports/heldout"))).toBeLessThanOrEqual(5000);

    const out = trainer(
      root, "train", "--data", ...trainDirs, "--out", "ckpt",
      "--iterations", "400", "--batch-size", "64", "--seed", "7", "--log-every", "100"
    );
    expect(out).toMatch(/final loss/);
    const log = JSON.parse(fs.readFileSync(path.join(root, "ckpt/log.json"), "utf-8"));
    expect(log.loss.length).toBe(400);
    expect(mean(log.loss.slice(-50))).toBeLessThan(mean(log.loss.slice(0, 50)));

    for (const d of subdirs(path.join(root, "heldout-slides"))) {
      const slideId = path.basename(d);
      const exportDir = path.join(root, "exports/heldout", `${slideId}_40`);
      expect(fs.existsSync(exportDir), exportDir).toBe(true);
      trainer(
        root, "infer", "--ckpt", "ckpt", "--patches", exportDir,
        "--out", path.join(d, "maps"), "--name", "toy"
      );
      // wire sanity before handing the map to the pipeline
      const { header } = readPredictionMap(path.join(d, "maps"), "toy_40");
      expect(header.slide_id).toBe(slideId);
      expect(header.magnification).toBe(40);
    }

    magfuse(
      root, "eval", "--slides", "heldout-slides", "--pred", "toy_40",
      "--threshold", "0.5", "--out", "report.json", "--jobs", "1"
    );
    const report = JSON.parse(fs.readFileSync(path.join(root, "report.json"), "utf-8"));
    expect(report.n_slides).toBe(2);
    for (const s of report.slides) {
      expect(s.auroc, `slide ${s.slide_id}`).toBeGreaterThanOrEqual(0.9);
    }
    expect(report.aggregate.auroc.mean).toBeGreaterThanOrEqual(0.9);

    const elapsed = (Date.now() - t0) / 1000;
    expect(elapsed).toBeLessThan(600);
    console.log(
      `ACCEPTANCE trainer-round-trip: PASS (aggregate AUROC ` +
        `${report.aggregate.auroc.mean.toFixed(4)} over ${report.n_slides} held-out ` +
        `slides, ${trainPatches} training patches, ${elapsed.toFixed(1)}s)`
    );
  }, 600_000);
});
