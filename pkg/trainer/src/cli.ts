#!/usr/bin/env node
import * as fs from "node:fs";
import * as path from "node:path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { makeTrainConfig } from "./config";
import { loadExportDir, mergeLabeled } from "./dataset";
import { inferMaps } from "./infer";
import { saveCheckpoint } from "./model";
import { trainClassifier } from "./train";

interface TrainArgs {
  data: string[];
  out: string;
  iterations: number;
  batchSize: number;
  seed: number;
  maxLr: number;
  minLr: number;
  inputSide: number;
  logEvery: number;
  augment: boolean;
}

async function runTrain(argv: TrainArgs): Promise<void> {
  const datasets = argv.data.map((d) => loadExportDir(d, argv.inputSide));
  const merged = mergeLabeled(datasets);
  const cfg = makeTrainConfig({
    magnification: merged.magnification,
    iterations: argv.iterations,
    batchSize: argv.batchSize,
    maxLr: argv.maxLr,
    minLr: argv.minLr,
    inputSide: argv.inputSide,
    seed: argv.seed,
    logEvery: argv.logEvery,
    ...(argv.augment
      ? {}
      : { brightness: 0, contrast: 0, saturation: 0, hue: 0, flips: false }),
  });
  console.log(
    `training on ${merged.entries.length} patches from ${argv.data.length} ` +
      `export dir(s) at ${merged.magnification}x`
  );
  const result = await trainClassifier(merged.entries, cfg);
  await saveCheckpoint(
    result.model,
    {
      magnification: cfg.magnification,
      inputSide: cfg.inputSide,
      iterations: cfg.iterations,
      batchSize: cfg.batchSize,
      seed: cfg.seed,
      finalLoss: result.finalLoss,
    },
    argv.out
  );
  fs.writeFileSync(
    path.join(argv.out, "log.json"),
    JSON.stringify({ loss: result.lossCurve, lr: result.lrCurve }, null, 2) + "\n"
  );
  console.log(`final loss ${result.finalLoss.toFixed(5)}; checkpoint -> ${argv.out}`);
}

interface InferArgs {
  ckpt: string;
  patches: string;
  out: string;
  name: string;
}

async function runInfer(argv: InferArgs): Promise<void> {
  const res = await inferMaps(argv.ckpt, argv.patches, argv.out, argv.name);
  console.log(
    `scored ${res.scored}/${res.cells} cells; map ${res.mapName} -> ${argv.out}`
  );
}

export async function main(args: string[]): Promise<void> {
  await yargs(args)
    .scriptName("magfuse-trainer")
    .command(
      "train",
      "train a patch classifier on exported patch directories",
      (y) =>
        y
          .option("data", {
            type: "string",
            array: true,
            demandOption: true,
            describe: "patch export dir(s), all at the same magnification",
          })
          .option("out", { type: "string", demandOption: true, describe: "checkpoint dir" })
          .option("iterations", { type: "number", default: 5000 })
          .option("batch-size", { type: "number", default: 256 })
          .option("seed", { type: "number", default: 0 })
          .option("max-lr", { type: "number", default: 1e-4 })
          .option("min-lr", { type: "number", default: 1e-5 })
          .option("input-side", { type: "number", default: 16 })
          .option("log-every", { type: "number", default: 100 })
          .option("augment", { type: "boolean", default: true }),
      (argv) => runTrain(argv as unknown as TrainArgs)
    )
    .command(
      "infer",
      "score one slide's patch export and write a wire-format map",
      (y) =>
        y
          .option("ckpt", { type: "string", demandOption: true })
          .option("patches", {
            type: "string",
            demandOption: true,
            describe: "patch export dir for the slide to score",
          })
          .option("out", {
            type: "string",
            demandOption: true,
            describe: "maps dir of the slide (receives <name>_<mag>.json/.f32)",
          })
          .option("name", { type: "string", default: "toy" }),
      (argv) => runInfer(argv as unknown as InferArgs)
    )
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      console.error(`error: ${err ? err.message : msg}`);
      process.exit(err ? 1 : 2);
    })
    .parse();
}

if (require.main === module) {
  main(hideBin(process.argv));
}
