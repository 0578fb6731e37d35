export { augmentPatch, hsvToRgb, rgbToHsv, AugmentRanges } from "./augment";
export { DEFAULTS, TrainConfig, makeTrainConfig } from "./config";
export {
  LabeledEntry,
  PatchDataset,
  PatchEntry,
  blockMean,
  loadExportDir,
  mergeLabeled,
} from "./dataset";
export { GridHeader, readGridHeader } from "./grid";
export { InferResult, inferMaps, inferWithModel, scoreDataset } from "./infer";
export {
  CheckpointMeta,
  buildModel,
  loadCheckpoint,
  saveCheckpoint,
} from "./model";
export { PpmFormatError, PpmImage, parsePpm, readPpm, writePpm } from "./ppm";
export { Rng } from "./rng";
export { learningRate, warmupSteps } from "./schedule";
export { TrainResult, trainClassifier } from "./train";
export { PredictionHeader, readPredictionMap, writePredictionMap } from "./wire";
