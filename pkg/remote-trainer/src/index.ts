export {
  FrameDecoder,
  FramingError,
  MAX_FRAME,
  canonicalJson,
  encodeFrame,
} from "./framing.js";
export {
  InterchangeError,
  Network,
  Layer,
  OP_KINDS,
  inputShape,
  outputUnits,
  parseNetwork,
} from "./interchange.js";
export { BuiltModel, buildModel, decodeNetwork } from "./model.js";
export {
  DatasetKind,
  MAX_SAMPLES,
  ToyDataset,
  disposeDataset,
  makeDataset,
  mulberry32,
} from "./datasets.js";
export { Score, TrainConfig, trainAndScore } from "./trainer.js";
export {
  PROTO_VERSION,
  ProtocolError,
  ResultFields,
  ServerMessage,
  helloMessage,
  parseServerMessage,
  pullMessage,
  resultMessage,
} from "./protocol.js";
export { WorkerOptions, runWorker } from "./worker.js";
