/**
 * Generated toy datasets, deterministic from a seed and sized so one
 * training task finishes in seconds. Validation rows are drawn after the
 * training rows from the same stream, so the splits never overlap.
 */
import * as tf from "@tensorflow/tfjs";

export type DatasetKind = "linear" | "parity" | "digits" | "auto";

export interface ToyDataset {
  name: string;
  trainX: tf.Tensor;
  trainY: tf.Tensor;
  valX: tf.Tensor;
  valY: tf.Tensor;
  numClasses: number;
}

export const MAX_SAMPLES = 2000;

/** Small fast PRNG; the usual 32-bit mixer. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function pickKind(kind: DatasetKind, rank: number): Exclude<DatasetKind, "auto"> {
  if (kind !== "auto") {
    return kind;
  }
  if (rank === 1) return "linear";
  if (rank === 2) return "parity";
  return "digits";
}

interface Generated {
  xs: number[][];
  labels: number[];
}

// Linearly separable classes: score each sample against fixed random class
// directions and keep only samples with a clear argmax margin.
function genLinear(
  rng: () => number,
  count: number,
  features: number,
  classes: number,
): Generated {
  const directions: number[][] = [];
  for (let c = 0; c < classes; c++) {
    directions.push(Array.from({ length: features }, () => rng() * 2 - 1));
  }
  const xs: number[][] = [];
  const labels: number[] = [];
  while (xs.length < count) {
    const x = Array.from({ length: features }, () => rng() * 2 - 1);
    const scores = directions.map((w) =>
      w.reduce((acc, wi, i) => acc + wi * x[i], 0),
    );
    const order = [...scores].sort((a, b) => b - a);
    if (order[0] - order[1] < 0.4) {
      continue;
    }
    xs.push(x);
    labels.push(scores.indexOf(order[0]));
  }
  return { xs, labels };
}

// Sequence parity: the label is the count of positive pulses in channel 0,
// modulo the class count; remaining channels carry low noise.
function genParity(
  rng: () => number,
  count: number,
  steps: number,
  channels: number,
  classes: number,
): Generated {
  const xs: number[][] = [];
  const labels: number[] = [];
  for (let n = 0; n < count; n++) {
    const row: number[] = [];
    let pulses = 0;
    for (let t = 0; t < steps; t++) {
      const pulse = rng() < 0.5 ? 1 : -1;
      if (pulse > 0) pulses++;
      row.push(pulse);
      for (let c = 1; c < channels; c++) {
        row.push((rng() * 2 - 1) * 0.1);
      }
    }
    xs.push(row);
    labels.push(pulses % classes);
  }
  return { xs, labels };
}

// Glyph classification: one random binary template per class, samples are
// the template plus noise, replicated across channels.
function genDigits(
  rng: () => number,
  count: number,
  height: number,
  width: number,
  channels: number,
  classes: number,
): Generated {
  const templates: number[][] = [];
  for (let c = 0; c < classes; c++) {
    templates.push(
      Array.from({ length: height * width }, () => (rng() < 0.5 ? 0 : 1)),
    );
  }
  const xs: number[][] = [];
  const labels: number[] = [];
  for (let n = 0; n < count; n++) {
    const label = Math.floor(rng() * classes);
    const tpl = templates[label];
    const row: number[] = [];
    for (let p = 0; p < height * width; p++) {
      const v = tpl[p] * 0.8 + (rng() * 2 - 1) * 0.2;
      for (let c = 0; c < channels; c++) {
        row.push(v);
      }
    }
    xs.push(row);
    labels.push(label);
  }
  return { xs, labels };
}

export function makeDataset(
  kind: DatasetKind,
  shape: number[],
  numClasses: number,
  seed: number,
  trainSize = 256,
  valSize = 64,
): ToyDataset {
  if (trainSize + valSize > MAX_SAMPLES) {
    throw new RangeError(`dataset larger than ${MAX_SAMPLES} samples`);
  }
  if (numClasses < 2) {
    throw new RangeError("need at least 2 classes");
  }
  const resolved = pickKind(kind, shape.length);
  const rng = mulberry32(seed);
  const total = trainSize + valSize;

  let generated: Generated;
  if (resolved === "linear") {
    if (shape.length !== 1) {
      throw new RangeError("linear dataset needs a flat input shape");
    }
    generated = genLinear(rng, total, shape[0], numClasses);
  } else if (resolved === "parity") {
    if (shape.length !== 2) {
      throw new RangeError("parity dataset needs a (steps, channels) shape");
    }
    generated = genParity(rng, total, shape[0], shape[1], numClasses);
  } else {
    if (shape.length !== 3) {
      throw new RangeError("digits dataset needs a (h, w, channels) shape");
    }
    generated = genDigits(rng, total, shape[0], shape[1], shape[2], numClasses);
  }

  const toX = (rows: number[][]): tf.Tensor =>
    tf.tensor(rows.flat(), [rows.length, ...shape]);
  const toY = (labels: number[]): tf.Tensor =>
    tf.oneHot(tf.tensor1d(labels, "int32"), numClasses);

  return {
    name: `${resolved}-${seed}`,
    trainX: toX(generated.xs.slice(0, trainSize)),
    trainY: toY(generated.labels.slice(0, trainSize)),
    valX: toX(generated.xs.slice(trainSize)),
    valY: toY(generated.labels.slice(trainSize)),
    numClasses,
  };
}

export function disposeDataset(ds: ToyDataset): void {
  ds.trainX.dispose();
  ds.trainY.dispose();
  ds.valX.dispose();
  ds.valY.dispose();
}
