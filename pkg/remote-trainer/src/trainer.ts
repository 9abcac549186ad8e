/**
 * Train a decoded network briefly and score it: primary is validation
 * accuracy, raw_secondary is the trainable-parameter count.
 */
import * as tf from "@tensorflow/tfjs";

import { ToyDataset } from "./datasets.js";
import { Network } from "./interchange.js";
import { buildModel } from "./model.js";

export interface TrainConfig {
  epochs?: number;
  batch_size?: number;
  [key: string]: unknown;
}

export interface Score {
  primary: number;
  rawSecondary: number;
}

function optimizerFrom(globals: Record<string, unknown>): tf.Optimizer {
  const lr =
    typeof globals["learning_rate"] === "number"
      ? (globals["learning_rate"] as number)
      : 1e-3;
  const name = typeof globals["optimizer"] === "string" ? globals["optimizer"] : "adam";
  switch (name) {
    case "adam":
      return tf.train.adam(lr);
    case "sgd":
      return tf.train.sgd(lr);
    case "rmsprop":
      return tf.train.rmsprop(lr);
    default:
      throw new Error(`unknown optimizer '${name}'`);
  }
}

export async function trainAndScore(
  net: Network,
  dataset: ToyDataset,
  config: TrainConfig,
  seed = 7,
): Promise<Score> {
  const epochs = config.epochs ?? 3;
  if (!Number.isInteger(epochs) || epochs < 1) {
    throw new RangeError("epochs must be an integer of at least 1");
  }
  const batchSize =
    typeof config.batch_size === "number" && config.batch_size >= 1
      ? Math.floor(config.batch_size)
      : 32;

  const { model, paramCount } = buildModel(net, seed);
  try {
    if (model.outputs.length !== 1) {
      throw new Error("scoring expects a single-output network");
    }
    // The head projects without a softmax, so cap the graph for training.
    const probs = tf.layers
      .activation({ activation: "softmax", name: "score_softmax" })
      .apply(model.outputs[0]) as tf.SymbolicTensor;
    const trainable = tf.model({ inputs: model.inputs, outputs: probs });
    trainable.compile({
      optimizer: optimizerFrom(net.globals),
      loss: "categoricalCrossentropy",
    });

    // Data is generated pre-shuffled; fit must not reshuffle or the run
    // stops being reproducible for a fixed seed.
    const history = await trainable.fit(dataset.trainX, dataset.trainY, {
      epochs,
      batchSize,
      shuffle: false,
      verbose: 0,
    });
    const losses = history.history["loss"] as number[];
    if (losses.some((l) => !Number.isFinite(l))) {
      throw new Error("training diverged");
    }

    const accuracy = tf.tidy(() => {
      const preds = trainable.predict(dataset.valX) as tf.Tensor;
      const hits = preds
        .argMax(-1)
        .equal(dataset.valY.argMax(-1))
        .mean()
        .dataSync()[0];
      return hits;
    });
    return { primary: accuracy, rawSecondary: paramCount };
  } finally {
    model.dispose();
  }
}
