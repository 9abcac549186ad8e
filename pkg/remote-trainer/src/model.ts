/**
 * Decode an interchange network into a runnable tfjs model.
 *
 * The decoded model's trainable-parameter count must equal the evolution
 * server's count for the same bytes, including weight sharing: layers that
 * carry the same shared_key and signature reuse one layer instance, so the
 * model counts their weights once.
 */
import * as tf from "@tensorflow/tfjs";

import {
  InterchangeError,
  Layer,
  Network,
  PARAMETERIZED_KINDS,
  inputShape,
  parseNetwork,
  positiveInt,
  stringAttr,
} from "./interchange.js";

export interface BuiltModel {
  model: tf.LayersModel;
  paramCount: number;
}

const ACTIVATIONS: ReadonlySet<string> = new Set([
  "relu",
  "linear",
  "elu",
  "selu",
  "tanh",
  "sigmoid",
  "softmax",
  "softplus",
]);

type InitArgs = { seed: number };
type Initializer = ReturnType<typeof tf.initializers.glorotUniform>;
const INITIALIZERS: Record<string, (a: InitArgs) => Initializer> = {
  glorot: (a) => tf.initializers.glorotUniform(a),
  glorot_uniform: (a) => tf.initializers.glorotUniform(a),
  glorot_normal: (a) => tf.initializers.glorotNormal(a),
  he: (a) => tf.initializers.heNormal(a),
  he_normal: (a) => tf.initializers.heNormal(a),
  he_uniform: (a) => tf.initializers.heUniform(a),
};

function activationOf(layer: Layer): string {
  const token = stringAttr(layer, "activation");
  if (!ACTIVATIONS.has(token)) {
    throw new InterchangeError(
      `layer '${layer.id}': unknown activation '${token}'`,
    );
  }
  return token;
}

function initializerOf(layer: Layer, seed: number): Initializer {
  const token = stringAttr(layer, "initializer");
  const make = INITIALIZERS[token];
  if (!make) {
    throw new InterchangeError(
      `layer '${layer.id}': unknown initializer '${token}'`,
    );
  }
  return make({ seed });
}

function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

function layerSeed(id: string, base: number): number {
  // Positive 31-bit value; tfjs initializer seeds must be plain ints.
  return ((fnv1a(id) ^ base) & 0x7fffffff) + 1;
}

function featuresOf(tensor: tf.SymbolicTensor): number {
  const last = tensor.shape[tensor.shape.length - 1];
  if (typeof last !== "number") {
    throw new InterchangeError("inbound tensor has no feature dimension");
  }
  return last;
}

/** Signature the server uses to decide when a shared_key may coalesce. */
function sharingKey(layer: Layer, inFeatures: number): string {
  const a = layer.attrs;
  return [
    String(a["shared_key"]),
    layer.op_kind,
    inFeatures,
    a["filters"] ?? "",
    a["kernel_size"] ?? "",
    a["units"] ?? "",
  ].join("|");
}

export function buildModel(net: Network, seed = 7): BuiltModel {
  const tensors = new Map<string, tf.SymbolicTensor>();
  const shared = new Map<string, tf.layers.Layer>();

  const weightedLayer = (layer: Layer, inbound: tf.SymbolicTensor): tf.layers.Layer => {
    const sd = layerSeed(layer.id, seed);
    const make = (): tf.layers.Layer => {
      switch (layer.op_kind) {
        case "dense":
          if (inbound.shape.length !== 2) {
            throw new InterchangeError(
              `layer '${layer.id}': dense requires a flat input`,
            );
          }
          return tf.layers.dense({
            name: layer.id,
            units: positiveInt(layer, "units"),
            activation: activationOf(layer) as never,
            kernelInitializer: initializerOf(layer, sd),
          });
        case "conv1d":
          return tf.layers.conv1d({
            name: layer.id,
            filters: positiveInt(layer, "filters"),
            kernelSize: positiveInt(layer, "kernel_size"),
            padding: "same",
            activation: activationOf(layer) as never,
            kernelInitializer: initializerOf(layer, sd),
          });
        case "conv2d":
          return tf.layers.conv2d({
            name: layer.id,
            filters: positiveInt(layer, "filters"),
            kernelSize: positiveInt(layer, "kernel_size"),
            padding: "same",
            activation: activationOf(layer) as never,
            kernelInitializer: initializerOf(layer, sd),
          });
        case "lstm":
          return tf.layers.lstm({
            name: layer.id,
            units: positiveInt(layer, "units"),
            activation: activationOf(layer) as never,
            returnSequences: true,
            kernelInitializer: initializerOf(layer, sd),
            recurrentInitializer: tf.initializers.orthogonal({ seed: sd }),
          });
        case "gru":
          // tfjs only implements the single-bias GRU variant, which is the
          // same 3*((in+h)*h + h) bookkeeping the server counts.
          return tf.layers.gru({
            name: layer.id,
            units: positiveInt(layer, "units"),
            activation: activationOf(layer) as never,
            returnSequences: true,
            kernelInitializer: initializerOf(layer, sd),
            recurrentInitializer: tf.initializers.orthogonal({ seed: sd }),
          });
        default:
          throw new InterchangeError(
            `layer '${layer.id}': unknown op_kind '${layer.op_kind}'`,
          );
      }
    };

    if ("shared_key" in layer.attrs) {
      const key = sharingKey(layer, featuresOf(inbound));
      const hit = shared.get(key);
      if (hit) {
        return hit;
      }
      const fresh = make();
      shared.set(key, fresh);
      return fresh;
    }
    return make();
  };

  for (const layer of net.layers) {
    const sources = layer.inbound.map((id) => tensors.get(id)!);
    let out: tf.SymbolicTensor;
    try {
      switch (layer.op_kind) {
        case "input": {
          const shape = inputShape(net);
          out = tf.input({ name: layer.id, shape });
          break;
        }
        case "output":
          out = sources[0];
          break;
        case "dropout":
          out = tf.layers
            .dropout({
              name: layer.id,
              rate: rateOf(layer),
              seed: layerSeed(layer.id, seed),
            })
            .apply(sources[0]) as tf.SymbolicTensor;
          break;
        case "max_pool": {
          const pool = positiveInt(layer, "pool_size");
          const rank = sources[0].shape.length;
          if (rank === 3) {
            out = tf.layers
              .maxPooling1d({ name: layer.id, poolSize: pool, padding: "same" })
              .apply(sources[0]) as tf.SymbolicTensor;
          } else if (rank === 4) {
            out = tf.layers
              .maxPooling2d({ name: layer.id, poolSize: pool, padding: "same" })
              .apply(sources[0]) as tf.SymbolicTensor;
          } else {
            throw new InterchangeError(
              `layer '${layer.id}': max_pool needs a windowed input`,
            );
          }
          break;
        }
        case "flatten":
          // Already-flat tensors pass through; tfjs flatten insists on
          // rank >= 3 and the server treats this case as a no-op anyway.
          out =
            sources[0].shape.length > 2
              ? (tf.layers
                  .flatten({ name: layer.id })
                  .apply(sources[0]) as tf.SymbolicTensor)
              : sources[0];
          break;
        case "concat_merge":
          out = tf.layers
            .concatenate({ name: layer.id, axis: -1 })
            .apply(sources) as tf.SymbolicTensor;
          break;
        default:
          if (!PARAMETERIZED_KINDS.has(layer.op_kind)) {
            throw new InterchangeError(
              `layer '${layer.id}': unknown op_kind '${layer.op_kind}'`,
            );
          }
          out = weightedLayer(layer, sources[0]).apply(
            sources[0],
          ) as tf.SymbolicTensor;
      }
    } catch (err) {
      if (err instanceof InterchangeError) {
        throw err;
      }
      throw new InterchangeError(
        `layer '${layer.id}': ${err instanceof Error ? err.message : String(err)}`,
      );
    }
    tensors.set(layer.id, out);
  }

  const model = tf.model({
    inputs: net.inputs.map((id) => tensors.get(id)!),
    outputs: net.outputs.map((id) => tensors.get(id)!),
  });
  return { model, paramCount: model.countParams() };
}

function rateOf(layer: Layer): number {
  const v = layer.attrs["rate"];
  if (typeof v !== "number" || v < 0 || v >= 1) {
    throw new InterchangeError(`layer '${layer.id}': rate must lie in [0, 1)`);
  }
  return v;
}

/** Parse bytes and build in one step; everything a task handler needs. */
export function decodeNetwork(text: string, seed = 7): { net: Network } & BuiltModel {
  const net = parseNetwork(text);
  const built = buildModel(net, seed);
  return { net, ...built };
}
