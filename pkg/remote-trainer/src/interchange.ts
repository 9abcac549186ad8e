/**
 * Interchange network schema: a layer DAG in JSON with format_version "1".
 * Layers arrive in topological order; every inbound id must refer to a
 * layer defined earlier in the list.
 */
import { z } from "zod";

export class InterchangeError extends Error {}

export const OP_KINDS = [
  "input",
  "output",
  "conv1d",
  "conv2d",
  "dense",
  "lstm",
  "gru",
  "dropout",
  "max_pool",
  "flatten",
  "concat_merge",
] as const;

export type OpKind = (typeof OP_KINDS)[number];

export const PARAMETERIZED_KINDS: ReadonlySet<string> = new Set([
  "conv1d",
  "conv2d",
  "dense",
  "lstm",
  "gru",
]);

const LayerSchema = z
  .object({
    id: z.string().min(1),
    op_kind: z.string().min(1),
    attrs: z.record(z.string(), z.unknown()),
    inbound: z.array(z.string()),
  })
  .strict();

const NetworkSchema = z
  .object({
    format_version: z.string(),
    layers: z.array(LayerSchema).min(1),
    inputs: z.array(z.string()).min(1),
    outputs: z.array(z.string()).min(1),
    globals: z.record(z.string(), z.unknown()),
  })
  .strict();

export type Layer = z.infer<typeof LayerSchema>;
export type Network = z.infer<typeof NetworkSchema>;

// Attribute names each op may carry; shared_key rides on weighted ops only.
const ATTR_TABLE: Record<OpKind, readonly string[]> = {
  input: ["shape"],
  output: [],
  conv1d: ["filters", "kernel_size", "activation", "initializer", "shared_key"],
  conv2d: ["filters", "kernel_size", "activation", "initializer", "shared_key"],
  dense: ["units", "activation", "initializer", "shared_key"],
  lstm: ["units", "activation", "initializer", "shared_key"],
  gru: ["units", "activation", "initializer", "shared_key"],
  dropout: ["rate"],
  max_pool: ["pool_size"],
  flatten: [],
  concat_merge: [],
};

const REQUIRED_ATTRS: Partial<Record<OpKind, readonly string[]>> = {
  input: ["shape"],
  conv1d: ["filters", "kernel_size", "activation", "initializer"],
  conv2d: ["filters", "kernel_size", "activation", "initializer"],
  dense: ["units", "activation", "initializer"],
  lstm: ["units", "activation", "initializer"],
  gru: ["units", "activation", "initializer"],
  dropout: ["rate"],
  max_pool: ["pool_size"],
};

function checkAttrs(layer: Layer): void {
  const kind = layer.op_kind as OpKind;
  const allowed = ATTR_TABLE[kind];
  for (const key of Object.keys(layer.attrs)) {
    if (!allowed.includes(key)) {
      throw new InterchangeError(
        `layer '${layer.id}': unknown attr '${key}' for op_kind '${kind}'`,
      );
    }
  }
  for (const key of REQUIRED_ATTRS[kind] ?? []) {
    if (!(key in layer.attrs)) {
      throw new InterchangeError(
        `layer '${layer.id}': missing attr '${key}' for op_kind '${kind}'`,
      );
    }
  }
}

export function positiveInt(layer: Layer, key: string): number {
  const v = layer.attrs[key];
  if (typeof v !== "number" || !Number.isInteger(v) || v < 1) {
    throw new InterchangeError(
      `layer '${layer.id}': attr '${key}' must be a positive integer`,
    );
  }
  return v;
}

export function stringAttr(layer: Layer, key: string): string {
  const v = layer.attrs[key];
  if (typeof v !== "string" || v.length === 0) {
    throw new InterchangeError(`layer '${layer.id}': attr '${key}' must be a token`);
  }
  return v;
}

/** Parse and validate one interchange payload. */
export function parseNetwork(text: string): Network {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    throw new InterchangeError("payload is not valid JSON");
  }
  const parsed = NetworkSchema.safeParse(raw);
  if (!parsed.success) {
    const issue = parsed.error.issues[0];
    throw new InterchangeError(
      `malformed network: ${issue.path.join(".")} ${issue.message}`,
    );
  }
  const net = parsed.data;
  if (net.format_version !== "1") {
    throw new InterchangeError(
      `unsupported format_version '${net.format_version}'`,
    );
  }

  const defined = new Set<string>();
  for (const layer of net.layers) {
    if (defined.has(layer.id)) {
      throw new InterchangeError(`duplicate layer id '${layer.id}'`);
    }
    if (!(OP_KINDS as readonly string[]).includes(layer.op_kind)) {
      throw new InterchangeError(
        `layer '${layer.id}': unknown op_kind '${layer.op_kind}'`,
      );
    }
    checkAttrs(layer);
    for (const src of layer.inbound) {
      if (!defined.has(src)) {
        throw new InterchangeError(
          `layer '${layer.id}': inbound '${src}' is undefined or out of order`,
        );
      }
    }
    const kind = layer.op_kind as OpKind;
    if (kind === "input" && layer.inbound.length !== 0) {
      throw new InterchangeError(`layer '${layer.id}': input takes no inbound`);
    }
    if (kind === "concat_merge" && layer.inbound.length < 2) {
      throw new InterchangeError(
        `layer '${layer.id}': concat_merge expects at least 2 inbound`,
      );
    }
    if (
      kind !== "input" &&
      kind !== "concat_merge" &&
      layer.inbound.length !== 1
    ) {
      throw new InterchangeError(
        `layer '${layer.id}': ${kind} expects exactly 1 inbound`,
      );
    }
    defined.add(layer.id);
  }

  for (const [group, ids] of [
    ["inputs", net.inputs],
    ["outputs", net.outputs],
  ] as const) {
    for (const id of ids) {
      if (!defined.has(id)) {
        throw new InterchangeError(`${group} entry '${id}' is not a layer`);
      }
    }
  }
  const byId = new Map(net.layers.map((l) => [l.id, l]));
  for (const id of net.inputs) {
    if (byId.get(id)!.op_kind !== "input") {
      throw new InterchangeError(`inputs entry '${id}' is not an input layer`);
    }
  }
  for (const id of net.outputs) {
    if (byId.get(id)!.op_kind !== "output") {
      throw new InterchangeError(`outputs entry '${id}' is not an output layer`);
    }
  }
  return net;
}

/** Shape declared by the (single) input layer, without the batch axis. */
export function inputShape(net: Network): number[] {
  const layer = net.layers.find((l) => l.op_kind === "input");
  if (!layer) {
    throw new InterchangeError("network has no input layer");
  }
  const shape = layer.attrs["shape"];
  if (
    !Array.isArray(shape) ||
    shape.length === 0 ||
    shape.some((d) => typeof d !== "number" || !Number.isInteger(d) || d < 1)
  ) {
    throw new InterchangeError(
      `layer '${layer.id}': attr 'shape' must be a list of positive integers`,
    );
  }
  return shape as number[];
}

/** Class count implied by the projection layer feeding the output. */
export function outputUnits(net: Network): number {
  const byId = new Map(net.layers.map((l) => [l.id, l]));
  const out = byId.get(net.outputs[0]);
  if (!out) {
    throw new InterchangeError("network has no output layer");
  }
  let cursor = byId.get(out.inbound[0]);
  while (cursor && typeof cursor.attrs["units"] !== "number") {
    cursor = byId.get(cursor.inbound[0] ?? "");
  }
  const units = cursor?.attrs["units"];
  if (typeof units !== "number") {
    throw new InterchangeError("cannot infer output width from the graph");
  }
  return units;
}
