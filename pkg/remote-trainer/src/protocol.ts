/**
 * Message vocabulary spoken over the framed connection. The worker sends
 * hello, pull, and result; the server answers with ack, task, empty, or
 * error.
 */
import { z } from "zod";

export const PROTO_VERSION = 1;

export const AckSchema = z
  .object({
    type: z.literal("ack"),
    proto: z.number().int().optional(),
    accepted: z.boolean().optional(),
  })
  .strict();

export const TaskSchema = z
  .object({
    type: z.literal("task"),
    task_id: z.string().min(1),
    network_json: z.string().min(1),
    train_config: z.record(z.string(), z.unknown()),
  })
  .strict();

export const EmptySchema = z.object({ type: z.literal("empty") }).strict();

export const ErrorSchema = z
  .object({ type: z.literal("error"), message: z.string() })
  .strict();

export const ServerMessageSchema = z.discriminatedUnion("type", [
  AckSchema,
  TaskSchema,
  EmptySchema,
  ErrorSchema,
]);

export type Ack = z.infer<typeof AckSchema>;
export type Task = z.infer<typeof TaskSchema>;
export type ServerMessage = z.infer<typeof ServerMessageSchema>;

export class ProtocolError extends Error {}

export function parseServerMessage(raw: unknown): ServerMessage {
  const parsed = ServerMessageSchema.safeParse(raw);
  if (!parsed.success) {
    throw new ProtocolError("unrecognized message from server");
  }
  return parsed.data;
}

export function helloMessage(workerId: string): object {
  return { type: "hello", proto: PROTO_VERSION, worker_id: workerId };
}

export function pullMessage(workerId: string): object {
  return { type: "pull", worker_id: workerId };
}

export interface ResultFields {
  taskId: string;
  primary: number;
  rawSecondary: number;
  status: "ok" | "failed";
  workerId: string;
  duration: number;
  reason?: string;
}

export function resultMessage(fields: ResultFields): object {
  const message: Record<string, unknown> = {
    type: "result",
    task_id: fields.taskId,
    primary: fields.primary,
    raw_secondary: fields.rawSecondary,
    status: fields.status,
    worker_id: fields.workerId,
    duration: fields.duration,
  };
  if (fields.reason) {
    message["reason"] = fields.reason;
  }
  return message;
}
