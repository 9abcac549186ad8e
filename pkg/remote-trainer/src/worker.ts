/**
 * Worker loop: hello, then pull tasks one at a time, train each network,
 * and report the score. Empty pulls back off with jitter; lost connections
 * reconnect with exponential backoff until the attempt budget runs out.
 */
import * as net from "node:net";

import { DatasetKind, ToyDataset, makeDataset } from "./datasets.js";
import { FrameDecoder, encodeFrame } from "./framing.js";
import { inputShape, outputUnits, parseNetwork } from "./interchange.js";
import {
  PROTO_VERSION,
  ProtocolError,
  ResultFields,
  ServerMessage,
  Task,
  helloMessage,
  parseServerMessage,
  pullMessage,
  resultMessage,
} from "./protocol.js";
import { TrainConfig, trainAndScore } from "./trainer.js";

export interface WorkerOptions {
  dataset?: DatasetKind;
  pollMs?: number;
  reconnectAttempts?: number;
  maxTasks?: number;
  seed?: number;
  connectTimeoutMs?: number;
  log?: (line: string) => void;
}

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

/** One framed connection with strict send-then-await-reply usage. */
class Connection {
  private decoder = new FrameDecoder();
  private inbox: ServerMessage[] = [];
  private waiter: { resolve: (m: ServerMessage) => void; reject: (e: Error) => void } | null =
    null;
  private failure: Error | null = null;

  private constructor(private socket: net.Socket) {
    socket.on("data", (chunk) => {
      let messages: unknown[];
      try {
        messages = this.decoder.push(chunk);
      } catch (err) {
        this.fail(err instanceof Error ? err : new Error(String(err)));
        return;
      }
      for (const raw of messages) {
        let parsed: ServerMessage;
        try {
          parsed = parseServerMessage(raw);
        } catch (err) {
          this.fail(err instanceof Error ? err : new Error(String(err)));
          return;
        }
        if (this.waiter) {
          const w = this.waiter;
          this.waiter = null;
          w.resolve(parsed);
        } else {
          this.inbox.push(parsed);
        }
      }
    });
    socket.on("error", (err) => this.fail(err));
    socket.on("close", () => this.fail(new Error("connection closed")));
  }

  private fail(err: Error): void {
    if (this.failure) {
      return;
    }
    this.failure = err;
    if (this.waiter) {
      const w = this.waiter;
      this.waiter = null;
      w.reject(err);
    }
  }

  static connect(host: string, port: number, timeoutMs: number): Promise<Connection> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ host, port });
      const timer = setTimeout(() => {
        socket.destroy();
        reject(new Error("connect timed out"));
      }, timeoutMs);
      socket.once("connect", () => {
        clearTimeout(timer);
        socket.setNoDelay(true);
        resolve(new Connection(socket));
      });
      socket.once("error", (err) => {
        clearTimeout(timer);
        reject(err);
      });
    });
  }

  request(message: object): Promise<ServerMessage> {
    if (this.failure) {
      return Promise.reject(this.failure);
    }
    if (this.inbox.length > 0) {
      return Promise.reject(new ProtocolError("unexpected message from server"));
    }
    this.socket.write(encodeFrame(message));
    return new Promise((resolve, reject) => {
      this.waiter = { resolve, reject };
    });
  }

  close(): void {
    this.socket.destroy();
  }
}

export async function runWorker(
  host: string,
  port: number,
  workerId: string,
  options: WorkerOptions = {},
): Promise<number> {
  const datasetKind = options.dataset ?? "auto";
  const pollMs = options.pollMs ?? 500;
  const reconnectAttempts = options.reconnectAttempts ?? 5;
  const maxTasks = options.maxTasks ?? Infinity;
  const seed = options.seed ?? 7;
  const connectTimeoutMs = options.connectTimeoutMs ?? 4000;
  const log = options.log ?? (() => {});

  const datasets = new Map<string, ToyDataset>();
  const datasetFor = (shape: number[], classes: number): ToyDataset => {
    const key = `${datasetKind}|${shape.join("x")}|${classes}`;
    let ds = datasets.get(key);
    if (!ds) {
      ds = makeDataset(datasetKind, shape, classes, seed);
      datasets.set(key, ds);
    }
    return ds;
  };

  const handle = async (task: Task): Promise<ResultFields> => {
    const started = Date.now();
    try {
      const network = parseNetwork(task.network_json);
      const shape = inputShape(network);
      const classes = Math.max(2, outputUnits(network));
      const score = await trainAndScore(
        network,
        datasetFor(shape, classes),
        task.train_config as TrainConfig,
        seed,
      );
      return {
        taskId: task.task_id,
        primary: score.primary,
        rawSecondary: score.rawSecondary,
        status: "ok",
        workerId,
        duration: (Date.now() - started) / 1000,
      };
    } catch (err) {
      // A bad payload must produce a failed result, never a dead worker.
      return {
        taskId: task.task_id,
        primary: 0,
        rawSecondary: 0,
        status: "failed",
        workerId,
        duration: (Date.now() - started) / 1000,
        reason: err instanceof Error ? err.message : String(err),
      };
    }
  };

  let completed = 0;
  let connectFailures = 0;

  while (completed < maxTasks) {
    let conn: Connection;
    try {
      conn = await Connection.connect(host, port, connectTimeoutMs);
      const greeting = await conn.request(helloMessage(workerId));
      if (greeting.type === "error") {
        log(`${workerId}: server refused: ${greeting.message}`);
        conn.close();
        return completed;
      }
      if (greeting.type !== "ack" || greeting.proto !== PROTO_VERSION) {
        log(`${workerId}: protocol mismatch`);
        conn.close();
        return completed;
      }
    } catch (err) {
      connectFailures++;
      if (connectFailures > reconnectAttempts) {
        log(`${workerId}: giving up after ${connectFailures} failed connects`);
        return completed;
      }
      const backoff = Math.min(250 * 2 ** connectFailures, 4000);
      await sleep(backoff + Math.random() * backoff * 0.25);
      continue;
    }
    connectFailures = 0;

    try {
      while (completed < maxTasks) {
        const reply = await conn.request(pullMessage(workerId));
        if (reply.type === "task") {
          const fields = await handle(reply);
          const ack = await conn.request(resultMessage(fields));
          if (ack.type === "error") {
            log(`${workerId}: result rejected: ${ack.message}`);
          } else if (ack.type === "ack" && ack.accepted !== false) {
            completed++;
          }
        } else if (reply.type === "empty") {
          await sleep(pollMs + Math.random() * pollMs * 0.5);
        } else if (reply.type === "error") {
          log(`${workerId}: server error: ${reply.message}`);
          break;
        } else {
          throw new ProtocolError(`unexpected ${reply.type} after pull`);
        }
      }
    } catch (err) {
      log(`${workerId}: connection lost: ${err instanceof Error ? err.message : err}`);
      connectFailures++;
      if (connectFailures > reconnectAttempts) {
        return completed;
      }
      const backoff = Math.min(250 * 2 ** connectFailures, 4000);
      await sleep(backoff + Math.random() * backoff * 0.25);
      continue;
    } finally {
      conn.close();
    }
  }
  return completed;
}
