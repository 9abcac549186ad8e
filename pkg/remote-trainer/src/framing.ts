/**
 * Wire framing: every message is a 4-byte big-endian length prefix followed
 * by a compact JSON object with its keys sorted at every level.
 */

export const MAX_FRAME = 64 * 1024 * 1024;

export class FramingError extends Error {}

function sortKeysDeep(value: unknown): unknown {
  if (Array.isArray(value)) {
    return value.map(sortKeysDeep);
  }
  if (value !== null && typeof value === "object") {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value as Record<string, unknown>).sort()) {
      out[key] = sortKeysDeep((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  return value;
}

/**
 * Serialize with sorted keys, no whitespace, and non-ASCII escaped as
 * \uXXXX so the bytes match the server's encoder for ASCII-safe payloads.
 */
export function canonicalJson(value: unknown): string {
  const text = JSON.stringify(sortKeysDeep(value));
  if (text === undefined) {
    throw new FramingError("value is not JSON-serializable");
  }
  // Escaping per UTF-16 unit turns astral characters into surrogate-pair
  // escapes, which is what the server emits too.
  return text.replace(/[-￿]/g, (ch) => {
    return "\\u" + ch.charCodeAt(0).toString(16).padStart(4, "0");
  });
}

export function encodeFrame(message: object): Buffer {
  const payload = Buffer.from(canonicalJson(message), "utf-8");
  if (payload.length > MAX_FRAME) {
    throw new FramingError(`frame of ${payload.length} bytes exceeds the cap`);
  }
  const header = Buffer.alloc(4);
  header.writeUInt32BE(payload.length, 0);
  return Buffer.concat([header, payload]);
}

/** Incremental decoder; feed it socket chunks, collect whole messages. */
export class FrameDecoder {
  private pending: Buffer = Buffer.alloc(0);

  push(chunk: Buffer): unknown[] {
    this.pending = this.pending.length
      ? Buffer.concat([this.pending, chunk])
      : chunk;
    const messages: unknown[] = [];
    while (this.pending.length >= 4) {
      const size = this.pending.readUInt32BE(0);
      if (size > MAX_FRAME) {
        throw new FramingError(`frame of ${size} bytes exceeds the cap`);
      }
      if (this.pending.length < 4 + size) {
        break;
      }
      const payload = this.pending.subarray(4, 4 + size).toString("utf-8");
      this.pending = this.pending.subarray(4 + size);
      let parsed: unknown;
      try {
        parsed = JSON.parse(payload);
      } catch {
        throw new FramingError("frame payload is not valid JSON");
      }
      if (parsed === null || typeof parsed !== "object" || Array.isArray(parsed)) {
        throw new FramingError("frame payload must be a JSON object");
      }
      messages.push(parsed);
    }
    return messages;
  }

  /** Bytes buffered but not yet forming a whole frame. */
  get buffered(): number {
    return this.pending.length;
  }
}
