/**
 * Wire protocol: newline-delimited JSON messages.
 *
 * client -> {"type":"hello","dim":m}
 * server -> {"type":"ready","dim":m}
 * client -> {"type":"evaluate","id":k,"batch":[<flat row-major floats>, ...]}
 * server -> {"type":"scores","id":k,"scores":[...]}
 * server -> {"type":"error","id":k or -1,"message":"..."} on any failure
 *
 * Floats are emitted with 17 significant digits so they round-trip to the
 * exact same IEEE double on the client side.
 */

import type { ScoringModel } from "./model.js";

export function fmt17(value: number): string {
  return value.toPrecision(17);
}

export interface ProtocolIO {
  write(line: string): void;
  log(message: string): void;
}

function errorLine(id: number, message: string): string {
  return JSON.stringify({ type: "error", id, message });
}

/** Handle one request line; returns the reply line that was written. */
export function handleLine(model: ScoringModel, line: string, io: ProtocolIO): string {
  let reply: string;
  let message: unknown;
  try {
    message = JSON.parse(line);
  } catch {
    reply = errorLine(-1, "malformed request: not valid JSON");
    io.write(reply);
    return reply;
  }
  if (typeof message !== "object" || message === null || Array.isArray(message)) {
    reply = errorLine(-1, "malformed request: expected an object");
    io.write(reply);
    return reply;
  }
  const body = message as Record<string, unknown>;
  const rawId = typeof body.id === "number" && Number.isInteger(body.id) ? (body.id as number) : -1;

  switch (body.type) {
    case "hello": {
      if (body.dim !== model.dim) {
        reply = errorLine(-1, `dim mismatch: model expects ${model.dim}`);
      } else {
        reply = JSON.stringify({ type: "ready", dim: model.dim });
      }
      break;
    }
    case "evaluate": {
      io.log(`request ${rawId}`);
      try {
        if (!Array.isArray(body.batch)) {
          throw new Error("evaluate needs a batch array");
        }
        const scores: string[] = [];
        for (const entry of body.batch) {
          if (!Array.isArray(entry) || entry.length === 0 || entry.length % model.dim !== 0) {
            throw new Error(`batch entry length must be a positive multiple of ${model.dim}`);
          }
          const flat = entry as number[];
          const rows: number[][] = [];
          for (let offset = 0; offset < flat.length; offset += model.dim) {
            rows.push(flat.slice(offset, offset + model.dim));
          }
          scores.push(fmt17(model.score(rows)));
        }
        reply = `{"type":"scores","id":${rawId},"scores":[${scores.join(",")}]}`;
      } catch (err) {
        reply = errorLine(rawId, err instanceof Error ? err.message : String(err));
      }
      break;
    }
    default: {
      reply = errorLine(rawId, `unknown message type ${JSON.stringify(body.type ?? null)}`);
    }
  }
  io.write(reply);
  return reply;
}
