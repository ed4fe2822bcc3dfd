#!/usr/bin/env node
/**
 * Reference model server.
 *
 * Usage:
 *   node dist/server.js MODEL_FILE            # serve over stdin/stdout
 *   node dist/server.js MODEL_FILE --tcp PORT # serve one TCP client
 *
 * Requests are answered strictly one at a time; malformed input produces an
 * error reply and the connection stays open.  Every evaluate request id is
 * logged to stderr.
 */

import { readFileSync } from "node:fs";
import { createInterface } from "node:readline";
import { createServer } from "node:net";

import { parseModel, type ScoringModel } from "./model.js";
import { handleLine, type ProtocolIO } from "./protocol.js";

function usage(): never {
  process.stderr.write("usage: server.js MODEL_FILE [--tcp PORT]\n");
  process.exit(2);
}

function loadModel(path: string): ScoringModel {
  try {
    return parseModel(readFileSync(path, "utf-8"));
  } catch (err) {
    process.stderr.write(`cannot load model ${path}: ${err instanceof Error ? err.message : err}\n`);
    process.exit(1);
  }
}

function serveStdio(model: ScoringModel): void {
  const io: ProtocolIO = {
    write: (line) => process.stdout.write(line + "\n"),
    log: (message) => process.stderr.write(message + "\n"),
  };
  const rl = createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    if (line.trim().length > 0) {
      handleLine(model, line, io);
    }
  });
  rl.on("close", () => process.exit(0));
}

function serveTcp(model: ScoringModel, port: number): void {
  const server = createServer((socket) => {
    // One client per process: stop accepting once a connection lands.
    server.close();
    const io: ProtocolIO = {
      write: (line) => socket.write(line + "\n"),
      log: (message) => process.stderr.write(message + "\n"),
    };
    let buffered = "";
    socket.setEncoding("utf-8");
    socket.on("data", (chunk: string) => {
      buffered += chunk;
      let newline = buffered.indexOf("\n");
      while (newline >= 0) {
        const line = buffered.slice(0, newline);
        buffered = buffered.slice(newline + 1);
        if (line.trim().length > 0) {
          handleLine(model, line, io);
        }
        newline = buffered.indexOf("\n");
      }
    });
    socket.on("close", () => process.exit(0));
    socket.on("error", () => process.exit(0));
  });
  server.listen(port, "127.0.0.1", () => {
    const address = server.address();
    const bound = typeof address === "object" && address !== null ? address.port : port;
    process.stderr.write(`listening on ${bound}\n`);
  });
}

const args = process.argv.slice(2);
if (args.length === 0) {
  usage();
}
const modelPath = args[0];
const model = loadModel(modelPath);
const tcpIndex = args.indexOf("--tcp");
if (tcpIndex >= 0) {
  const port = Number(args[tcpIndex + 1]);
  if (!Number.isInteger(port) || port < 0 || port > 65535) {
    usage();
  }
  serveTcp(model, port);
} else {
  serveStdio(model);
}
