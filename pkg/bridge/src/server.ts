/**
 * Serve loop: one likelihood session per transport connection.
 *
 * A session reads newline-delimited requests, answers each with exactly one
 * reply carrying the same id, and never reorders its own output (the engine
 * client tolerates out-of-order replies, but a single worker has no reason
 * to produce them). Malformed requests get an error reply with whatever id
 * could be recovered; an unusable model result gets an error reply too, so
 * one bad cell cannot take down the connection.
 */

import * as net from "node:net";
import type { Readable, Writable } from "node:stream";

import { predictLogDensity, DEFAULT_PRIOR, type PriorConfig } from "./model.js";
import {
  drainLines,
  encodeReply,
  parseRequest,
  RequestError,
  type Reply,
} from "./protocol.js";

export interface SessionOptions {
  /** reply -1.0 per estimation row instead of running the model */
  stub: boolean;
  prior?: PriorConfig;
}

export class Session {
  private buffer = "";
  private handled = 0;

  constructor(private readonly options: SessionOptions) {}

  get requestsHandled(): number {
    return this.handled;
  }

  /** Answer one raw request line. */
  replyTo(line: string): Reply {
    this.handled += 1;
    let request;
    try {
      request = parseRequest(line);
    } catch (err) {
      if (err instanceof RequestError) {
        return { id: err.id, error: err.message };
      }
      throw err;
    }
    if (this.options.stub) {
      return { id: request.id, total_logpred: -1.0 * request.est.length };
    }
    try {
      const prediction = predictLogDensity(
        request.train,
        request.est,
        this.options.prior ?? DEFAULT_PRIOR,
      );
      return { id: request.id, total_logpred: prediction.total };
    } catch (err) {
      return { id: request.id, error: (err as Error).message };
    }
  }

  /** Feed a chunk of input; returns the encoded replies ready to write. */
  consume(chunk: string): string[] {
    const { lines, rest } = drainLines(this.buffer + chunk);
    this.buffer = rest;
    const out: string[] = [];
    for (const line of lines) {
      if (line.trim() === "") continue; // blank lines are transport noise
      out.push(encodeReply(this.replyTo(line)));
    }
    return out;
  }
}

/** Run a session over a stream pair until the input ends. */
export function attach(
  input: Readable,
  output: Writable,
  options: SessionOptions,
  onClose?: (err?: Error) => void,
): Session {
  const session = new Session(options);
  input.setEncoding("utf8");
  input.on("data", (chunk: string) => {
    for (const reply of session.consume(chunk)) {
      output.write(reply);
    }
  });
  input.on("end", () => onClose?.());
  input.on("error", (err) => onClose?.(err));
  output.on("error", (err) => onClose?.(err));
  return session;
}

export function serveStdio(options: SessionOptions): Promise<void> {
  return new Promise((resolve, reject) => {
    attach(process.stdin, process.stdout, options, (err) => {
      if (err) reject(err);
      else resolve();
    });
  });
}

export function serveTcp(
  host: string,
  port: number,
  options: SessionOptions,
): Promise<net.Server> {
  return new Promise((resolve, reject) => {
    const server = net.createServer((socket) => {
      attach(socket, socket, options, () => socket.end());
      socket.on("error", () => socket.destroy());
    });
    server.once("error", reject);
    server.listen(port, host, () => resolve(server));
  });
}
