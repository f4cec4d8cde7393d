/**
 * Wire protocol shared with the engine's external estimator backend.
 *
 * One JSON object per line in both directions. A request carries the child
 * and parent columns of the train and estimation rows, child column last;
 * the reply repeats the request id and either a total log predictive or an
 * error string. Replies may be produced out of order; the id is the only
 * correlation key.
 */

export interface LikelihoodRequest {
  id: number;
  child: number;
  parents: number[];
  /** train rows, one array per row: parent columns in listed order, child last */
  train: number[][];
  /** estimation rows, same column layout as train */
  est: number[][];
}

export type Reply =
  | { id: number; total_logpred: number }
  | { id: number | null; error: string };

/** Reply serialization is pinned: object key order and bare stringify. */
export function encodeReply(reply: Reply): string {
  return JSON.stringify(reply) + "\n";
}

export class RequestError extends Error {
  constructor(
    message: string,
    readonly id: number | null,
  ) {
    super(message);
  }
}

function isIndex(v: unknown): v is number {
  return typeof v === "number" && Number.isInteger(v) && v >= 0;
}

function checkMatrix(value: unknown, width: number, what: string, id: number): number[][] {
  if (!Array.isArray(value) || value.length === 0) {
    throw new RequestError(`${what} must be a non-empty array of rows`, id);
  }
  for (const row of value) {
    if (!Array.isArray(row) || row.length !== width) {
      throw new RequestError(`${what} rows must have ${width} columns`, id);
    }
    for (const cell of row) {
      if (typeof cell !== "number" || !Number.isFinite(cell)) {
        throw new RequestError(`${what} contains a non-finite value`, id);
      }
    }
  }
  return value as number[][];
}

/**
 * Parse one request line. Throws RequestError carrying whatever id could be
 * recovered so the caller can still send a correlated error reply.
 */
export function parseRequest(line: string): LikelihoodRequest {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch {
    throw new RequestError("request is not valid JSON", null);
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new RequestError("request must be a JSON object", null);
  }
  const rec = obj as Record<string, unknown>;
  const id = isIndex(rec.id) ? (rec.id as number) : null;
  if (id === null) {
    throw new RequestError("request is missing a non-negative integer id", null);
  }
  if (!isIndex(rec.child)) {
    throw new RequestError("child must be a non-negative integer", id);
  }
  if (!Array.isArray(rec.parents) || !rec.parents.every(isIndex)) {
    throw new RequestError("parents must be an array of non-negative integers", id);
  }
  const parents = rec.parents as number[];
  const width = parents.length + 1;
  const train = checkMatrix(rec.train, width, "train", id);
  const est = checkMatrix(rec.est, width, "est", id);
  return { id, child: rec.child as number, parents, train, est };
}

/** Split a growing buffer into complete lines; returns the unfinished tail. */
export function drainLines(buffer: string): { lines: string[]; rest: string } {
  const lines: string[] = [];
  let rest = buffer;
  for (;;) {
    const cut = rest.indexOf("\n");
    if (cut < 0) break;
    lines.push(rest.slice(0, cut));
    rest = rest.slice(cut + 1);
  }
  return { lines, rest };
}
