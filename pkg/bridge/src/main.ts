#!/usr/bin/env node
/**
 * Entry point. Default transport is stdio; --tcp HOST:PORT listens instead.
 * --stub answers every request with -1.0 per estimation row, which keeps
 * protocol tests model-free and deterministic.
 */

import { serveStdio, serveTcp, type SessionOptions } from "./server.js";

function usage(): never {
  process.stderr.write(
    "usage: dagsearch-bridge [--stub] [--stdio | --tcp HOST:PORT]\n",
  );
  process.exit(2);
}

async function main(argv: string[]): Promise<number> {
  const options: SessionOptions = { stub: false };
  let tcp: { host: string; port: number } | null = null;

  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i]!;
    if (arg === "--stub") {
      options.stub = true;
    } else if (arg === "--stdio") {
      tcp = null;
    } else if (arg === "--tcp") {
      const addr = argv[++i];
      if (!addr) usage();
      const cut = addr.lastIndexOf(":");
      const port = Number(addr.slice(cut + 1));
      if (cut <= 0 || !Number.isInteger(port) || port < 0 || port > 65535) usage();
      tcp = { host: addr.slice(0, cut), port };
    } else {
      usage();
    }
  }

  if (tcp !== null) {
    const server = await serveTcp(tcp.host, tcp.port, options);
    const addr = server.address();
    if (addr && typeof addr === "object") {
      // report the bound port so callers can use --tcp HOST:0
      process.stderr.write(`listening on ${addr.address}:${addr.port}\n`);
    }
    await new Promise<void>((resolve) => server.once("close", resolve));
    return 0;
  }

  try {
    await serveStdio(options);
    return 0;
  } catch {
    return 1; // transport loss
  }
}

main(process.argv.slice(2)).then(
  (code) => process.exit(code),
  (err) => {
    process.stderr.write(`${err}\n`);
    process.exit(1);
  },
);
