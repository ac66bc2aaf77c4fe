#!/usr/bin/env node
// score-bridge --model SPEC --listen ADDR
//
// Serves a score model over the remote-prior protocol.  ADDR is
// host:port or tcp://host:port for the framed socket transport, or
// http://host:port for HTTP POST /score.  Port 0 picks a free port; the
// actual address is printed on startup.

import * as net from 'node:net';

import { loadModel } from './model.js';
import { parseListenSpec, startHttpServer, startTcpServer } from './server.js';

function usage(): never {
  console.error('usage: score-bridge --model SPEC --listen ADDR');
  console.error('  SPEC: zero | gaussian:MEAN,STD | smooth:WEIGHT | tfjs:DIR');
  console.error('  ADDR: host:port | tcp://host:port | http://host:port');
  process.exit(2);
}

function parseArgs(argv: string[]): { model: string; listen: string } {
  let model = '';
  let listen = '';
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === '--model') model = argv[++i] ?? '';
    else if (argv[i] === '--listen') listen = argv[++i] ?? '';
    else usage();
  }
  if (!model || !listen) usage();
  return { model, listen };
}

async function main(): Promise<void> {
  const args = parseArgs(process.argv.slice(2));
  const spec = parseListenSpec(args.listen);
  const model = await loadModel(args.model);
  const server =
    spec.transport === 'http'
      ? await startHttpServer(model, spec.host, spec.port)
      : await startTcpServer(model, spec.host, spec.port);
  const bound = server.address() as net.AddressInfo;
  console.log(`serving ${model.name}`);
  console.log(`listening ${spec.transport} ${spec.host}:${bound.port}`);
}

main().catch((err) => {
  console.error(`error: ${err.message ?? err}`);
  process.exit(1);
});
