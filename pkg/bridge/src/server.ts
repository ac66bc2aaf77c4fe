// Protocol servers: length-prefixed frames over TCP, and HTTP POST /score.
// Both are stateless between requests and answer malformed input with an
// error frame (TCP) or a non-200 status (HTTP).

import * as http from 'node:http';
import * as net from 'node:net';

import { FrameDecoder, frameError, frameMessage } from './frame.js';
import { ScoreModel } from './model.js';
import { ProtocolError, decodeRequest, encodeResponse } from './protocol.js';

export async function answer(model: ScoreModel, payload: Buffer): Promise<Buffer> {
  const request = decodeRequest(payload);
  const scores = await model.evaluate(
    request.state,
    request.height,
    request.width,
    request.step,
  );
  if (scores.length !== request.state.length) {
    throw new ProtocolError(
      `model returned ${scores.length} values for ${request.state.length} pixels`,
    );
  }
  for (const v of scores) {
    if (!Number.isFinite(v)) throw new ProtocolError('model returned non-finite scores');
  }
  return encodeResponse(scores);
}

export function startTcpServer(
  model: ScoreModel,
  host: string,
  port: number,
): Promise<net.Server> {
  const server = net.createServer((socket) => {
    const decoder = new FrameDecoder();
    let busy = Promise.resolve();
    socket.on('data', (chunk) => {
      for (const frame of decoder.push(chunk)) {
        if (frame.isError) continue; // clients do not send error frames
        // serialize responses so frames come back in request order
        busy = busy.then(async () => {
          try {
            socket.write(frameMessage(await answer(model, frame.body)));
          } catch (err) {
            socket.write(frameError(String((err as Error).message ?? err)));
          }
        });
      }
    });
    socket.on('error', () => socket.destroy());
  });
  return new Promise((resolve, reject) => {
    server.once('error', reject);
    server.listen(port, host, () => resolve(server));
  });
}

export function startHttpServer(
  model: ScoreModel,
  host: string,
  port: number,
): Promise<http.Server> {
  const server = http.createServer((req, res) => {
    if (req.method !== 'POST' || req.url !== '/score') {
      res.writeHead(404, { 'Content-Type': 'text/plain' });
      res.end('POST /score with a binary score request');
      return;
    }
    const chunks: Buffer[] = [];
    req.on('data', (c) => chunks.push(c));
    req.on('end', async () => {
      try {
        const body = await answer(model, Buffer.concat(chunks));
        res.writeHead(200, {
          'Content-Type': 'application/octet-stream',
          'Content-Length': body.length,
        });
        res.end(body);
      } catch (err) {
        const message = String((err as Error).message ?? err);
        res.writeHead(err instanceof ProtocolError ? 400 : 500, {
          'Content-Type': 'text/plain',
        });
        res.end(message);
      }
    });
  });
  return new Promise((resolve, reject) => {
    server.once('error', reject);
    server.listen(port, host, () => resolve(server));
  });
}

export interface ListenSpec {
  transport: 'tcp' | 'http';
  host: string;
  port: number;
}

export function parseListenSpec(spec: string): ListenSpec {
  let transport: 'tcp' | 'http' = 'tcp';
  let rest = spec;
  if (spec.startsWith('tcp://')) rest = spec.slice(6);
  else if (spec.startsWith('http://')) {
    transport = 'http';
    rest = spec.slice(7);
  }
  const sep = rest.lastIndexOf(':');
  if (sep < 0) throw new Error(`listen spec needs host:port, got ${spec}`);
  const port = Number(rest.slice(sep + 1));
  if (!Number.isInteger(port) || port < 0 || port > 65535) {
    throw new Error(`bad port in listen spec ${spec}`);
  }
  return { transport, host: rest.slice(0, sep) || '127.0.0.1', port };
}
