// Length-prefixed framing for the stream-socket transport.  A 4-byte
// little-endian header carries the payload length; a set top bit marks an
// error frame whose body is a UTF-8 message.  See ../PROTOCOL.md.

export const ERROR_FLAG = 0x80000000;
export const MAX_FRAME = 0x7fffffff;

export function frameMessage(payload: Buffer): Buffer {
  if (payload.length > MAX_FRAME) {
    throw new Error(`payload too large to frame: ${payload.length}`);
  }
  const header = Buffer.alloc(4);
  header.writeUInt32LE(payload.length, 0);
  return Buffer.concat([header, payload]);
}

export function frameError(message: string): Buffer {
  let body = Buffer.from(message, 'utf-8');
  if (body.length > MAX_FRAME) body = body.subarray(0, MAX_FRAME);
  const header = Buffer.alloc(4);
  header.writeUInt32LE((ERROR_FLAG | body.length) >>> 0, 0);
  return Buffer.concat([header, body]);
}

export interface Frame {
  body: Buffer;
  isError: boolean;
}

/** Accumulates stream chunks and yields completed frames. */
export class FrameDecoder {
  private buf: Buffer = Buffer.alloc(0);

  push(chunk: Buffer): Frame[] {
    this.buf = this.buf.length ? Buffer.concat([this.buf, chunk]) : chunk;
    const frames: Frame[] = [];
    for (;;) {
      if (this.buf.length < 4) break;
      const header = this.buf.readUInt32LE(0);
      const length = header & MAX_FRAME;
      if (this.buf.length < 4 + length) break;
      frames.push({
        body: this.buf.subarray(4, 4 + length),
        isError: (header & ERROR_FLAG) !== 0,
      });
      this.buf = this.buf.subarray(4 + length);
    }
    return frames;
  }
}
