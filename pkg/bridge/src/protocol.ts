// Score request/response payloads.  Little-endian throughout: u32 step,
// u32 height, u32 width, then height*width float32 row-major.  The
// response is the bare float32 score image of the same shape.

export interface ScoreRequest {
  step: number;
  height: number;
  width: number;
  state: Float32Array;
}

export class ProtocolError extends Error {}

export function decodeRequest(payload: Buffer): ScoreRequest {
  if (payload.length < 12) {
    throw new ProtocolError(`request payload too short: ${payload.length} bytes`);
  }
  const step = payload.readUInt32LE(0);
  const height = payload.readUInt32LE(4);
  const width = payload.readUInt32LE(8);
  const expected = 12 + 4 * height * width;
  if (payload.length !== expected) {
    throw new ProtocolError(
      `request payload is ${payload.length} bytes, expected ${expected}`,
    );
  }
  if (height === 0 || width === 0) {
    throw new ProtocolError('zero image dimension');
  }
  const state = new Float32Array(height * width);
  for (let i = 0; i < state.length; i++) {
    state[i] = payload.readFloatLE(12 + 4 * i);
  }
  return { step, height, width, state };
}

export function encodeRequest(req: ScoreRequest): Buffer {
  const out = Buffer.alloc(12 + 4 * req.state.length);
  out.writeUInt32LE(req.step, 0);
  out.writeUInt32LE(req.height, 4);
  out.writeUInt32LE(req.width, 8);
  for (let i = 0; i < req.state.length; i++) {
    out.writeFloatLE(req.state[i], 12 + 4 * i);
  }
  return out;
}

export function encodeResponse(scores: Float32Array): Buffer {
  const out = Buffer.alloc(4 * scores.length);
  for (let i = 0; i < scores.length; i++) {
    out.writeFloatLE(scores[i], 4 * i);
  }
  return out;
}

export function decodeResponse(payload: Buffer, pixels: number): Float32Array {
  if (payload.length !== 4 * pixels) {
    throw new ProtocolError(
      `response payload is ${payload.length} bytes, expected ${4 * pixels}`,
    );
  }
  const out = new Float32Array(pixels);
  for (let i = 0; i < pixels; i++) {
    out[i] = payload.readFloatLE(4 * i);
  }
  return out;
}
