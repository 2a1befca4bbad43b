/**
 * Wire protocol framing: newline-delimited UTF-8 JSON, one frame per line.
 *
 * Key order within each frame is fixed ("op" first) and float values render
 * with shortest round-trip semantics where integral values carry a trailing
 * ".0", so encodings are byte-identical to the reference implementation
 * (pinned by the shared golden-file suite).
 */

export type FrameOp =
  | 'sub'
  | 'pub'
  | 'msg'
  | 'ack'
  | 'get'
  | 'set'
  | 'val'
  | 'setack'
  | 'welcome'
  | 'err';

export interface Frame {
  op: FrameOp;
  [key: string]: unknown;
}

// Canonical key order per frame kind. "op" always comes first.
export const FRAME_KEYS: Record<FrameOp, readonly string[]> = {
  sub: ['topic'],
  pub: ['topic', 'value', 'ts', 'seq'],
  msg: ['topic', 'value', 'ts', 'seq'],
  ack: ['ts'],
  get: ['topic'],
  set: ['topic', 'value', 'ts', 'seq'],
  val: ['topic', 'value', 'ts', 'seq'],
  setack: ['topic', 'applied'],
  welcome: ['client'],
  err: ['code', 'detail'],
};

// Fields carrying float signal values (everything else is int/str/bool).
const FLOAT_FIELDS = new Set(['value']);

function encodeFloat(v: number): string {
  if (!Number.isFinite(v)) {
    throw new Error(`non-finite value ${v}`);
  }
  // shortest round-trip, integral floats as "X.0" (e.g. 1 -> "1.0")
  if (Number.isInteger(v) && Math.abs(v) < 1e16) {
    return Object.is(v, -0) ? '-0.0' : `${v}.0`;
  }
  return String(v);
}

function encodeScalar(key: string, v: unknown): string {
  if (FLOAT_FIELDS.has(key)) {
    return encodeFloat(v as number);
  }
  if (typeof v === 'number') {
    if (!Number.isSafeInteger(v)) {
      throw new Error(`field ${key} must be a safe integer, got ${v}`);
    }
    return String(v);
  }
  if (typeof v === 'boolean') {
    return v ? 'true' : 'false';
  }
  return JSON.stringify(v);
}

export function encodeFrame(frame: Frame): Buffer {
  const keys = FRAME_KEYS[frame.op];
  if (keys === undefined) {
    throw new Error(`unknown frame op '${frame.op}'`);
  }
  const parts = [`"op":${JSON.stringify(frame.op)}`];
  for (const key of keys) {
    if (key in frame) {
      parts.push(`${JSON.stringify(key)}:${encodeScalar(key, frame[key])}`);
    }
  }
  return Buffer.from(`{${parts.join(',')}}\n`, 'utf-8');
}

export function decodeFrame(line: Buffer | string): Frame {
  const frame = JSON.parse(line.toString());
  if (typeof frame !== 'object' || frame === null || !('op' in frame)) {
    throw new Error('malformed frame');
  }
  return frame as Frame;
}

export const subFrame = (topic: string): Frame => ({ op: 'sub', topic });

export const pubFrame = (topic: string, value: number, ts: number, seq: number): Frame => ({
  op: 'pub',
  topic,
  value,
  ts,
  seq,
});

export const getFrame = (topic: string): Frame => ({ op: 'get', topic });

export const setFrame = (topic: string, value: number, ts: number, seq: number): Frame => ({
  op: 'set',
  topic,
  value,
  ts,
  seq,
});
