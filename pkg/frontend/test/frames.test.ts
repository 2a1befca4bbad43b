import * as fs from 'node:fs';
import * as path from 'node:path';

import { describe, expect, it } from 'vitest';

import { decodeFrame, encodeFrame, Frame, pubFrame, setFrame, subFrame } from '../src/frames';

const GOLDEN = path.join(__dirname, '..', '..', 'tests', 'golden', 'frames.golden');

const goldenLines = (): string[] =>
  fs
    .readFileSync(GOLDEN, 'utf-8')
    .split('\n')
    .filter((line) => line.length > 0);

describe('golden frame conformance', () => {
  it('re-encodes every golden frame byte-exactly', () => {
    for (const line of goldenLines()) {
      const frame = decodeFrame(line);
      expect(encodeFrame(frame).toString('utf-8')).toBe(`${line}\n`);
    }
  });

  it('covers every frame op at least once', () => {
    const ops = new Set(goldenLines().map((line) => decodeFrame(line).op));
    for (const op of ['sub', 'pub', 'msg', 'ack', 'get', 'set', 'val', 'setack', 'welcome', 'err']) {
      expect(ops).toContain(op);
    }
  });
});

describe('encoder', () => {
  it('renders integral float values with trailing .0', () => {
    expect(encodeFrame(pubFrame('t', 1.0, 5, 1)).toString()).toBe(
      '{"op":"pub","topic":"t","value":1.0,"ts":5,"seq":1}\n',
    );
  });

  it('renders fractional values shortest round-trip', () => {
    expect(encodeFrame(setFrame('a/b', 0.998877, 55, 12)).toString()).toBe(
      '{"op":"set","topic":"a/b","value":0.998877,"ts":55,"seq":12}\n',
    );
  });

  it('renders negative values', () => {
    expect(encodeFrame(pubFrame('drts/in03', -2.5, 0, 7)).toString()).toBe(
      '{"op":"pub","topic":"drts/in03","value":-2.5,"ts":0,"seq":7}\n',
    );
  });

  it('rejects unknown ops', () => {
    expect(() => encodeFrame({ op: 'nope' } as unknown as Frame)).toThrow(/unknown frame op/);
  });

  it('round-trips sub frames', () => {
    const frame = subFrame('task01/*');
    expect(decodeFrame(encodeFrame(frame))).toEqual(frame);
  });
});
