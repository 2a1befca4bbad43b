/** TCP line framing and small shared utilities. */

import * as net from 'node:net';

import { decodeFrame, encodeFrame, Frame } from './frames';
import { ConnectionRefused, SessionClosed } from './errors';

export interface Address {
  host: string;
  port: number;
}

export function parseAddress(address: string): Address {
  const idx = address.lastIndexOf(':');
  if (idx <= 0) {
    throw new ConnectionRefused(`bad address '${address}', want HOST:PORT`);
  }
  const host = address.slice(0, idx);
  const port = Number(address.slice(idx + 1));
  if (!Number.isInteger(port) || port < 0 || port > 65535) {
    throw new ConnectionRefused(`bad port in '${address}'`);
  }
  return { host, port };
}

/** Monotonic wall clock in integer nanoseconds since construction. */
export class WallClock {
  private readonly epoch = process.hrtime.bigint();

  nanos(): number {
    return Number(process.hrtime.bigint() - this.epoch);
  }
}

export const MS = 1_000_000; // nanoseconds per millisecond

export const sleep = (ms: number): Promise<void> =>
  new Promise((resolve) => setTimeout(resolve, ms));

/**
 * One newline-delimited JSON frame connection over a TCP socket.
 * Frames arrive via the onFrame callback in socket order.
 */
export class LineConn {
  closed = false;
  onFrame: (frame: Frame) => void = () => {};
  onClose: () => void = () => {};
  private buffer = Buffer.alloc(0);

  constructor(private readonly sock: net.Socket) {
    sock.on('data', (chunk) => this.feed(chunk));
    sock.on('error', () => this.close());
    sock.on('close', () => this.close());
  }

  static connect(address: string, timeoutMs = 5000): Promise<LineConn> {
    const { host, port } = parseAddress(address);
    return new Promise((resolve, reject) => {
      const sock = net.createConnection({ host, port });
      const timer = setTimeout(() => {
        sock.destroy();
        reject(new ConnectionRefused(`connect to ${address} timed out`));
      }, timeoutMs);
      sock.once('connect', () => {
        clearTimeout(timer);
        sock.setNoDelay(true);
        resolve(new LineConn(sock));
      });
      sock.once('error', (err) => {
        clearTimeout(timer);
        reject(new ConnectionRefused(`cannot connect to ${address}: ${err.message}`));
      });
    });
  }

  send(frame: Frame): void {
    if (this.closed) {
      throw new SessionClosed('connection closed');
    }
    this.sock.write(encodeFrame(frame));
  }

  close(): void {
    if (this.closed) {
      return;
    }
    this.closed = true;
    this.sock.destroy();
    this.onClose();
  }

  private feed(chunk: Buffer): void {
    this.buffer = Buffer.concat([this.buffer, chunk]);
    for (;;) {
      const nl = this.buffer.indexOf(0x0a);
      if (nl < 0) {
        return;
      }
      const line = this.buffer.subarray(0, nl);
      this.buffer = this.buffer.subarray(nl + 1);
      if (line.length === 0) {
        continue;
      }
      this.onFrame(decodeFrame(line));
    }
  }
}

/** Unbounded async FIFO bridging callback producers to awaiting consumers. */
export class AsyncQueue<T> {
  private items: T[] = [];
  private waiters: Array<(item: T) => void> = [];

  push(item: T): void {
    const waiter = this.waiters.shift();
    if (waiter !== undefined) {
      waiter(item);
    } else {
      this.items.push(item);
    }
  }

  async pop(timeoutMs?: number): Promise<T> {
    const item = this.items.shift();
    if (item !== undefined) {
      return item;
    }
    return new Promise<T>((resolve, reject) => {
      let timer: NodeJS.Timeout | undefined;
      const waiter = (it: T) => {
        if (timer !== undefined) {
          clearTimeout(timer);
        }
        resolve(it);
      };
      if (timeoutMs !== undefined) {
        timer = setTimeout(() => {
          const idx = this.waiters.indexOf(waiter);
          if (idx >= 0) {
            this.waiters.splice(idx, 1);
          }
          reject(new SessionClosed(`queue pop timed out after ${timeoutMs} ms`));
        }, timeoutMs);
      }
      this.waiters.push(waiter);
    });
  }

  popNowait(): T | undefined {
    return this.items.shift();
  }
}
