/** Broker session: subscribe / publish / receive, client role only. */

import { Frame, pubFrame, subFrame } from './frames';
import { AsyncQueue, LineConn, WallClock } from './wire';
import { BadPattern, ConnectionRefused, HandshakeTimeout, SessionClosed } from './errors';

export interface SignalRecord {
  signal: string;
  value: number;
  sendTsNs: number;
  seq: number;
}

const PATTERN_RE = /^[A-Za-z0-9_./-]+$/;

/** Exact topic name, or a single trailing '/*' wildcard. */
export function validatePattern(pattern: string): string {
  if (!pattern) {
    throw new BadPattern('empty pattern');
  }
  const body = pattern.endsWith('/*') ? pattern.slice(0, -2) : pattern;
  if (body.includes('*')) {
    throw new BadPattern(`bad wildcard in '${pattern}'`);
  }
  if (!body || !PATTERN_RE.test(body)) {
    throw new BadPattern(`bad topic characters in '${pattern}'`);
  }
  return pattern;
}

export function topicMatches(pattern: string, topic: string): boolean {
  if (pattern.endsWith('/*')) {
    return topic.startsWith(pattern.slice(0, -1));
  }
  return topic === pattern;
}

export class SubscriptionStream {
  private readonly queue = new AsyncQueue<SignalRecord>();

  constructor(readonly pattern: string) {}

  push(record: SignalRecord): void {
    this.queue.push(record);
  }

  get(timeoutMs?: number): Promise<SignalRecord> {
    return this.queue.pop(timeoutMs);
  }

  getNowait(): SignalRecord | undefined {
    return this.queue.popNowait();
  }
}

export class BrokerClient {
  clientId: string | null = null;
  onRecord: ((record: SignalRecord) => void) | null = null;
  readonly clock: WallClock;
  private readonly streams: SubscriptionStream[] = [];
  private readonly acks = new AsyncQueue<number | Error>();
  private awaited = 0; // publishes/subscribes currently waiting for an ack
  private readonly seq = new Map<string, number>();
  private welcomed: Promise<void>;
  private welcomeResolve: () => void = () => {};

  constructor(private readonly conn: LineConn, clock?: WallClock) {
    this.clock = clock ?? new WallClock();
    this.welcomed = new Promise((resolve) => {
      this.welcomeResolve = resolve;
    });
    conn.onFrame = (frame) => this.onFrame(frame);
  }

  static async connect(address: string, timeoutMs = 5000): Promise<BrokerClient> {
    const client = new BrokerClient(await LineConn.connect(address, timeoutMs));
    await client.waitWelcome(timeoutMs);
    return client;
  }

  private async waitWelcome(timeoutMs: number): Promise<void> {
    const timeout = new Promise<never>((_, reject) =>
      setTimeout(() => reject(new HandshakeTimeout('no welcome from broker')), timeoutMs));
    try {
      await Promise.race([this.welcomed, timeout]);
    } catch (err) {
      this.close();
      throw err;
    }
    if (this.clientId === null) {
      throw new ConnectionRefused('broker refused the session');
    }
  }

  close(): void {
    this.conn.close();
  }

  private onFrame(frame: Frame): void {
    switch (frame.op) {
      case 'welcome':
        this.clientId = frame.client as string;
        this.welcomeResolve();
        break;
      case 'ack':
        if (this.awaited > 0) {
          this.acks.push(frame.ts as number);
        }
        // acks for fire-and-forget publishes are dropped
        break;
      case 'err':
        this.acks.push(new BadPattern(String(frame.code ?? 'err')));
        break;
      case 'msg': {
        const record: SignalRecord = {
          signal: frame.topic as string,
          value: frame.value as number,
          sendTsNs: frame.ts as number,
          seq: frame.seq as number,
        };
        if (this.onRecord !== null) {
          this.onRecord(record);
        }
        for (const stream of this.streams) {
          if (topicMatches(stream.pattern, record.signal)) {
            stream.push(record);
          }
        }
        break;
      }
      default:
        break; // unknown ops ignored
    }
  }

  private async awaitAck(timeoutMs: number): Promise<number> {
    this.awaited += 1;
    try {
      const ack = await this.acks.pop(timeoutMs);
      if (ack instanceof Error) {
        throw ack;
      }
      return ack;
    } finally {
      this.awaited -= 1;
    }
  }

  async subscribe(pattern: string, timeoutMs = 5000): Promise<SubscriptionStream> {
    validatePattern(pattern);
    const stream = new SubscriptionStream(pattern);
    this.streams.push(stream);
    this.conn.send(subFrame(pattern));
    try {
      await this.awaitAck(timeoutMs);
    } catch (err) {
      if (err instanceof SessionClosed) {
        throw new SessionClosed('no ack from broker (timeout)');
      }
      throw err;
    }
    return stream;
  }

  async publish(
    topic: string,
    value: number,
    tsNs?: number,
    seq?: number,
    waitAck = true,
    timeoutMs = 5000,
  ): Promise<number | null> {
    const ts = tsNs ?? this.clock.nanos();
    let useSeq = seq;
    if (useSeq === undefined) {
      useSeq = (this.seq.get(topic) ?? 0) + 1;
      this.seq.set(topic, useSeq);
    }
    this.conn.send(pubFrame(topic, value, ts, useSeq));
    if (!waitAck) {
      return null;
    }
    return this.awaitAck(timeoutMs);
  }
}
