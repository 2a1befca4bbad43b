/** Peer-to-peer last-value-cell access: blocking get/set via a directory. */

import * as fs from 'node:fs';

import { Frame, getFrame, setFrame } from './frames';
import { AsyncQueue, LineConn } from './wire';
import { EmptyCell, PeerUnreachable, RequestTimeout, UnknownSignal } from './errors';
import { SignalRecord } from './broker';

/** signal name -> owner address ("HOST:PORT"), loaded from a JSON object. */
export class PeerDirectory {
  constructor(private readonly owners: Record<string, string>) {}

  static fromFile(path: string): PeerDirectory {
    return new PeerDirectory(JSON.parse(fs.readFileSync(path, 'utf-8')));
  }

  ownerOf(name: string): string {
    const owner = this.owners[name];
    if (owner === undefined) {
      throw new UnknownSignal(`no owner for signal '${name}'`);
    }
    return owner;
  }
}

interface Peer {
  conn: LineConn;
  replies: AsyncQueue<Frame>;
  busy: Promise<unknown>;
}

export class PeerClient {
  private readonly peers = new Map<string, Peer>();

  constructor(
    private readonly directory: PeerDirectory,
    private readonly timeoutMs = 1000,
  ) {}

  close(): void {
    for (const peer of this.peers.values()) {
      peer.conn.close();
    }
    this.peers.clear();
  }

  private async peerFor(address: string): Promise<Peer> {
    const existing = this.peers.get(address);
    if (existing !== undefined && !existing.conn.closed) {
      return existing;
    }
    let conn: LineConn;
    try {
      conn = await LineConn.connect(address, this.timeoutMs);
    } catch (err) {
      throw new PeerUnreachable(`peer ${address}: ${(err as Error).message}`);
    }
    const peer: Peer = { conn, replies: new AsyncQueue<Frame>(), busy: Promise.resolve() };
    conn.onFrame = (frame) => peer.replies.push(frame);
    this.peers.set(address, peer);
    return peer;
  }

  /** One request/response on a peer link; requests are serialized per link. */
  private async request(name: string, frame: Frame): Promise<Frame> {
    const peer = await this.peerFor(this.directory.ownerOf(name));
    const run = peer.busy.then(async () => {
      peer.conn.send(frame);
      try {
        return await peer.replies.pop(this.timeoutMs);
      } catch {
        throw new RequestTimeout(`no reply for '${name}' within ${this.timeoutMs} ms`);
      }
    });
    peer.busy = run.catch(() => {});
    return run;
  }

  private static raiseErr(frame: Frame, name: string): never {
    const code = String(frame.code ?? 'err');
    if (code === 'UnknownSignal') {
      throw new UnknownSignal(`no such signal '${name}'`);
    }
    if (code === 'Empty') {
      throw new EmptyCell(`signal '${name}' has no value yet`);
    }
    throw new PeerUnreachable(`peer error ${code}: ${frame.detail ?? ''}`);
  }

  async get(name: string): Promise<SignalRecord> {
    const reply = await this.request(name, getFrame(name));
    if (reply.op === 'err') {
      PeerClient.raiseErr(reply, name);
    }
    return {
      signal: reply.topic as string,
      value: reply.value as number,
      sendTsNs: reply.ts as number,
      seq: reply.seq as number,
    };
  }

  async set(record: SignalRecord): Promise<boolean> {
    const reply = await this.request(
      record.signal,
      setFrame(record.signal, record.value, record.sendTsNs, record.seq),
    );
    if (reply.op === 'err') {
      PeerClient.raiseErr(reply, record.signal);
    }
    return reply.applied as boolean;
  }
}
