/** Error taxonomy mirroring the reference transport clients. */

export class SmbError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

export class ConnectionRefused extends SmbError {}
export class HandshakeTimeout extends SmbError {}
export class SessionClosed extends SmbError {}
export class BadPattern extends SmbError {}
export class UnknownSignal extends SmbError {}
export class EmptyCell extends SmbError {}
export class PeerUnreachable extends SmbError {}
export class RequestTimeout extends SmbError {}
