export { encodeFrame, decodeFrame, FRAME_KEYS, subFrame, pubFrame, getFrame, setFrame } from './frames';
export type { Frame, FrameOp } from './frames';
export { BrokerClient, SubscriptionStream, validatePattern, topicMatches } from './broker';
export type { SignalRecord } from './broker';
export { PeerClient, PeerDirectory } from './p2p';
export { runEchoTask, samplesCsv, taskOutTopic, drtsOutTopic } from './echo';
export type { EchoResult, RttSample } from './echo';
export { LineConn, WallClock, AsyncQueue, parseAddress, MS } from './wire';
export * from './errors';
