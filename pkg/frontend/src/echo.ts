/** Echo benchmark task: behavioral clone of the reference runtime task. */

import { BrokerClient } from './broker';
import { MS, sleep } from './wire';

export interface RttSample {
  taskId: number;
  value: number;
  tOutNs: number;
  tInNs: number;
  rttNs: number;
}

export interface EchoResult {
  taskId: number;
  samples: RttSample[];
  lost: number;
}

const pad2 = (n: number): string => String(n).padStart(2, '0');

export const taskOutTopic = (taskId: number): string => `task${pad2(taskId)}/out`;
export const drtsOutTopic = (pair: number): string => `drts/out${pad2(pair)}`;

/**
 * Send nSamples increments at the given period over an open broker session;
 * match their mirrored return by value. Outstanding values time out after
 * timeoutFactor * period and are counted as lost.
 */
export async function runEchoTask(
  client: BrokerClient,
  taskId: number,
  periodNs: number,
  nSamples: number,
  timeoutFactor = 10,
): Promise<EchoResult> {
  const result: EchoResult = { taskId, samples: [], lost: 0 };
  if (nSamples === 0) {
    return result;
  }
  const pending = new Map<number, number>(); // value -> t_out ns
  const outTopic = taskOutTopic(taskId);

  const stream = await client.subscribe(drtsOutTopic(taskId));
  client.onRecord = (record) => {
    if (record.signal !== stream.pattern) {
      return;
    }
    const tIn = client.clock.nanos();
    const tOut = pending.get(record.value);
    if (tOut !== undefined) {
      pending.delete(record.value);
      result.samples.push({
        taskId,
        value: record.value,
        tOutNs: tOut,
        tInNs: tIn,
        rttNs: tIn - tOut,
      });
    }
  };

  const periodMs = periodNs / MS;
  const start = client.clock.nanos();
  for (let i = 1; i <= nSamples; i += 1) {
    const x = i;
    const tOut = client.clock.nanos();
    pending.set(x, tOut);
    await client.publish(outTopic, x, tOut, x, false);
    // drift-free pacing against absolute deadlines
    const deadlineMs = (start + i * periodNs) / MS;
    const waitMs = deadlineMs - client.clock.nanos() / MS;
    if (waitMs > 0) {
      await sleep(waitMs);
    }
  }
  // grace period for stragglers
  const hardStop = client.clock.nanos() + timeoutFactor * periodNs;
  while (pending.size > 0 && client.clock.nanos() < hardStop) {
    await sleep(Math.min(10, periodMs));
  }
  result.lost = pending.size;
  pending.clear();
  result.samples.sort((a, b) => a.tOutNs - b.tOutNs);
  return result;
}

/** Value column uses the same float rendering as the wire frames ("1.0"). */
const fmtValue = (v: number): string =>
  Number.isInteger(v) && Math.abs(v) < 1e16 ? `${v}.0` : String(v);

export function samplesCsv(result: EchoResult): string {
  const lines = ['task_id,value,t_out_ns,t_in_ns,rtt_ns'];
  for (const s of result.samples) {
    lines.push(`${s.taskId},${fmtValue(s.value)},${s.tOutNs},${s.tInNs},${s.rttNs}`);
  }
  return `${lines.join('\n')}\n`;
}
