#!/usr/bin/env node
/**
 * smb-echo-task --broker HOST:PORT --id N [--period-ms 500] [--samples 1000]
 *               [--csv FILE]
 *
 * Runs one echo task against a running broker (a DRTS must be mirroring
 * task<N>/out to drts/out<N>) and writes RTT samples as CSV to --csv or
 * stdout. Exit 0 on success, 3 if nothing came back, 1 on transport errors.
 */

import * as fs from 'node:fs';

import { BrokerClient } from './broker';
import { runEchoTask, samplesCsv } from './echo';
import { SmbError } from './errors';
import { MS } from './wire';

interface Args {
  broker: string;
  id: number;
  periodMs: number;
  samples: number;
  csv?: string;
}

function usage(): never {
  process.stderr.write(
    'usage: smb-echo-task --broker HOST:PORT --id N [--period-ms 500] ' +
      '[--samples 1000] [--csv FILE]\n',
  );
  process.exit(2);
}

function parseArgs(argv: string[]): Args {
  const args: Partial<Args> = { periodMs: 500, samples: 1000 };
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (value === undefined) {
      usage();
    }
    switch (flag) {
      case '--broker':
        args.broker = value;
        break;
      case '--id':
        args.id = Number(value);
        break;
      case '--period-ms':
        args.periodMs = Number(value);
        break;
      case '--samples':
        args.samples = Number(value);
        break;
      case '--csv':
        args.csv = value;
        break;
      default:
        usage();
    }
  }
  if (
    args.broker === undefined ||
    args.id === undefined ||
    !Number.isInteger(args.id) ||
    !Number.isInteger(args.periodMs) ||
    args.periodMs! < 1 ||
    !Number.isInteger(args.samples) ||
    args.samples! < 0
  ) {
    usage();
  }
  return args as Args;
}

async function main(): Promise<number> {
  const args = parseArgs(process.argv.slice(2));
  const client = await BrokerClient.connect(args.broker);
  let text: string;
  let gotSamples: boolean;
  try {
    const result = await runEchoTask(client, args.id, args.periodMs * MS, args.samples);
    text = samplesCsv(result);
    gotSamples = result.samples.length > 0 || args.samples === 0;
  } finally {
    client.close();
  }
  if (args.csv !== undefined) {
    fs.writeFileSync(args.csv, text);
  } else {
    process.stdout.write(text);
  }
  return gotSamples ? 0 : 3; // sent but received nothing back
}

main()
  .then((code) => process.exit(code))
  .catch((err) => {
    const msg = err instanceof SmbError ? err.message : String(err);
    process.stderr.write(`error: ${msg}\n`);
    process.exit(1);
  });
