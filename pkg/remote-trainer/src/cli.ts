#!/usr/bin/env node
/** Command-line entry: start one worker against a completion service. */
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { DatasetKind } from "./datasets.js";
import { runWorker } from "./worker.js";

async function main(): Promise<void> {
  const argv = await yargs(hideBin(process.argv))
    .scriptName("remote-trainer")
    .option("host", { type: "string", default: "127.0.0.1" })
    .option("port", { type: "number", demandOption: true })
    .option("worker-id", { type: "string", default: `trainer-${process.pid}` })
    .option("dataset", {
      type: "string",
      choices: ["auto", "linear", "parity", "digits"] as const,
      default: "auto",
      describe: "toy dataset family; auto picks by input rank",
    })
    .option("poll-interval", {
      type: "number",
      default: 500,
      describe: "idle backoff in milliseconds",
    })
    .option("reconnect-attempts", { type: "number", default: 5 })
    .option("max-tasks", { type: "number" })
    .option("seed", { type: "number", default: 7 })
    .strict()
    .help()
    .parse();

  const workerId = argv["worker-id"];
  const completed = await runWorker(argv.host, argv.port, workerId, {
    dataset: argv.dataset as DatasetKind,
    pollMs: argv["poll-interval"],
    reconnectAttempts: argv["reconnect-attempts"],
    maxTasks: argv["max-tasks"],
    seed: argv.seed,
    log: (line) => console.error(line),
  });
  console.log(`${workerId}: completed ${completed} tasks`);
}

main().catch((err) => {
  console.error(err instanceof Error ? err.message : String(err));
  process.exit(1);
});
