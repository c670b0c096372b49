#!/usr/bin/env node
/**
 * vdre-export: encode document images and query strings into the engine's
 * corpus format.
 *
 *   vdre-export docs    --manifest docs.jsonl --out docs.vdre [--ocr ocr.jsonl]
 *   vdre-export queries --manifest queries.jsonl --out queries.vdre
 *   vdre-export fixture --out-dir fixture-out
 *
 * `--model local` (default) is the deterministic pixel-projection encoder;
 * `--model <hub id>` loads a transformers.js checkpoint (requires the
 * optional @huggingface/transformers dependency and network access).
 */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { exportDocuments, exportQueries, writeReport } from "./export.js";
import { buildFixture } from "./fixture.js";
import { HfVisionTextModel } from "./hfmodel.js";
import { PatchProjectionModel, type ModelProvider } from "./model.js";
import type { Precision } from "./format.js";

interface ModelArgs {
  model: string;
  dim: number;
  patch: number;
  seed: number;
  maxTokens: number;
  revision?: string;
}

function makeModel(args: ModelArgs): ModelProvider {
  if (args.model === "local") {
    return new PatchProjectionModel({
      dim: args.dim,
      patchSize: args.patch,
      seed: args.seed,
      maxQueryTokens: args.maxTokens,
    });
  }
  return new HfVisionTextModel({ modelId: args.model, revision: args.revision });
}

const modelOptions = {
  model: { type: "string", default: "local", describe: "'local' or a hub model id" },
  dim: { type: "number", default: 48, describe: "embedding width (local model)" },
  patch: { type: "number", default: 16, describe: "patch size in pixels (local model)" },
  seed: { type: "number", default: 5, describe: "projection seed (local model)" },
  "max-tokens": { type: "number", default: 16, describe: "query length incl. prompt and padding" },
  revision: { type: "string", describe: "hub revision (hub models)" },
  precision: { type: "number", default: 32, choices: [32, 16], describe: "stored float width" },
} as const;

async function main(): Promise<void> {
  await yargs(hideBin(process.argv))
    .scriptName("vdre-export")
    .command(
      "docs",
      "encode document images into a corpus file",
      (y) =>
        y.options({
          ...modelOptions,
          manifest: { type: "string", demandOption: true },
          out: { type: "string", demandOption: true },
          ocr: { type: "string", describe: "also write manifest boxes as OCR pages JSONL" },
          report: { type: "string", describe: "write an export report JSON" },
        }),
      async (argv) => {
        const model = makeModel({
          model: argv.model,
          dim: argv.dim,
          patch: argv.patch,
          seed: argv.seed,
          maxTokens: argv["max-tokens"],
          revision: argv.revision,
        });
        const res = await exportDocuments(
          model,
          argv.manifest,
          argv.out,
          argv.precision as Precision,
          argv.ocr,
        );
        if (argv.report) {
          writeReport(argv.report, {
            model: model.id,
            dim: model.dim,
            precision: argv.precision as Precision,
            documents: res.documents,
            queries: [],
            failures: res.failures,
          });
        }
        console.log(
          `exported ${res.documents.length} documents to ${argv.out}` +
            (res.failures.length ? ` (${res.failures.length} failed)` : ""),
        );
        if (res.documents.length === 0) process.exitCode = 1;
      },
    )
    .command(
      "queries",
      "encode query strings into a corpus file with a token sidecar",
      (y) =>
        y.options({
          ...modelOptions,
          manifest: { type: "string", demandOption: true },
          out: { type: "string", demandOption: true },
          report: { type: "string" },
        }),
      async (argv) => {
        const model = makeModel({
          model: argv.model,
          dim: argv.dim,
          patch: argv.patch,
          seed: argv.seed,
          maxTokens: argv["max-tokens"],
          revision: argv.revision,
        });
        const res = await exportQueries(
          model,
          argv.manifest,
          argv.out,
          argv.precision as Precision,
        );
        if (argv.report) {
          writeReport(argv.report, {
            model: model.id,
            dim: model.dim,
            precision: argv.precision as Precision,
            documents: [],
            queries: res.queries,
            failures: res.failures,
          });
        }
        console.log(
          `exported ${res.queries.length} queries to ${argv.out}` +
            (res.failures.length ? ` (${res.failures.length} failed)` : ""),
        );
        if (res.queries.length === 0) process.exitCode = 1;
      },
    )
    .command(
      "fixture",
      "build the self-contained demo corpus (images, manifests, exports, report)",
      (y) =>
        y.options({
          "out-dir": { type: "string", demandOption: true },
          docs: { type: "number", default: 6 },
          queries: { type: "number", default: 4 },
          dim: { type: "number", default: 48 },
          seed: { type: "number", default: 5 },
        }),
      async (argv) => {
        await buildFixture({
          outDir: argv["out-dir"],
          numDocs: argv.docs,
          numQueries: argv.queries,
          dim: argv.dim,
          seed: argv.seed,
        });
        console.log(`fixture written to ${argv["out-dir"]}`);
      },
    )
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      console.error(msg ?? err?.message ?? "unknown error");
      process.exit(err ? 2 : 1);
    })
    .parseAsync();
}

main().catch((err) => {
  console.error(err);
  process.exit(2);
});
