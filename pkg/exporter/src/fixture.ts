/**
 * Self-contained demo fixture: synthesizes small document-page images
 * (white background, dark word boxes, one gray figure block), writes the
 * manifests, and exports a mini corpus with the deterministic encoder.
 * The result is what the engine-side conformance test consumes.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { exportDocuments, exportQueries, writeReport, OcrBox } from "./export.js";
import { writePgm } from "./images.js";
import type { GrayImage } from "./images.js";
import { PatchProjectionModel } from "./model.js";

const PAGE_WIDTH = 128;
const PAGE_HEIGHT = 96;
const WORDS = [
  "health", "team", "works", "services", "report", "figure",
  "energy", "policy", "table", "summary", "annual", "review",
];

function renderPage(docIndex: number, words: string[]): { image: GrayImage; boxes: OcrBox[] } {
  const pixels = new Uint8Array(PAGE_WIDTH * PAGE_HEIGHT).fill(255);
  const boxes: OcrBox[] = [];
  const boxW = 24;
  const boxH = 8;
  words.forEach((word, i) => {
    const col = i % 4;
    const row = Math.floor(i / 4);
    const x = 4 + col * (boxW + 6);
    const y = 4 + row * (boxH + 6);
    for (let yy = y; yy < y + boxH; yy++) {
      for (let xx = x; xx < x + boxW; xx++) {
        pixels[yy * PAGE_WIDTH + xx] = 40;
      }
    }
    boxes.push({ x, y, w: boxW, h: boxH, text: word });
  });
  // one gray figure block whose position shifts per document
  const fx = 8 + (docIndex * 13) % 40;
  const fy = 56;
  for (let yy = fy; yy < fy + 28; yy++) {
    for (let xx = fx; xx < fx + 48; xx++) {
      pixels[yy * PAGE_WIDTH + xx] = 128;
    }
  }
  return { image: { width: PAGE_WIDTH, height: PAGE_HEIGHT, pixels }, boxes };
}

export interface FixtureOptions {
  outDir: string;
  numDocs?: number;
  numQueries?: number;
  dim?: number;
  seed?: number;
}

export async function buildFixture(opts: FixtureOptions): Promise<void> {
  const numDocs = Math.min(opts.numDocs ?? 6, 10);
  const numQueries = opts.numQueries ?? 4;
  const outDir = opts.outDir;
  const imagesDir = join(outDir, "images");
  mkdirSync(imagesDir, { recursive: true });

  const docLines: string[] = [];
  for (let d = 0; d < numDocs; d++) {
    const words = [WORDS[d % WORDS.length], WORDS[(d + 3) % WORDS.length], WORDS[(d + 7) % WORDS.length]];
    const { image, boxes } = renderPage(d, words);
    const name = `page${d}.pgm`;
    writeFileSync(join(imagesDir, name), writePgm(image));
    docLines.push(JSON.stringify({ id: `page${d}`, image: join("images", name), boxes }));
  }
  writeFileSync(join(outDir, "docs.manifest.jsonl"), docLines.join("\n") + "\n");

  const queryLines: string[] = [];
  for (let q = 0; q < numQueries; q++) {
    const text = `what does the ${WORDS[q % WORDS.length]} ${WORDS[(q + 3) % WORDS.length]} provide`;
    queryLines.push(JSON.stringify({ id: `query${q}`, text }));
  }
  writeFileSync(join(outDir, "queries.manifest.jsonl"), queryLines.join("\n") + "\n");

  const model = new PatchProjectionModel({
    dim: opts.dim ?? 48,
    patchSize: 16,
    seed: opts.seed ?? 5,
    maxQueryTokens: 12,
  });
  const docs = await exportDocuments(
    model,
    join(outDir, "docs.manifest.jsonl"),
    join(outDir, "docs.vdre"),
    32,
    join(outDir, "ocr.jsonl"),
  );
  const queries = await exportQueries(
    model,
    join(outDir, "queries.manifest.jsonl"),
    join(outDir, "queries.vdre"),
    32,
  );
  writeReport(join(outDir, "report.json"), {
    model: model.id,
    dim: model.dim,
    precision: 32,
    documents: docs.documents,
    queries: queries.queries,
    failures: [...docs.failures, ...queries.failures],
  });
}
