/**
 * Export jobs: read a line-delimited JSON manifest, run a model provider,
 * and write the corpus file plus sidecars. Per-image failures are logged
 * and skipped, and collected into the report's failure manifest.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { dirname, resolve } from "node:path";

import { CorpusRecord, Precision, writeCorpus } from "./format.js";
import { loadImage } from "./images.js";
import type { ModelProvider } from "./model.js";

export interface OcrBox {
  x: number;
  y: number;
  w: number;
  h: number;
  text: string;
}

export interface DocManifestEntry {
  id: string;
  image: string;
  width?: number;
  height?: number;
  boxes?: OcrBox[];
}

export interface QueryManifestEntry {
  id: string;
  text: string;
}

export interface ExportFailure {
  id: string;
  error: string;
}

export interface DocReportEntry {
  id: string;
  patch_count: number;
  grid: [number, number];
}

export interface QueryReportEntry {
  id: string;
  token_count: number;
  kinds: { query_text: number; special_pad: number; prompt: number };
}

export interface ExportReport {
  model: string;
  dim: number;
  precision: Precision;
  documents: DocReportEntry[];
  queries: QueryReportEntry[];
  failures: ExportFailure[];
}

export function readManifest<T>(path: string): T[] {
  const out: T[] = [];
  const lines = readFileSync(path, "utf-8").split("\n");
  for (const [i, line] of lines.entries()) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    try {
      out.push(JSON.parse(trimmed) as T);
    } catch (err) {
      throw new Error(`${path}: line ${i + 1}: invalid JSON (${err})`);
    }
  }
  return out;
}

export async function exportDocuments(
  model: ModelProvider,
  manifestPath: string,
  outPath: string,
  precision: Precision = 32,
  ocrOutPath?: string,
): Promise<{ documents: DocReportEntry[]; failures: ExportFailure[] }> {
  const entries = readManifest<DocManifestEntry>(manifestPath);
  const baseDir = dirname(resolve(manifestPath));
  const records: CorpusRecord[] = [];
  const documents: DocReportEntry[] = [];
  const failures: ExportFailure[] = [];
  const ocrLines: string[] = [];
  for (const entry of entries) {
    try {
      if (!entry.id || !entry.image) {
        throw new Error("manifest entry needs 'id' and 'image'");
      }
      const image = await loadImage(resolve(baseDir, entry.image));
      const enc = await model.encodeImage(image);
      records.push({ id: entry.id, vectors: enc.vectors, rows: enc.rows, grid: enc.grid });
      documents.push({ id: entry.id, patch_count: enc.rows, grid: enc.grid });
      if (ocrOutPath && entry.boxes) {
        ocrLines.push(
          JSON.stringify({
            doc_id: entry.id,
            width: entry.width ?? image.width,
            height: entry.height ?? image.height,
            boxes: entry.boxes,
          }),
        );
      }
    } catch (err) {
      console.error(`skipping document ${entry.id ?? "(no id)"}: ${err}`);
      failures.push({ id: entry.id ?? "(no id)", error: String(err) });
    }
  }
  writeCorpus(outPath, records, model.dim, precision);
  if (ocrOutPath && ocrLines.length > 0) {
    writeFileSync(ocrOutPath, ocrLines.join("\n") + "\n");
  }
  return { documents, failures };
}

export async function exportQueries(
  model: ModelProvider,
  manifestPath: string,
  outPath: string,
  precision: Precision = 32,
): Promise<{ queries: QueryReportEntry[]; failures: ExportFailure[] }> {
  const entries = readManifest<QueryManifestEntry>(manifestPath);
  const records: CorpusRecord[] = [];
  const queries: QueryReportEntry[] = [];
  const failures: ExportFailure[] = [];
  for (const entry of entries) {
    try {
      if (!entry.id || entry.text === undefined) {
        throw new Error("manifest entry needs 'id' and 'text'");
      }
      const enc = await model.encodeQuery(entry.text);
      if (enc.tokens.length !== enc.rows) {
        throw new Error(`token metadata length ${enc.tokens.length} != rows ${enc.rows}`);
      }
      records.push({ id: entry.id, vectors: enc.vectors, rows: enc.rows, tokens: enc.tokens });
      const kinds = { query_text: 0, special_pad: 0, prompt: 0 };
      for (const tok of enc.tokens) kinds[tok.kind] += 1;
      queries.push({ id: entry.id, token_count: enc.rows, kinds });
    } catch (err) {
      console.error(`skipping query ${entry.id ?? "(no id)"}: ${err}`);
      failures.push({ id: entry.id ?? "(no id)", error: String(err) });
    }
  }
  writeCorpus(outPath, records, model.dim, precision);
  return { queries, failures };
}

export function writeReport(path: string, report: ExportReport): void {
  writeFileSync(path, JSON.stringify(report, null, 2) + "\n");
}
