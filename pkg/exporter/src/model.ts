/**
 * Model providers turn images into per-patch embeddings and query strings
 * into per-token embeddings with kind metadata.
 *
 * `PatchProjectionModel` is the built-in deterministic encoder: it tiles
 * the image into fixed-size patches and projects each patch's pixels
 * through a seeded random matrix, then L2-normalizes. Queries get one
 * hashed unit vector per word, a leading prompt token, and right-padding
 * with a shared end-of-text vector up to the configured length. It runs
 * identically everywhere, which is what the format tests and fixture
 * pipeline need; swap in the transformers.js provider for real models.
 */

import type { GrayImage } from "./images.js";
import type { TokenMeta } from "./format.js";

export interface DocEncoding {
  vectors: Float32Array;
  rows: number;
  grid: [number, number];
}

export interface QueryEncoding {
  vectors: Float32Array;
  rows: number;
  tokens: TokenMeta[];
}

export interface ModelProvider {
  readonly id: string;
  readonly dim: number;
  encodeImage(img: GrayImage): Promise<DocEncoding>;
  encodeQuery(text: string): Promise<QueryEncoding>;
}

const MASK64 = (1n << 64n) - 1n;

/** splitmix64; deterministic across platforms. */
class Rng {
  private state: bigint;

  constructor(seed: bigint) {
    this.state = seed & MASK64;
  }

  nextU64(): bigint {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & MASK64;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
    return z ^ (z >> 31n);
  }

  /** uniform in [-1, 1) with 53-bit resolution */
  nextFloat(): number {
    const bits = this.nextU64() >> 11n; // 53 bits
    return (Number(bits) / 2 ** 53) * 2 - 1;
  }
}

function hashString(s: string): bigint {
  // FNV-1a, 64-bit
  let h = 0xcbf29ce484222325n;
  const bytes = Buffer.from(s, "utf-8");
  for (const b of bytes) {
    h = ((h ^ BigInt(b)) * 0x100000001b3n) & MASK64;
  }
  return h;
}

function normalizeInto(out: Float32Array, offset: number, values: number[]): void {
  let norm = 0;
  for (const v of values) norm += v * v;
  norm = Math.sqrt(norm);
  if (norm < 1e-12) {
    throw new Error("zero-norm embedding; projection degenerated");
  }
  for (let i = 0; i < values.length; i++) {
    out[offset + i] = values[i] / norm;
  }
}

export interface PatchProjectionOptions {
  dim?: number;
  patchSize?: number;
  seed?: number;
  maxQueryTokens?: number;
  promptText?: string;
  padText?: string;
}

export class PatchProjectionModel implements ModelProvider {
  readonly id: string;
  readonly dim: number;
  readonly patchSize: number;
  readonly maxQueryTokens: number;
  readonly promptText: string;
  readonly padText: string;
  private readonly projection: Float64Array; // dim x (patchSize^2 + 1), bias last

  constructor(opts: PatchProjectionOptions = {}) {
    this.dim = opts.dim ?? 48;
    this.patchSize = opts.patchSize ?? 16;
    this.maxQueryTokens = opts.maxQueryTokens ?? 16;
    this.promptText = opts.promptText ?? "query:";
    this.padText = opts.padText ?? "<|endoftext|>";
    const seed = opts.seed ?? 0;
    this.id = `patch-projection/p${this.patchSize}-d${this.dim}-s${seed}`;
    const features = this.patchSize * this.patchSize + 1;
    const rng = new Rng(hashString(`projection:${seed}:${this.dim}:${this.patchSize}`));
    this.projection = new Float64Array(this.dim * features);
    for (let i = 0; i < this.projection.length; i++) {
      this.projection[i] = rng.nextFloat();
    }
  }

  async encodeImage(img: GrayImage): Promise<DocEncoding> {
    const p = this.patchSize;
    const gridRows = Math.ceil(img.height / p);
    const gridCols = Math.ceil(img.width / p);
    const rows = gridRows * gridCols;
    const features = p * p + 1;
    const vectors = new Float32Array(rows * this.dim);
    const feat = new Float64Array(features);
    for (let gr = 0; gr < gridRows; gr++) {
      for (let gc = 0; gc < gridCols; gc++) {
        // gather the patch, zero-padding past the image edge
        feat.fill(0);
        for (let y = 0; y < p; y++) {
          const iy = gr * p + y;
          if (iy >= img.height) break;
          for (let x = 0; x < p; x++) {
            const ix = gc * p + x;
            if (ix >= img.width) break;
            feat[y * p + x] = img.pixels[iy * img.width + ix] / 255 - 0.5;
          }
        }
        feat[features - 1] = 1; // bias keeps uniform patches off the zero vector
        const out: number[] = new Array(this.dim);
        for (let k = 0; k < this.dim; k++) {
          let acc = 0;
          const base = k * features;
          for (let i = 0; i < features; i++) {
            acc += this.projection[base + i] * feat[i];
          }
          out[k] = acc;
        }
        normalizeInto(vectors, (gr * gridCols + gc) * this.dim, out);
      }
    }
    return { vectors, rows, grid: [gridRows, gridCols] };
  }

  tokenize(text: string): string[] {
    return text
      .toLowerCase()
      .split(/[^a-z0-9|<>-]+/)
      .filter((t) => t.length > 0);
  }

  private tokenVector(text: string): number[] {
    const rng = new Rng(hashString(`token:${this.id}:${text}`));
    const out: number[] = new Array(this.dim);
    for (let k = 0; k < this.dim; k++) out[k] = rng.nextFloat();
    return out;
  }

  async encodeQuery(text: string): Promise<QueryEncoding> {
    const words = this.tokenize(text);
    const maxText = this.maxQueryTokens - 1; // one slot for the prompt token
    const kept = words.slice(0, maxText);
    const tokens: TokenMeta[] = [{ text: this.promptText, kind: "prompt" }];
    for (const w of kept) {
      tokens.push({ text: w, kind: "query_text" });
    }
    while (tokens.length < this.maxQueryTokens) {
      tokens.push({ text: this.padText, kind: "special_pad" });
    }
    const vectors = new Float32Array(tokens.length * this.dim);
    tokens.forEach((tok, i) => {
      const key = tok.kind === "query_text" ? tok.text : `${tok.kind}:${tok.text}`;
      normalizeInto(vectors, i * this.dim, this.tokenVector(key));
    });
    return { vectors, rows: tokens.length, tokens };
  }
}
