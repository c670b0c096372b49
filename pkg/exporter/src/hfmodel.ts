/**
 * Bridge to transformers.js vision-language checkpoints.
 *
 * Loaded lazily: `@huggingface/transformers` is an optional peer
 * dependency, and instantiating a provider downloads model weights, so
 * nothing here runs in offline tests. Patch embeddings come from the
 * vision tower's last hidden state (class token dropped, square grid
 * inferred); query tokens from the text tower's last hidden state with
 * pad/special ids tagged `special_pad` and everything else `query_text`.
 */

import type { TokenMeta } from "./format.js";
import type { GrayImage } from "./images.js";
import type { DocEncoding, ModelProvider, QueryEncoding } from "./model.js";

export interface HfModelOptions {
  modelId: string;
  revision?: string;
  /** extra query prefix tokens to tag as prompt, e.g. "Query:" */
  promptPrefix?: string;
}

const TRANSFORMERS_SPECIFIER = "@huggingface/transformers";

async function transformers(): Promise<any> {
  try {
    // computed specifier: the optional peer dependency is resolved at
    // runtime only, so builds succeed without it installed
    return await import(TRANSFORMERS_SPECIFIER);
  } catch {
    throw new Error(
      "@huggingface/transformers is not installed; " +
        "run `npm install @huggingface/transformers` to use real checkpoints",
    );
  }
}

function l2normalize(row: Float32Array): void {
  let norm = 0;
  for (const v of row) norm += v * v;
  norm = Math.sqrt(norm);
  if (norm < 1e-12) throw new Error("model produced a zero-norm row");
  for (let i = 0; i < row.length; i++) row[i] /= norm;
}

export class HfVisionTextModel implements ModelProvider {
  readonly id: string;
  dim = 0; // known after the first forward pass
  private readonly opts: HfModelOptions;
  private processor: any;
  private visionModel: any;
  private tokenizer: any;
  private textModel: any;

  constructor(opts: HfModelOptions) {
    this.opts = opts;
    this.id = `${opts.modelId}@${opts.revision ?? "main"}`;
  }

  private async ensureVision(): Promise<void> {
    if (this.visionModel) return;
    const t = await transformers();
    this.processor = await t.AutoProcessor.from_pretrained(this.opts.modelId, {
      revision: this.opts.revision,
    });
    this.visionModel = await t.CLIPVisionModel.from_pretrained(this.opts.modelId, {
      revision: this.opts.revision,
    });
  }

  private async ensureText(): Promise<void> {
    if (this.textModel) return;
    const t = await transformers();
    this.tokenizer = await t.AutoTokenizer.from_pretrained(this.opts.modelId, {
      revision: this.opts.revision,
    });
    this.textModel = await t.CLIPTextModel.from_pretrained(this.opts.modelId, {
      revision: this.opts.revision,
    });
  }

  async encodeImage(img: GrayImage): Promise<DocEncoding> {
    await this.ensureVision();
    const t = await transformers();
    // expand grayscale to RGB for the processor
    const rgba = new Uint8ClampedArray(img.width * img.height * 4);
    for (let p = 0; p < img.width * img.height; p++) {
      const v = img.pixels[p];
      rgba[p * 4] = v;
      rgba[p * 4 + 1] = v;
      rgba[p * 4 + 2] = v;
      rgba[p * 4 + 3] = 255;
    }
    const raw = new t.RawImage(rgba, img.width, img.height, 4);
    const inputs = await this.processor(raw);
    const output = await this.visionModel(inputs);
    const hidden = output.last_hidden_state; // [1, 1 + patches, dim]
    const [, seq, dim] = hidden.dims as [number, number, number];
    this.dim = dim;
    const patches = seq - 1; // drop the class token
    const side = Math.round(Math.sqrt(patches));
    if (side * side !== patches) {
      throw new Error(`cannot infer a square grid from ${patches} patches`);
    }
    const data = hidden.data as Float32Array;
    const vectors = new Float32Array(patches * dim);
    for (let p = 0; p < patches; p++) {
      const row = data.subarray((p + 1) * dim, (p + 2) * dim);
      const out = vectors.subarray(p * dim, (p + 1) * dim);
      out.set(row);
      l2normalize(out);
    }
    return { vectors, rows: patches, grid: [side, side] };
  }

  async encodeQuery(text: string): Promise<QueryEncoding> {
    await this.ensureText();
    const prompt = this.opts.promptPrefix ? `${this.opts.promptPrefix} ${text}` : text;
    const encoded = this.tokenizer(prompt, { padding: "max_length", truncation: true });
    const output = await this.textModel(encoded);
    const hidden = output.last_hidden_state; // [1, seq, dim]
    const [, seq, dim] = hidden.dims as [number, number, number];
    this.dim = dim;
    const ids: bigint[] = Array.from(encoded.input_ids.data as BigInt64Array);
    const special = new Set<number>(
      (this.tokenizer.all_special_ids ?? []).map((v: unknown) => Number(v)),
    );
    const promptTokenCount = this.opts.promptPrefix
      ? this.tokenizer(this.opts.promptPrefix).input_ids.data.length
      : 0;
    const data = hidden.data as Float32Array;
    const vectors = new Float32Array(seq * dim);
    const tokens: TokenMeta[] = [];
    for (let i = 0; i < seq; i++) {
      const row = vectors.subarray(i * dim, (i + 1) * dim);
      row.set(data.subarray(i * dim, (i + 1) * dim));
      l2normalize(row);
      const tokenId = Number(ids[i]);
      const surface: string = this.tokenizer.decode([tokenId]);
      let kind: TokenMeta["kind"];
      if (special.has(tokenId)) {
        kind = "special_pad";
      } else if (i < promptTokenCount) {
        kind = "prompt";
      } else {
        kind = "query_text";
      }
      tokens.push({ text: surface || "<unk>", kind });
    }
    return { vectors, rows: seq, tokens };
  }
}
