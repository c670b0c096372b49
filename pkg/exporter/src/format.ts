/**
 * Binary corpus wire format, written bit-exactly.
 *
 * Little-endian layout: magic "VDRE", u16 version = 1, u8 dtype
 * (0 = float32, 1 = float16), u32 dim, u64 record count; then per record:
 * u16 id byte length + UTF-8 id, u32 row count, u32 grid rows, u32 grid
 * cols (0,0 when absent), and row-major values.
 *
 * Token metadata goes into a JSONL sidecar next to the corpus file
 * (`<path>.tokens.jsonl`), one `{"id", "tokens": [{"text", "kind"}]}`
 * object per record.
 */

import { writeFileSync } from "node:fs";

export const MAGIC = "VDRE";
export const FORMAT_VERSION = 1;
export const TOKENS_SIDECAR_SUFFIX = ".tokens.jsonl";

export type TokenKind = "query_text" | "special_pad" | "prompt";

export interface TokenMeta {
  text: string;
  kind: TokenKind;
}

export interface CorpusRecord {
  id: string;
  /** row-major (n x dim) unit-norm vectors */
  vectors: Float32Array;
  rows: number;
  grid?: [number, number];
  tokens?: TokenMeta[];
}

export type Precision = 32 | 16;

/** IEEE 754 binary16 encoding with round-to-nearest-even. */
export function floatToHalf(value: number): number {
  const f32 = new Float32Array(1);
  const u32 = new Uint32Array(f32.buffer);
  f32[0] = value;
  const x = u32[0];
  const sign = (x >>> 16) & 0x8000;
  let exp = (x >>> 23) & 0xff;
  let mant = x & 0x7fffff;
  if (exp === 0xff) {
    // inf / nan
    return sign | 0x7c00 | (mant ? 0x200 : 0);
  }
  // re-bias from 127 to 15
  let halfExp = exp - 127 + 15;
  if (halfExp >= 0x1f) {
    return sign | 0x7c00; // overflow to inf
  }
  if (halfExp <= 0) {
    if (halfExp < -10) {
      return sign; // underflow to signed zero
    }
    // subnormal half: shift in the implicit bit
    mant |= 0x800000;
    const shift = 14 - halfExp;
    const half = mant >>> shift;
    const rest = mant & ((1 << shift) - 1);
    const halfway = 1 << (shift - 1);
    if (rest > halfway || (rest === halfway && (half & 1))) {
      return sign | (half + 1);
    }
    return sign | half;
  }
  const half = (halfExp << 10) | (mant >>> 13);
  const rest = mant & 0x1fff;
  if (rest > 0x1000 || (rest === 0x1000 && (half & 1))) {
    return sign | (half + 1); // may carry into the exponent, which is correct
  }
  return sign | half;
}

export function halfToFloat(h: number): number {
  const sign = (h & 0x8000) >>> 15;
  const exp = (h & 0x7c00) >>> 10;
  const mant = h & 0x3ff;
  let value: number;
  if (exp === 0) {
    value = mant * 2 ** -24;
  } else if (exp === 0x1f) {
    value = mant ? Number.NaN : Number.POSITIVE_INFINITY;
  } else {
    value = (mant / 1024 + 1) * 2 ** (exp - 15);
  }
  return sign ? -value : value;
}

export function encodeCorpus(records: CorpusRecord[], dim: number, precision: Precision = 32): Buffer {
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(19);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt16LE(FORMAT_VERSION, 4);
  header.writeUInt8(precision === 32 ? 0 : 1, 6);
  header.writeUInt32LE(dim, 7);
  header.writeBigUInt64LE(BigInt(records.length), 11);
  chunks.push(header);

  for (const rec of records) {
    if (rec.vectors.length !== rec.rows * dim) {
      throw new Error(`record ${rec.id}: ${rec.vectors.length} values for ${rec.rows}x${dim}`);
    }
    if (rec.grid && rec.grid[0] * rec.grid[1] !== rec.rows) {
      throw new Error(`record ${rec.id}: grid ${rec.grid.join("x")} does not cover ${rec.rows} rows`);
    }
    const idBytes = Buffer.from(rec.id, "utf-8");
    if (idBytes.length > 0xffff) {
      throw new Error(`record ${rec.id}: id exceeds 65535 bytes`);
    }
    const head = Buffer.alloc(2 + idBytes.length + 12);
    head.writeUInt16LE(idBytes.length, 0);
    idBytes.copy(head, 2);
    head.writeUInt32LE(rec.rows, 2 + idBytes.length);
    head.writeUInt32LE(rec.grid ? rec.grid[0] : 0, 6 + idBytes.length);
    head.writeUInt32LE(rec.grid ? rec.grid[1] : 0, 10 + idBytes.length);
    chunks.push(head);

    if (precision === 32) {
      const payload = Buffer.alloc(rec.vectors.length * 4);
      for (let i = 0; i < rec.vectors.length; i++) {
        payload.writeFloatLE(rec.vectors[i], i * 4);
      }
      chunks.push(payload);
    } else {
      const payload = Buffer.alloc(rec.vectors.length * 2);
      for (let i = 0; i < rec.vectors.length; i++) {
        payload.writeUInt16LE(floatToHalf(rec.vectors[i]), i * 2);
      }
      chunks.push(payload);
    }
  }
  return Buffer.concat(chunks);
}

export function writeCorpus(
  path: string,
  records: CorpusRecord[],
  dim: number,
  precision: Precision = 32,
): void {
  writeFileSync(path, encodeCorpus(records, dim, precision));
  const withTokens = records.filter((r) => r.tokens !== undefined);
  if (withTokens.length > 0) {
    const lines = withTokens.map((r) =>
      JSON.stringify({
        id: r.id,
        tokens: r.tokens!.map((t) => ({ text: t.text, kind: t.kind })),
      }),
    );
    writeFileSync(path + TOKENS_SIDECAR_SUFFIX, lines.join("\n") + "\n");
  }
}

/** Parse a corpus buffer back; used by tests to prove the writer round-trips. */
export function decodeCorpus(buf: Buffer): { dim: number; precision: Precision; records: CorpusRecord[] } {
  if (buf.length < 19) throw new Error("truncated header");
  if (buf.toString("ascii", 0, 4) !== MAGIC) throw new Error("bad magic");
  const version = buf.readUInt16LE(4);
  if (version !== FORMAT_VERSION) throw new Error(`unsupported version ${version}`);
  const dtype = buf.readUInt8(6);
  if (dtype !== 0 && dtype !== 1) throw new Error(`unknown dtype ${dtype}`);
  const dim = buf.readUInt32LE(7);
  const count = Number(buf.readBigUInt64LE(11));
  let off = 19;
  const records: CorpusRecord[] = [];
  for (let r = 0; r < count; r++) {
    const idLen = buf.readUInt16LE(off);
    off += 2;
    const id = buf.toString("utf-8", off, off + idLen);
    off += idLen;
    const rows = buf.readUInt32LE(off);
    const gr = buf.readUInt32LE(off + 4);
    const gc = buf.readUInt32LE(off + 8);
    off += 12;
    const vectors = new Float32Array(rows * dim);
    if (dtype === 0) {
      for (let i = 0; i < vectors.length; i++) {
        vectors[i] = buf.readFloatLE(off);
        off += 4;
      }
    } else {
      for (let i = 0; i < vectors.length; i++) {
        vectors[i] = halfToFloat(buf.readUInt16LE(off));
        off += 2;
      }
    }
    records.push({ id, rows, vectors, grid: gr || gc ? [gr, gc] : undefined });
  }
  if (off !== buf.length) throw new Error(`${buf.length - off} trailing bytes`);
  return { dim, precision: dtype === 0 ? 32 : 16, records };
}
