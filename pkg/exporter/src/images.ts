/**
 * Image loading: PGM/PPM parsed natively, PNG via pngjs. Everything is
 * reduced to 8-bit grayscale, which is what the encoders consume.
 */

import { readFileSync } from "node:fs";
import { extname } from "node:path";

export interface GrayImage {
  width: number;
  height: number;
  /** row-major, width*height bytes */
  pixels: Uint8Array;
}

function parseNetpbmHeader(buf: Buffer): { magic: string; values: number[]; offset: number } {
  // magic, then whitespace-separated integers with '#' comments
  const magic = buf.toString("ascii", 0, 2);
  const values: number[] = [];
  let i = 2;
  let current = "";
  let inComment = false;
  while (i < buf.length && values.length < 3) {
    const ch = buf[i];
    if (inComment) {
      if (ch === 0x0a) inComment = false;
    } else if (ch === 0x23) {
      inComment = true;
    } else if (ch === 0x20 || ch === 0x09 || ch === 0x0a || ch === 0x0d) {
      if (current) {
        values.push(Number.parseInt(current, 10));
        current = "";
      }
    } else {
      current += String.fromCharCode(ch);
    }
    i++;
  }
  return { magic, values, offset: i };
}

export function loadPgm(buf: Buffer): GrayImage {
  const { magic, values, offset } = parseNetpbmHeader(buf);
  if (magic !== "P5" && magic !== "P6") {
    throw new Error(`unsupported netpbm magic ${magic}`);
  }
  const [width, height, maxval] = values;
  if (!width || !height || !maxval || maxval > 255) {
    throw new Error("unsupported netpbm header");
  }
  const channels = magic === "P5" ? 1 : 3;
  const need = width * height * channels;
  if (buf.length < offset + need) {
    throw new Error("truncated netpbm payload");
  }
  const pixels = new Uint8Array(width * height);
  if (channels === 1) {
    pixels.set(buf.subarray(offset, offset + need));
  } else {
    for (let p = 0; p < width * height; p++) {
      const r = buf[offset + p * 3];
      const g = buf[offset + p * 3 + 1];
      const b = buf[offset + p * 3 + 2];
      pixels[p] = Math.round(0.299 * r + 0.587 * g + 0.114 * b);
    }
  }
  return { width, height, pixels };
}

export function writePgm(img: GrayImage): Buffer {
  const header = Buffer.from(`P5\n${img.width} ${img.height}\n255\n`, "ascii");
  return Buffer.concat([header, Buffer.from(img.pixels)]);
}

async function loadPng(buf: Buffer): Promise<GrayImage> {
  const { PNG } = await import("pngjs");
  const png = PNG.sync.read(buf);
  const pixels = new Uint8Array(png.width * png.height);
  for (let p = 0; p < pixels.length; p++) {
    const r = png.data[p * 4];
    const g = png.data[p * 4 + 1];
    const b = png.data[p * 4 + 2];
    pixels[p] = Math.round(0.299 * r + 0.587 * g + 0.114 * b);
  }
  return { width: png.width, height: png.height, pixels };
}

export async function loadImage(path: string): Promise<GrayImage> {
  const buf = readFileSync(path);
  const ext = extname(path).toLowerCase();
  if (ext === ".pgm" || ext === ".ppm") {
    return loadPgm(buf);
  }
  if (ext === ".png") {
    return loadPng(buf);
  }
  throw new Error(`unsupported image format ${ext || "(none)"} for ${path}`);
}
