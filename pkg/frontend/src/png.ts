/** Deterministic 8-bit grayscale PNG encoding and decoding.
 *
 * The encoder always produces the same bytes for the same pixels: zlib
 * "stored" (uncompressed) deflate blocks, one IDAT chunk, no ancillary
 * chunks, no timestamps. Any standards-compliant reader accepts the
 * output; the bundled decoder accepts exactly what the encoder emits
 * (gray8, filter 0, stored blocks), which is all the tests need.
 */

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]!) & 0xff]! ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

export function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]!) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32be(value: number): Uint8Array {
  return new Uint8Array([
    (value >>> 24) & 0xff,
    (value >>> 16) & 0xff,
    (value >>> 8) & 0xff,
    value & 0xff,
  ]);
}

function ascii(text: string): Uint8Array {
  const out = new Uint8Array(text.length);
  for (let i = 0; i < text.length; i++) out[i] = text.charCodeAt(i);
  return out;
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((sum, p) => sum + p.length, 0);
  const out = new Uint8Array(total);
  let at = 0;
  for (const p of parts) {
    out.set(p, at);
    at += p.length;
  }
  return out;
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const body = concat([ascii(type), data]);
  return concat([u32be(data.length), body, u32be(crc32(body))]);
}

/** Wrap raw bytes in a zlib stream of uncompressed deflate blocks. */
function zlibStored(raw: Uint8Array): Uint8Array {
  const parts: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  const max = 65535;
  for (let at = 0; at < raw.length || at === 0; at += max) {
    const piece = raw.subarray(at, Math.min(at + max, raw.length));
    const final = at + max >= raw.length ? 1 : 0;
    parts.push(new Uint8Array([
      final,
      piece.length & 0xff,
      (piece.length >>> 8) & 0xff,
      ~piece.length & 0xff,
      (~piece.length >>> 8) & 0xff,
    ]));
    parts.push(piece);
    if (raw.length === 0) break;
  }
  parts.push(u32be(adler32(raw)));
  return concat(parts);
}

/** Encode 8-bit grayscale pixels (row-major, length width*height). */
export function encodeGrayPng(
  width: number,
  height: number,
  pixels: Uint8Array,
): Uint8Array {
  if (!Number.isInteger(width) || !Number.isInteger(height) ||
      width < 1 || height < 1) {
    throw new Error("image size must be at least 1x1");
  }
  if (pixels.length !== width * height) {
    throw new Error(`expected ${width * height} pixels, got ${pixels.length}`);
  }
  const raw = new Uint8Array(height * (width + 1));
  for (let row = 0; row < height; row++) {
    raw[row * (width + 1)] = 0; // filter: none
    raw.set(pixels.subarray(row * width, (row + 1) * width),
            row * (width + 1) + 1);
  }
  const ihdr = concat([
    u32be(width),
    u32be(height),
    new Uint8Array([8, 0, 0, 0, 0]), // gray8, deflate, adaptive, progressive off
  ]);
  return concat([
    new Uint8Array(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", zlibStored(raw)),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

export interface GrayImage {
  width: number;
  height: number;
  pixels: Uint8Array;
}

function readU32be(bytes: Uint8Array, at: number): number {
  return (
    ((bytes[at]! << 24) | (bytes[at + 1]! << 16) |
     (bytes[at + 2]! << 8) | bytes[at + 3]!) >>> 0
  );
}

/** Decode a gray8 PNG produced by encodeGrayPng (filter 0, stored blocks). */
export function decodeGrayPng(bytes: Uint8Array): GrayImage {
  for (let i = 0; i < SIGNATURE.length; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG file");
  }
  let at = SIGNATURE.length;
  let width = 0;
  let height = 0;
  const idat: Uint8Array[] = [];
  while (at < bytes.length) {
    const length = readU32be(bytes, at);
    const type = String.fromCharCode(
      bytes[at + 4]!, bytes[at + 5]!, bytes[at + 6]!, bytes[at + 7]!);
    const data = bytes.subarray(at + 8, at + 8 + length);
    const stored = readU32be(bytes, at + 8 + length);
    const body = bytes.subarray(at + 4, at + 8 + length);
    if (crc32(body) !== stored) throw new Error(`bad CRC in ${type}`);
    if (type === "IHDR") {
      width = readU32be(data, 0);
      height = readU32be(data, 4);
      if (data[8] !== 8 || data[9] !== 0) {
        throw new Error("decoder supports 8-bit grayscale only");
      }
      if (data[12] !== 0) throw new Error("interlaced PNGs unsupported");
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    at += 12 + length;
  }
  if (width === 0 || height === 0) throw new Error("missing IHDR");

  const stream = concat(idat);
  if (stream.length < 6) throw new Error("truncated zlib stream");
  if ((stream[0]! & 0x0f) !== 8) throw new Error("not a deflate stream");
  const raw: Uint8Array[] = [];
  let pos = 2;
  for (;;) {
    const header = stream[pos]!;
    if ((header & 0x06) !== 0) {
      throw new Error("decoder supports stored deflate blocks only");
    }
    const len = stream[pos + 1]! | (stream[pos + 2]! << 8);
    raw.push(stream.subarray(pos + 5, pos + 5 + len));
    pos += 5 + len;
    if (header & 1) break;
  }
  const flat = concat(raw);
  if (adler32(flat) !== readU32be(stream, pos)) {
    throw new Error("zlib checksum mismatch");
  }
  if (flat.length !== height * (width + 1)) {
    throw new Error("pixel payload has the wrong size");
  }
  const pixels = new Uint8Array(width * height);
  for (let row = 0; row < height; row++) {
    if (flat[row * (width + 1)] !== 0) {
      throw new Error("decoder supports filter 0 only");
    }
    pixels.set(flat.subarray(row * (width + 1) + 1, (row + 1) * (width + 1)),
               row * width);
  }
  return { width, height, pixels };
}

const BASE64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

/** Environment-independent base64 (no Buffer, no btoa). */
export function toBase64(bytes: Uint8Array): string {
  let out = "";
  for (let i = 0; i < bytes.length; i += 3) {
    const a = bytes[i]!;
    const b = i + 1 < bytes.length ? bytes[i + 1]! : 0;
    const c = i + 2 < bytes.length ? bytes[i + 2]! : 0;
    out += BASE64[a >> 2]! + BASE64[((a & 3) << 4) | (b >> 4)]!;
    out += i + 1 < bytes.length ? BASE64[((b & 15) << 2) | (c >> 6)]! : "=";
    out += i + 2 < bytes.length ? BASE64[c & 63]! : "=";
  }
  return out;
}

/** The inline-image form the job service accepts in config values. */
export function toPngDataUri(bytes: Uint8Array): string {
  return "data:image/png;base64," + toBase64(bytes);
}
