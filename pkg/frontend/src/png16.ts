/** Decoder for the service's 16-bit grayscale depth PNGs.
 *
 * Canvas decoding quantizes to 8 bits per channel, which would flatten
 * millimeter depth to ~0.26 m steps, so the depth path decodes the PNG
 * directly: chunk walk, zlib inflate through DecompressionStream, the five
 * standard row filters, big-endian 16-bit samples.  Only the exact shape the
 * service emits is supported (bit depth 16, grayscale, non-interlaced).
 */

export interface DepthImage {
  width: number;
  height: number;
  /** row-major depth in millimeters */
  mm: Uint16Array;
}

const SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];

function u32(b: Uint8Array, o: number): number {
  return ((b[o] << 24) | (b[o + 1] << 16) | (b[o + 2] << 8) | b[o + 3]) >>> 0;
}

async function inflate(data: Uint8Array): Promise<Uint8Array> {
  const ds = new DecompressionStream("deflate"); // zlib-wrapped, as in PNG
  const stream = new Blob([data as BlobPart]).stream().pipeThrough(ds);
  const out = new Uint8Array(await new Response(stream).arrayBuffer());
  return out;
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

/** Undo per-row filtering in place; returns the raw scanline bytes. */
function unfilter(data: Uint8Array, width: number, height: number): Uint8Array {
  const bpp = 2; // one 16-bit gray sample
  const stride = width * bpp;
  const raw = new Uint8Array(height * stride);
  for (let y = 0; y < height; y++) {
    const f = data[y * (stride + 1)];
    const src = y * (stride + 1) + 1;
    const dst = y * stride;
    for (let x = 0; x < stride; x++) {
      const left = x >= bpp ? raw[dst + x - bpp] : 0;
      const above = y > 0 ? raw[dst + x - stride] : 0;
      const upLeft = y > 0 && x >= bpp ? raw[dst + x - bpp - stride] : 0;
      let v = data[src + x];
      switch (f) {
        case 0:
          break;
        case 1:
          v += left;
          break;
        case 2:
          v += above;
          break;
        case 3:
          v += (left + above) >> 1;
          break;
        case 4:
          v += paeth(left, above, upLeft);
          break;
        default:
          throw new Error(`unsupported PNG filter ${f}`);
      }
      raw[dst + x] = v & 0xff;
    }
  }
  return raw;
}

export async function decodeDepthPng(bytes: Uint8Array): Promise<DepthImage> {
  if (bytes.length < 8 || SIGNATURE.some((v, i) => bytes[i] !== v)) {
    throw new Error("not a PNG");
  }
  let width = 0;
  let height = 0;
  const idat: Uint8Array[] = [];
  let off = 8;
  let sawIhdr = false;
  while (off + 8 <= bytes.length) {
    const len = u32(bytes, off);
    const type = String.fromCharCode(...bytes.subarray(off + 4, off + 8));
    const data = bytes.subarray(off + 8, off + 8 + len);
    if (type === "IHDR") {
      width = u32(data, 0);
      height = u32(data, 4);
      const bitDepth = data[8];
      const colorType = data[9];
      const interlace = data[12];
      if (bitDepth !== 16 || colorType !== 0 || interlace !== 0) {
        throw new Error(
          `expected 16-bit grayscale non-interlaced PNG, got depth ${bitDepth} color ${colorType} interlace ${interlace}`,
        );
      }
      sawIhdr = true;
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    off += 12 + len; // length + type + data + crc
  }
  if (!sawIhdr || !idat.length || !width || !height) {
    throw new Error("truncated PNG");
  }
  const zdata = new Uint8Array(idat.reduce((n, c) => n + c.length, 0));
  let zo = 0;
  for (const c of idat) {
    zdata.set(c, zo);
    zo += c.length;
  }
  const filtered = await inflate(zdata);
  const expect = height * (width * 2 + 1);
  if (filtered.length !== expect) {
    throw new Error(`PNG pixel data is ${filtered.length} bytes, expected ${expect}`);
  }
  const raw = unfilter(filtered, width, height);
  const mm = new Uint16Array(width * height);
  for (let i = 0; i < mm.length; i++) {
    mm[i] = (raw[2 * i] << 8) | raw[2 * i + 1];
  }
  return { width, height, mm };
}
