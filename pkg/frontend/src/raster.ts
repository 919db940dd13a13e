/** Grayscale paint layers with a hard round brush.
 *
 * All painting happens in integer-free float math with a fixed stamp
 * spacing, so replaying the same stroke list always reproduces the same
 * pixels — the byte-level reproducibility the export format promises.
 */

export interface StrokePoint {
  x: number;
  y: number;
}

/** One square grayscale layer; values in [0, 1], row-major. */
export class GrayLayer {
  readonly width: number;
  readonly height: number;
  readonly values: Float64Array;

  constructor(width: number, height: number, fill: number) {
    if (!Number.isInteger(width) || !Number.isInteger(height) ||
        width < 1 || height < 1) {
      throw new Error("layer size must be at least 1x1");
    }
    this.width = width;
    this.height = height;
    this.values = new Float64Array(width * height).fill(fill);
  }

  clone(): GrayLayer {
    const copy = new GrayLayer(this.width, this.height, 0);
    copy.values.set(this.values);
    return copy;
  }

  fill(value: number): void {
    this.values.fill(value);
  }

  get(x: number, y: number): number {
    return this.values[y * this.width + x]!;
  }

  /** Stamp a hard-edged disk of the given value (brush hardness is fixed;
   * only the radius varies). */
  stamp(cx: number, cy: number, radius: number, value: number): void {
    const r2 = radius * radius;
    const x0 = Math.max(0, Math.floor(cx - radius - 1));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + radius + 1));
    const y0 = Math.max(0, Math.floor(cy - radius - 1));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + radius + 1));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x + 0.5 - cx;
        const dy = y + 0.5 - cy;
        if (dx * dx + dy * dy <= r2) {
          this.values[y * this.width + x] = value;
        }
      }
    }
  }

  /** Paint a polyline with disk stamps every half pixel. */
  stroke(points: readonly StrokePoint[], radius: number, value: number): void {
    if (points.length === 0) return;
    const first = points[0]!;
    this.stamp(first.x, first.y, radius, value);
    for (let i = 1; i < points.length; i++) {
      const a = points[i - 1]!;
      const b = points[i]!;
      const span = Math.hypot(b.x - a.x, b.y - a.y);
      const steps = Math.max(1, Math.ceil(span / 0.5));
      for (let s = 1; s <= steps; s++) {
        const t = s / steps;
        this.stamp(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t,
                   radius, value);
      }
    }
  }

  /** Quantize to bytes; values are clamped then rounded half-up. */
  toBytes(): Uint8Array {
    const out = new Uint8Array(this.values.length);
    for (let i = 0; i < this.values.length; i++) {
      const v = Math.min(1, Math.max(0, this.values[i]!));
      out[i] = Math.round(v * 255);
    }
    return out;
  }

  /** Load bytes (0..255) back into the layer as values in [0, 1]. */
  setFromBytes(pixels: Uint8Array): void {
    if (pixels.length !== this.values.length) {
      throw new Error("pixel buffer does not match the layer size");
    }
    for (let i = 0; i < pixels.length; i++) {
      this.values[i] = pixels[i]! / 255;
    }
  }
}

/** Points of a circle, a convenient canned stroke for tests and fixtures. */
export function circlePath(
  cx: number,
  cy: number,
  radius: number,
  segments = 64,
): StrokePoint[] {
  const points: StrokePoint[] = [];
  for (let i = 0; i <= segments; i++) {
    const angle = (2 * Math.PI * i) / segments;
    points.push({
      x: cx + radius * Math.cos(angle),
      y: cy + radius * Math.sin(angle),
    });
  }
  return points;
}
