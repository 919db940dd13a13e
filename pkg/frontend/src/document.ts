/** The drawing document: what the user edits before submitting a job.
 *
 * Two raster layers (dark strokes on a white page; a white-on-black edit
 * mask), the camera widget state, the depth-bounds inputs, and the text
 * prompt. Exports follow the service's file conventions: 8-bit grayscale
 * PNGs, strokes dark, mask white where editable.
 */

import { GrayLayer, StrokePoint } from "./raster.js";
import { encodeGrayPng } from "./png.js";

export interface CameraState {
  azimuthDeg: number;
  elevationDeg: number;
  radius: number;
  fovYDeg: number;
}

export interface DepthBounds {
  zMin: number;
  zMax: number;
}

/** The camera fragment jobs embed in their configs. */
export interface CameraBlock {
  azimuth_deg: number;
  elevation_deg: number;
  radius: number;
  fov_y_deg: number;
}

export interface DocumentExport {
  sketchPng: Uint8Array;
  maskPng: Uint8Array;
  camera: CameraBlock;
}

export const DEFAULT_CAMERA: CameraState = {
  azimuthDeg: 0,
  elevationDeg: 15,
  radius: 2,
  fovYDeg: 50,
};

export class CanvasDocument {
  readonly resolution: number;
  readonly strokes: GrayLayer;
  readonly mask: GrayLayer;
  camera: CameraState;
  depthBounds: DepthBounds;
  prompt = "";
  brushWidthPx = 2;

  constructor(resolution = 64) {
    this.resolution = resolution;
    this.strokes = new GrayLayer(resolution, resolution, 1); // blank page
    this.mask = new GrayLayer(resolution, resolution, 0); // nothing editable
    this.camera = { ...DEFAULT_CAMERA };
    this.depthBounds = { zMin: 1.75, zMax: 2.25 };
  }

  drawStroke(points: readonly StrokePoint[]): void {
    this.strokes.stroke(points, this.brushWidthPx / 2, 0);
  }

  eraseStroke(points: readonly StrokePoint[]): void {
    this.strokes.stroke(points, this.brushWidthPx / 2, 1);
  }

  paintMask(points: readonly StrokePoint[]): void {
    this.mask.stroke(points, this.brushWidthPx / 2, 1);
  }

  eraseMask(points: readonly StrokePoint[]): void {
    this.mask.stroke(points, this.brushWidthPx / 2, 0);
  }

  clearStrokes(): void {
    this.strokes.fill(1);
  }

  clearMask(): void {
    this.mask.fill(0);
  }

  /** Replace the stroke layer with a fetched sketch (the edit-loop base). */
  loadSketchPixels(pixels: Uint8Array): void {
    this.strokes.setFromBytes(pixels);
  }

  cameraBlock(): CameraBlock {
    return {
      azimuth_deg: this.camera.azimuthDeg,
      elevation_deg: this.camera.elevationDeg,
      radius: this.camera.radius,
      fov_y_deg: this.camera.fovYDeg,
    };
  }

  /** Rasterize both layers to PNG payloads plus the camera block.
   * Identical documents always produce identical bytes. */
  drawAndExport(): DocumentExport {
    const n = this.resolution;
    return {
      sketchPng: encodeGrayPng(n, n, this.strokes.toBytes()),
      maskPng: encodeGrayPng(n, n, this.mask.toBytes()),
      camera: this.cameraBlock(),
    };
  }
}

/* The service-facing operation names, for callers that follow the API
 * documentation rather than the class. */
export function draw_and_export(doc: CanvasDocument): DocumentExport {
  return doc.drawAndExport();
}
