/** Building job configs from a document and running the overdraw loop.
 *
 * Sketch and mask rasters travel inline as data: URIs, so the browser
 * needs no shared filesystem with the service; field references use the
 * service's data-directory-relative artifact paths.
 */

import { CanvasDocument } from "./document.js";
import { JobSnapshot, ServiceClient } from "./client.js";
import { decodeGrayPng, toPngDataUri } from "./png.js";

/** Where a finished generation/edit job leaves its field, relative to the
 * service data directory. */
export function fieldPathOf(jobId: string): string {
  return `jobs/${jobId}/field.skdf`;
}

export interface GenerateOptions {
  totalSteps?: number;
  fieldResolution?: number;
  renderSteps?: number;
  seed?: number;
  checkpointEvery?: number;
}

export function buildGenerateConfig(
  doc: CanvasDocument,
  options: GenerateOptions = {},
): Record<string, unknown> {
  const { sketchPng, camera } = doc.drawAndExport();
  const config: Record<string, unknown> = {
    sketch: toPngDataUri(sketchPng),
    ...camera,
    total_steps: options.totalSteps ?? 2000,
    field_resolution: options.fieldResolution ?? 64,
    render_steps: options.renderSteps ?? 96,
    seed: options.seed ?? 0,
    checkpoint_every: options.checkpointEvery ?? 250,
  };
  if (doc.prompt) config.text_token = doc.prompt;
  return config;
}

export interface EditOptions {
  coarseSteps?: number;
  fineSteps?: number;
  coarseSeed?: number;
  fineSeed?: number;
}

export function buildEditConfig(
  doc: CanvasDocument,
  fieldPath: string,
  options: EditOptions = {},
): Record<string, unknown> {
  const { sketchPng, maskPng, camera } = doc.drawAndExport();
  const config: Record<string, unknown> = {
    field: fieldPath,
    sketch: toPngDataUri(sketchPng),
    mask: toPngDataUri(maskPng),
    ...camera,
    z_min: doc.depthBounds.zMin,
    z_max: doc.depthBounds.zMax,
    coarse: {
      steps: options.coarseSteps ?? 300,
      seed: options.coarseSeed ?? 0,
    },
    fine: {
      steps: options.fineSteps ?? 200,
      seed: options.fineSeed ?? 0,
    },
  };
  if (doc.prompt) config.text_token = doc.prompt;
  return config;
}

export interface DecodedGray {
  width: number;
  height: number;
  pixels: Uint8Array;
}

/** Sync (own codec) or async (browser canvas) grayscale PNG decoding. */
export type PngDecoder = (bytes: Uint8Array) => DecodedGray | Promise<DecodedGray>;

/** Fetch the current model re-drawn as a sketch from the document's camera
 * and load it as the stroke-layer base for overdrawing. */
export async function beginEditLoop(
  client: ServiceClient,
  doc: CanvasDocument,
  sourceJobId: string,
  decodePng: PngDecoder = decodeGrayPng,
): Promise<void> {
  const bytes = await client.fetchSketch(
    fieldPathOf(sourceJobId),
    doc.camera.azimuthDeg,
    doc.camera.elevationDeg,
    doc.resolution,
  );
  const image = await decodePng(bytes);
  if (image.width !== doc.resolution || image.height !== doc.resolution) {
    throw new Error(
      `fetched sketch is ${image.width}x${image.height}, ` +
      `expected ${doc.resolution}`);
  }
  doc.loadSketchPixels(image.pixels);
  doc.clearMask();
}

/** The whole overdraw round per the API docs: fetch the rendered sketch,
 * apply the user's changes, submit the edit job against the same field.
 * Nothing is submitted if any step fails. */
export async function edit_loop(
  client: ServiceClient,
  doc: CanvasDocument,
  sourceJobId: string,
  overdraw: (doc: CanvasDocument) => void,
  options: EditOptions = {},
  decodePng: PngDecoder = decodeGrayPng,
): Promise<JobSnapshot> {
  await beginEditLoop(client, doc, sourceJobId, decodePng);
  overdraw(doc);
  const config = buildEditConfig(doc, fieldPathOf(sourceJobId), options);
  return client.submitJob("edit", config);
}
