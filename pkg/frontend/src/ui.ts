/** The studio page: draw a sketch, launch generation, watch it converge,
 * then fetch any view of the result, overdraw it, mask a region, and
 * submit the edit. Pure DOM, no framework; all service traffic goes
 * through ServiceClient.
 */

import { CanvasDocument } from "./document.js";
import {
  isTerminal,
  JobSnapshot,
  ServiceClient,
  ServiceError,
} from "./client.js";
import { JobMonitor, LossPoint, MonitorView } from "./monitor.js";
import {
  beginEditLoop,
  buildEditConfig,
  buildGenerateConfig,
  DecodedGray,
  fieldPathOf,
} from "./jobs.js";

type Tool = "draw" | "erase" | "mask" | "unmask";

const LOSS_COLORS = ["#2563eb", "#dc2626", "#059669", "#d97706", "#7c3aed",
                     "#0891b2"];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "text") node.textContent = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

/** Decode any PNG through the browser's own codec; returns the red channel. */
async function canvasDecodeGrayPng(bytes: Uint8Array): Promise<DecodedGray> {
  const bitmap = await createImageBitmap(
    new Blob([bytes.slice().buffer as ArrayBuffer], { type: "image/png" }));
  const canvas = document.createElement("canvas");
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas unavailable");
  ctx.drawImage(bitmap, 0, 0);
  const data = ctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
  const pixels = new Uint8Array(bitmap.width * bitmap.height);
  for (let i = 0; i < pixels.length; i++) pixels[i] = data[i * 4]!;
  return { width: bitmap.width, height: bitmap.height, pixels };
}

class StudioApp {
  private doc = new CanvasDocument(64);
  private client: ServiceClient;
  private tool: Tool = "draw";
  private monitorHandle: JobMonitor | null = null;
  private selectedJob: JobSnapshot | null = null;
  private jobs: JobSnapshot[] = [];
  private listTimer: number | null = null;
  private drawing = false;
  private lastView: MonitorView | null = null;
  private turntableIndex = 0;

  private readonly canvas = el("canvas", { class: "paint" });
  private readonly statusLine = el("div", { class: "status", text: "ready" });
  private readonly jobList = el("div", { class: "job-list" });
  private readonly progressBar = el("div", { class: "bar-fill" });
  private readonly progressText = el("span", { text: "no job selected" });
  private readonly lossCanvas = el("canvas", {
    class: "loss", width: "360", height: "140" });
  private readonly checkpointStrip = el("div", { class: "strip" });
  private readonly turntableImg = el("img", { class: "turn-frame", alt: "" });
  private readonly turntableOverlay = el("canvas", {
    class: "turn-overlay", width: "256", height: "256" });
  private readonly turntableScrub = el("input", {
    type: "range", min: "0", max: "0", value: "0" });
  private readonly slabToggle = el("input", { type: "checkbox" });
  private readonly editButton = el("button",
    { text: "Fetch view & overdraw", disabled: "" });
  private readonly submitEditButton = el("button",
    { text: "Submit edit", disabled: "" });
  private readonly cancelButton = el("button",
    { text: "Cancel job", disabled: "" });

  private azInput = el("input", {
    type: "range", min: "0", max: "359", step: "1", value: "0" });
  private elInput = el("input", {
    type: "range", min: "-30", max: "60", step: "1", value: "15" });
  private zMinInput = el("input", {
    type: "number", step: "0.05", value: "1.75" });
  private zMaxInput = el("input", {
    type: "number", step: "0.05", value: "2.25" });
  private promptInput = el("input", {
    type: "text", placeholder: "text token (optional)" });
  private widthInput = el("input", {
    type: "range", min: "1", max: "8", step: "1", value: "2" });
  private stepsInput = el("input", { type: "number", value: "600" });
  private resolutionSelect = el("select");

  constructor(root: HTMLElement, apiBase: string) {
    this.client = new ServiceClient(apiBase);
    root.append(this.buildLayout(apiBase));
    this.bindCanvas();
    this.renderDocument();
    this.refreshJobs();
    this.listTimer = window.setInterval(() => this.refreshJobs(), 5000);
  }

  dispose(): void {
    if (this.listTimer !== null) window.clearInterval(this.listTimer);
    this.monitorHandle?.stop();
  }

  // ------------------------------------------------------------- layout

  private buildLayout(apiBase: string): HTMLElement {
    for (const n of [48, 64, 96, 128]) {
      this.resolutionSelect.append(el("option", {
        value: String(n), text: `${n} px`,
        ...(n === 64 ? { selected: "" } : {}),
      }));
    }
    const toolBar = el("div", { class: "row" });
    for (const tool of ["draw", "erase", "mask", "unmask"] as Tool[]) {
      const button = el("button", { text: tool, "data-tool": tool });
      if (tool === this.tool) button.classList.add("active");
      button.addEventListener("click", () => {
        this.tool = tool;
        toolBar.querySelectorAll("button").forEach((b) =>
          b.classList.toggle("active", b === button));
      });
      toolBar.append(button);
    }
    const clearRow = el("div", { class: "row" }, [
      this.button("clear strokes", () => {
        this.doc.clearStrokes();
        this.renderDocument();
      }),
      this.button("clear mask", () => {
        this.doc.clearMask();
        this.renderDocument();
      }),
    ]);

    this.azInput.addEventListener("input", () => {
      this.doc.camera.azimuthDeg = Number(this.azInput.value);
    });
    this.elInput.addEventListener("input", () => {
      this.doc.camera.elevationDeg = Number(this.elInput.value);
    });
    this.zMinInput.addEventListener("input", () => {
      this.doc.depthBounds.zMin = Number(this.zMinInput.value);
      this.drawSlabOverlay();
    });
    this.zMaxInput.addEventListener("input", () => {
      this.doc.depthBounds.zMax = Number(this.zMaxInput.value);
      this.drawSlabOverlay();
    });
    this.promptInput.addEventListener("input", () => {
      this.doc.prompt = this.promptInput.value;
    });
    this.widthInput.addEventListener("input", () => {
      this.doc.brushWidthPx = Number(this.widthInput.value);
    });
    this.resolutionSelect.addEventListener("change", () => {
      this.doc = new CanvasDocument(Number(this.resolutionSelect.value));
      this.doc.camera.azimuthDeg = Number(this.azInput.value);
      this.doc.camera.elevationDeg = Number(this.elInput.value);
      this.renderDocument();
    });

    this.editButton.addEventListener("click", () => void this.loadEditView());
    this.submitEditButton.addEventListener("click",
      () => void this.submitEdit());
    this.cancelButton.addEventListener("click", () => void this.cancelJob());
    this.turntableScrub.addEventListener("input", () => {
      this.turntableIndex = Number(this.turntableScrub.value);
      this.showTurntableFrame();
    });
    this.slabToggle.addEventListener("change", () => this.drawSlabOverlay());

    return el("div", { class: "studio" }, [
      el("header", {}, [
        el("h1", { text: "sketch studio" }),
        el("span", { class: "api", text: apiBase }),
      ]),
      el("main", {}, [
        el("section", { class: "card canvas-card" }, [
          el("h2", { text: "canvas" }),
          this.canvas,
          toolBar,
          el("label", {}, ["brush width ", this.widthInput]),
          el("label", {}, ["resolution ", this.resolutionSelect]),
          clearRow,
        ]),
        el("section", { class: "card" }, [
          el("h2", { text: "view & job" }),
          el("label", {}, ["azimuth ", this.azInput]),
          el("label", {}, ["elevation ", this.elInput]),
          el("label", {}, ["depth near ", this.zMinInput]),
          el("label", {}, ["depth far ", this.zMaxInput]),
          el("label", {}, ["prompt ", this.promptInput]),
          el("label", {}, ["steps ", this.stepsInput]),
          el("div", { class: "row" }, [
            this.button("Generate", () => void this.submitGenerate()),
            this.editButton,
            this.submitEditButton,
          ]),
          this.statusLine,
          el("h2", { text: "jobs" }),
          this.jobList,
        ]),
        el("section", { class: "card" }, [
          el("h2", { text: "monitor" }),
          el("div", { class: "row" }, [this.cancelButton]),
          el("div", { class: "bar" }, [this.progressBar]),
          el("div", {}, [this.progressText]),
          this.lossCanvas,
          el("h3", { text: "checkpoints" }),
          this.checkpointStrip,
          el("h3", { text: "turntable" }),
          el("div", { class: "turn-box" }, [
            this.turntableImg,
            this.turntableOverlay,
          ]),
          el("div", { class: "row" }, [
            this.turntableScrub,
            el("label", {}, [this.slabToggle, " depth slab"]),
          ]),
        ]),
      ]),
    ]);
  }

  private button(text: string, onClick: () => void): HTMLButtonElement {
    const node = el("button", { text });
    node.addEventListener("click", onClick);
    return node;
  }

  private setStatus(text: string, isError = false): void {
    this.statusLine.textContent = text;
    this.statusLine.classList.toggle("error", isError);
  }

  private showError(error: unknown): void {
    if (error instanceof ServiceError) {
      const key = error.key ? ` (${error.key})` : "";
      this.setStatus(`service: ${error.message}${key}`, true);
    } else {
      this.setStatus(String(error), true);
    }
  }

  // ------------------------------------------------------------- canvas

  private bindCanvas(): void {
    const toDoc = (event: PointerEvent) => {
      const rect = this.canvas.getBoundingClientRect();
      const scale = this.doc.resolution / rect.width;
      return {
        x: (event.clientX - rect.left) * scale,
        y: (event.clientY - rect.top) * scale,
      };
    };
    let path: { x: number; y: number }[] = [];
    this.canvas.addEventListener("pointerdown", (event) => {
      this.drawing = true;
      this.canvas.setPointerCapture(event.pointerId);
      path = [toDoc(event)];
      this.applyStroke(path);
    });
    this.canvas.addEventListener("pointermove", (event) => {
      if (!this.drawing) return;
      path.push(toDoc(event));
      this.applyStroke(path.slice(-2));
    });
    const finish = () => {
      this.drawing = false;
      path = [];
    };
    this.canvas.addEventListener("pointerup", finish);
    this.canvas.addEventListener("pointercancel", finish);
  }

  private applyStroke(points: { x: number; y: number }[]): void {
    if (this.tool === "draw") this.doc.drawStroke(points);
    else if (this.tool === "erase") this.doc.eraseStroke(points);
    else if (this.tool === "mask") this.doc.paintMask(points);
    else this.doc.eraseMask(points);
    this.renderDocument();
  }

  private renderDocument(): void {
    const n = this.doc.resolution;
    this.canvas.width = n;
    this.canvas.height = n;
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const image = ctx.createImageData(n, n);
    for (let i = 0; i < n * n; i++) {
      const stroke = Math.round(this.doc.strokes.values[i]! * 255);
      const masked = this.doc.mask.values[i]! > 0.5;
      image.data[i * 4] = masked ? Math.min(255, stroke + 80) : stroke;
      image.data[i * 4 + 1] = masked ? Math.round(stroke * 0.45) : stroke;
      image.data[i * 4 + 2] = masked ? Math.round(stroke * 0.45) : stroke;
      image.data[i * 4 + 3] = 255;
    }
    ctx.putImageData(image, 0, 0);
  }

  // --------------------------------------------------------------- jobs

  private async submitGenerate(): Promise<void> {
    try {
      this.setStatus("submitting generation...");
      const job = await this.client.submitJob("generate",
        buildGenerateConfig(this.doc, {
          totalSteps: Number(this.stepsInput.value) || 600,
          fieldResolution: 48,
          renderSteps: 64,
        }));
      this.setStatus(`submitted ${job.id}`);
      await this.refreshJobs();
      this.selectJob(job);
    } catch (error) {
      this.showError(error);
    }
  }

  private async loadEditView(): Promise<void> {
    const source = this.selectedJob;
    if (!source) return;
    try {
      this.setStatus(`fetching ${this.doc.camera.azimuthDeg}° sketch of `
        + `${source.id}...`);
      await beginEditLoop(this.client, this.doc, source.id,
        canvasDecodeGrayPng);
      this.renderDocument();
      this.submitEditButton.removeAttribute("disabled");
      this.setStatus("overdraw the sketch, paint the mask, then submit");
    } catch (error) {
      this.showError(error);
    }
  }

  private async submitEdit(): Promise<void> {
    const source = this.selectedJob;
    if (!source) return;
    try {
      this.setStatus("submitting edit...");
      const job = await this.client.submitJob("edit",
        buildEditConfig(this.doc, fieldPathOf(source.id)));
      this.setStatus(`submitted ${job.id}`);
      await this.refreshJobs();
      this.selectJob(job);
    } catch (error) {
      this.showError(error);
    }
  }

  private async cancelJob(): Promise<void> {
    const job = this.selectedJob;
    if (!job) return;
    try {
      await this.client.cancelJob(job.id);
      this.setStatus(`cancel requested for ${job.id}`);
    } catch (error) {
      this.showError(error);
    }
  }

  private async refreshJobs(): Promise<void> {
    try {
      this.jobs = await this.client.listJobs();
      this.renderJobList();
    } catch (error) {
      this.showError(error);
    }
  }

  private renderJobList(): void {
    this.jobList.replaceChildren();
    for (const job of this.jobs) {
      const row = el("div", { class: "job-row" }, [
        el("code", { text: job.id }),
        el("span", { text: ` ${job.kind} ` }),
        el("b", { text: job.state }),
      ]);
      if (this.selectedJob?.id === job.id) row.classList.add("selected");
      row.addEventListener("click", () => this.selectJob(job));
      this.jobList.append(row);
    }
  }

  private selectJob(job: JobSnapshot): void {
    this.selectedJob = job;
    this.renderJobList();
    this.editButton.toggleAttribute("disabled",
      !(job.state === "done" && job.kind !== "render"));
    this.submitEditButton.setAttribute("disabled", "");
    this.cancelButton.toggleAttribute("disabled", isTerminal(job.state));
    this.monitorHandle?.stop();
    this.lastView = null;
    this.monitorHandle = new JobMonitor(this.client, job.id, {
      intervalMs: 1000,
      onUpdate: (view) => this.renderMonitor(view),
    });
    void this.monitorHandle.start();
  }

  // ------------------------------------------------------------ monitor

  private renderMonitor(view: MonitorView): void {
    this.lastView = view;
    if (!view.job) {
      this.progressText.textContent = "job not found";
      this.progressBar.style.width = "0%";
      return;
    }
    const { state, progress, error } = view.job;
    const frac = progress.total > 0
      ? Math.max(0, Math.min(1, (progress.step + 1) / progress.total))
      : 0;
    this.progressBar.style.width = `${(frac * 100).toFixed(1)}%`;
    this.progressText.textContent = error
      ? `${state}: ${error}`
      : `${state} — step ${progress.step + 1}/${progress.total}`;
    this.cancelButton.toggleAttribute("disabled", isTerminal(state));
    if (this.selectedJob && this.selectedJob.id === view.job.id) {
      this.selectedJob = view.job;
      this.editButton.toggleAttribute("disabled",
        !(state === "done" && view.job.kind !== "render"));
    }
    this.plotLosses(view);
    if (view.finished) {
      this.renderStrips(view);
      this.refreshJobs();
    }
  }

  private plotLosses(view: MonitorView): void {
    const ctx = this.lossCanvas.getContext("2d");
    if (!ctx) return;
    const w = this.lossCanvas.width;
    const h = this.lossCanvas.height;
    ctx.clearRect(0, 0, w, h);
    ctx.fillStyle = "#f8fafc";
    ctx.fillRect(0, 0, w, h);
    const series: [string, LossPoint[]][] = view.lossTable
      ? [...view.lossTable.entries()].filter(([term]) => term !== "total")
      : view.livePoints.length > 0 ? [["loss", view.livePoints]] : [];
    if (series.length === 0) return;
    const all = series.flatMap(([, pts]) => pts);
    const maxStep = Math.max(...all.map((p) => p.step), 1);
    const values = all.map((p) => p.value).filter((v) => Number.isFinite(v));
    const lo = Math.min(...values);
    const hi = Math.max(...values);
    const span = hi - lo || 1;
    series.forEach(([term, pts], index) => {
      ctx.strokeStyle = LOSS_COLORS[index % LOSS_COLORS.length]!;
      ctx.beginPath();
      pts.forEach((p, i) => {
        const x = (p.step / maxStep) * (w - 8) + 4;
        const y = h - 4 - ((p.value - lo) / span) * (h - 8);
        if (i === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      });
      ctx.stroke();
      ctx.fillStyle = ctx.strokeStyle;
      ctx.fillText(term, 8, 12 + index * 12);
    });
  }

  private renderStrips(view: MonitorView): void {
    if (!view.job) return;
    const id = view.job.id;
    this.checkpointStrip.replaceChildren(
      ...view.checkpointNames.map((name) => el("img", {
        src: this.client.artifactUrl(id, name),
        title: name, class: "thumb",
      })));
    const frames = view.turntableNames;
    this.turntableScrub.max = String(Math.max(0, frames.length - 1));
    this.turntableIndex = 0;
    this.turntableScrub.value = "0";
    this.showTurntableFrame();
  }

  private showTurntableFrame(): void {
    const view = this.lastView;
    if (!view?.job || view.turntableNames.length === 0) {
      this.turntableImg.removeAttribute("src");
      return;
    }
    const name = view.turntableNames[this.turntableIndex]
      ?? view.turntableNames[0]!;
    this.turntableImg.src = this.client.artifactUrl(view.job.id, name);
    this.drawSlabOverlay();
  }

  /** Shade the depth slab on the turntable frame: the annulus between the
   * screen-space circles where spheres of radius (orbit - z) project. */
  private drawSlabOverlay(): void {
    const ctx = this.turntableOverlay.getContext("2d");
    if (!ctx) return;
    const w = this.turntableOverlay.width;
    const h = this.turntableOverlay.height;
    ctx.clearRect(0, 0, w, h);
    if (!this.slabToggle.checked) return;
    const orbit = this.doc.camera.radius;
    const fov = (this.doc.camera.fovYDeg * Math.PI) / 180;
    const focal = h / 2 / Math.tan(fov / 2);
    const radiusAt = (z: number) =>
      z > 0 ? (focal * Math.max(0, orbit - z)) / z : w;
    const rNear = radiusAt(this.doc.depthBounds.zMin);
    const rFar = radiusAt(this.doc.depthBounds.zMax);
    ctx.fillStyle = "rgba(37, 99, 235, 0.25)";
    ctx.beginPath();
    ctx.arc(w / 2, h / 2, Math.max(rNear, rFar), 0, 2 * Math.PI);
    ctx.arc(w / 2, h / 2, Math.min(rNear, rFar), 0, 2 * Math.PI, true);
    ctx.fill();
    ctx.strokeStyle = "rgba(37, 99, 235, 0.8)";
    for (const r of [rNear, rFar]) {
      ctx.beginPath();
      ctx.arc(w / 2, h / 2, r, 0, 2 * Math.PI);
      ctx.stroke();
    }
  }
}

export function mountStudio(root: HTMLElement, apiBase?: string): StudioApp {
  const params = new URLSearchParams(window.location.search);
  const base = apiBase ?? params.get("api") ?? "http://127.0.0.1:8000";
  return new StudioApp(root, base);
}

const rootElement = typeof document !== "undefined"
  ? document.getElementById("studio-root")
  : null;
if (rootElement) mountStudio(rootElement);
