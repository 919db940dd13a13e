/** Job monitoring: a 1-second poll loop feeding a progress view.
 *
 * The monitor keeps exactly one status request in flight, accumulates the
 * live loss trace, and on completion pulls the loss table and sorts the
 * image artifacts into checkpoint and turntable strips. Timers are
 * injectable so tests can drive the loop deterministically.
 */

import {
  isTerminal,
  JobSnapshot,
  ServiceClient,
  ServiceError,
} from "./client.js";

export interface LossPoint {
  step: number;
  value: number;
}

export type LossSeries = Map<string, LossPoint[]>;

export interface MonitorView {
  /** Last snapshot, or null when the job does not exist (cleared view). */
  job: JobSnapshot | null;
  livePoints: LossPoint[];
  lossTable: LossSeries | null;
  checkpointNames: string[];
  turntableNames: string[];
  finished: boolean;
}

export interface MonitorOptions {
  intervalMs?: number;
  onUpdate?: (view: MonitorView) => void;
  schedule?: (fn: () => void, ms: number) => unknown;
  cancelSchedule?: (handle: unknown) => void;
}

/** Parse the service's losses.csv artifact (step,term,value rows). */
export function parseLossCsv(text: string): LossSeries {
  const series: LossSeries = new Map();
  const lines = text.trim().split(/\r?\n/);
  for (const line of lines.slice(1)) {
    if (!line) continue;
    const [stepText, term, valueText] = line.split(",");
    if (stepText === undefined || term === undefined ||
        valueText === undefined) continue;
    const point = { step: Number(stepText), value: Number(valueText) };
    if (!Number.isFinite(point.step) || !Number.isFinite(point.value)) {
      continue;
    }
    let list = series.get(term);
    if (!list) {
      list = [];
      series.set(term, list);
    }
    list.push(point);
  }
  return series;
}

export function splitArtifacts(artifacts: readonly string[]): {
  checkpoints: string[];
  turntable: string[];
} {
  const checkpoints = artifacts
    .filter((name) => name.startsWith("checkpoints/") && name.endsWith(".png"))
    .sort();
  const turntable = artifacts
    .filter((name) => name.startsWith("turntable/") && name.endsWith(".png"))
    .sort();
  return { checkpoints, turntable };
}

export class JobMonitor {
  readonly jobId: string;
  private readonly client: ServiceClient;
  private readonly intervalMs: number;
  private readonly onUpdate: (view: MonitorView) => void;
  private readonly schedule: (fn: () => void, ms: number) => unknown;
  private readonly cancelSchedule: (handle: unknown) => void;
  private timer: unknown = null;
  private polling = false;
  private stopped = false;
  private view: MonitorView = {
    job: null,
    livePoints: [],
    lossTable: null,
    checkpointNames: [],
    turntableNames: [],
    finished: false,
  };

  constructor(client: ServiceClient, jobId: string, options?: MonitorOptions) {
    this.client = client;
    this.jobId = jobId;
    this.intervalMs = options?.intervalMs ?? 1000;
    this.onUpdate = options?.onUpdate ?? (() => undefined);
    this.schedule = options?.schedule ??
      ((fn, ms) => setTimeout(fn, ms));
    this.cancelSchedule = options?.cancelSchedule ??
      ((handle) => clearTimeout(handle as Parameters<typeof clearTimeout>[0]));
  }

  current(): MonitorView {
    return this.view;
  }

  /** Poll immediately, then every interval until terminal or stopped. */
  start(): Promise<void> {
    return this.tick();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      this.cancelSchedule(this.timer);
      this.timer = null;
    }
  }

  private async tick(): Promise<void> {
    if (this.stopped || this.polling) return;
    this.polling = true;
    try {
      const job = await this.client.getJob(this.jobId);
      this.absorb(job);
      if (isTerminal(job.state)) {
        await this.finish(job);
        this.onUpdate(this.view);
        return;
      }
      this.onUpdate(this.view);
    } catch (error) {
      if (error instanceof ServiceError && error.status === 404) {
        this.view = { ...this.view, job: null, finished: true };
        this.onUpdate(this.view);
        return;
      }
      // transient failure: keep the last view and keep polling
    } finally {
      this.polling = false;
    }
    if (!this.stopped) {
      this.timer = this.schedule(() => void this.tick(), this.intervalMs);
    }
  }

  private absorb(job: JobSnapshot): void {
    const livePoints = this.view.livePoints.slice();
    const last = livePoints[livePoints.length - 1];
    if (job.loss !== null && job.progress.step >= 0 &&
        (!last || last.step !== job.progress.step)) {
      livePoints.push({ step: job.progress.step, value: job.loss });
    }
    this.view = { ...this.view, job, livePoints };
  }

  private async finish(job: JobSnapshot): Promise<void> {
    const names = job.artifacts ?? [];
    const { checkpoints, turntable } = splitArtifacts(names);
    let lossTable: LossSeries | null = null;
    if (names.includes("losses.csv")) {
      try {
        const bytes = await this.client.fetchArtifact(this.jobId, "losses.csv");
        lossTable = parseLossCsv(new TextDecoder().decode(bytes));
      } catch {
        lossTable = null; // the strip still renders without the table
      }
    }
    this.view = {
      ...this.view,
      job,
      lossTable,
      checkpointNames: checkpoints,
      turntableNames: turntable,
      finished: true,
    };
  }
}

/* The service-facing operation name, for callers following the API docs. */
export function monitor(
  client: ServiceClient,
  jobId: string,
  options?: MonitorOptions,
): JobMonitor {
  const m = new JobMonitor(client, jobId, options);
  void m.start();
  return m;
}
