/** HTTP client for the job service.
 *
 * Every capability the studio uses is one of the service's documented
 * endpoints; nothing else. At most one request per endpoint is in flight
 * at any time: concurrent callers of the same GET share the pending
 * response, and writes to the same endpoint queue behind each other.
 */

export type JobKind = "generate" | "edit" | "render";
export type JobState = "queued" | "running" | "done" | "failed" | "cancelled";

export interface JobProgress {
  step: number;
  total: number;
}

export interface JobSnapshot {
  id: string;
  kind: JobKind;
  state: JobState;
  progress: JobProgress;
  loss: number | null;
  error: string | null;
  artifacts?: string[];
}

export const TERMINAL_STATES: readonly JobState[] = [
  "done",
  "failed",
  "cancelled",
];

export function isTerminal(state: JobState): boolean {
  return TERMINAL_STATES.includes(state);
}

/** A non-2xx service response, with the field-level detail when present. */
export class ServiceError extends Error {
  readonly status: number;
  readonly key: string | null;

  constructor(status: number, message: string, key: string | null = null) {
    super(message);
    this.name = "ServiceError";
    this.status = status;
    this.key = key;
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  readonly baseUrl: string;
  private readonly fetchFn: FetchLike;
  private readonly inFlight = new Map<string, Promise<unknown>>();

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    const fallback = globalThis.fetch?.bind(globalThis);
    const chosen = fetchFn ?? fallback;
    if (!chosen) throw new Error("no fetch implementation available");
    this.fetchFn = chosen;
  }

  /** Submit a job; the config carries sketch/mask as data: URIs. */
  submitJob(kind: JobKind, config: unknown): Promise<JobSnapshot> {
    return this.serialize("POST /api/jobs", () =>
      this.requestJson<JobSnapshot>("/api/jobs", {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ kind, config }),
      }));
  }

  getJob(id: string): Promise<JobSnapshot> {
    return this.coalesce(`GET /api/jobs/${id}`, () =>
      this.requestJson<JobSnapshot>(`/api/jobs/${encodeURIComponent(id)}`));
  }

  listJobs(): Promise<JobSnapshot[]> {
    return this.coalesce("GET /api/jobs", () =>
      this.requestJson<JobSnapshot[]>("/api/jobs"));
  }

  cancelJob(id: string): Promise<JobSnapshot> {
    return this.serialize(`POST /api/jobs/${id}/cancel`, () =>
      this.requestJson<JobSnapshot>(
        `/api/jobs/${encodeURIComponent(id)}/cancel`, { method: "POST" }));
  }

  /** Exact artifact bytes of a finished job. */
  fetchArtifact(id: string, name: string): Promise<Uint8Array> {
    const path = `/api/jobs/${encodeURIComponent(id)}/artifacts/` +
      name.split("/").map(encodeURIComponent).join("/");
    return this.coalesce(`GET ${path}`, () => this.requestBytes(path));
  }

  /** Browser-loadable URL of an artifact (for <img> elements). */
  artifactUrl(id: string, name: string): string {
    return this.baseUrl + `/api/jobs/${encodeURIComponent(id)}/artifacts/` +
      name.split("/").map(encodeURIComponent).join("/");
  }

  /** Re-draw a stored field as a sketch PNG from the given view. */
  fetchSketch(
    field: string,
    azimuthDeg: number,
    elevationDeg: number,
    resolution?: number,
  ): Promise<Uint8Array> {
    const params = new URLSearchParams({
      field,
      azimuth: String(azimuthDeg),
      elevation: String(elevationDeg),
    });
    if (resolution !== undefined) params.set("resolution", String(resolution));
    const path = `/api/sketch?${params.toString()}`;
    return this.coalesce("GET /api/sketch", () => this.requestBytes(path));
  }

  /** Share one pending promise among concurrent callers of one endpoint. */
  private coalesce<T>(key: string, run: () => Promise<T>): Promise<T> {
    const pending = this.inFlight.get(key);
    if (pending) return pending as Promise<T>;
    const promise = run().finally(() => this.inFlight.delete(key));
    this.inFlight.set(key, promise);
    return promise;
  }

  /** Chain writes to one endpoint so only one is ever in flight. */
  private serialize<T>(key: string, run: () => Promise<T>): Promise<T> {
    const previous = this.inFlight.get(key) ?? Promise.resolve();
    const promise = previous.then(run, run);
    // The stored tail never rejects (callers see failures only through the
    // returned promise) and clears the entry once the chain goes idle.
    const tail: Promise<unknown> = promise
      .then(() => undefined, () => undefined)
      .then(() => {
        if (this.inFlight.get(key) === tail) this.inFlight.delete(key);
      });
    this.inFlight.set(key, tail);
    return promise;
  }

  private async requestJson<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    const body = await response.text();
    if (!response.ok) throw parseError(response.status, body);
    return JSON.parse(body) as T;
  }

  private async requestBytes(path: string): Promise<Uint8Array> {
    const response = await this.fetchFn(this.baseUrl + path);
    if (!response.ok) {
      throw parseError(response.status, await response.text());
    }
    return new Uint8Array(await response.arrayBuffer());
  }
}

function parseError(status: number, body: string): ServiceError {
  try {
    const parsed = JSON.parse(body) as { detail?: unknown };
    const detail = parsed.detail;
    if (typeof detail === "string") return new ServiceError(status, detail);
    if (detail && typeof detail === "object") {
      const d = detail as { message?: string; key?: string };
      return new ServiceError(
        status, d.message ?? JSON.stringify(detail), d.key ?? null);
    }
  } catch {
    // not JSON; fall through to the raw body
  }
  return new ServiceError(status, body || `HTTP ${status}`);
}
