import { describe, expect, it } from "vitest";

import {
  isTerminal,
  JobSnapshot,
  ServiceClient,
  ServiceError,
} from "../src/client.js";

type Handler = (url: string, init?: RequestInit) => {
  status?: number;
  json?: unknown;
  bytes?: Uint8Array;
  delayMs?: number;
};

/** A scripted fetch: routes by "METHOD path", records every call. */
function fakeFetch(routes: Record<string, Handler>) {
  const calls: string[] = [];
  let inFlight = 0;
  let maxInFlight = 0;
  const fetchFn = async (url: string, init?: RequestInit) => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const key = `${method} ${path}`;
    calls.push(key);
    const handler = routes[key] ?? routes[`${method} *`];
    if (!handler) throw new Error(`unrouted request: ${key}`);
    inFlight += 1;
    maxInFlight = Math.max(maxInFlight, inFlight);
    const result = handler(url, init);
    if (result.delayMs) {
      await new Promise((resolve) => setTimeout(resolve, result.delayMs));
    }
    inFlight -= 1;
    const status = result.status ?? 200;
    const body = result.bytes ?? new TextEncoder().encode(
      JSON.stringify(result.json ?? null));
    return new Response(body.slice().buffer as ArrayBuffer, {
      status,
      headers: {
        "Content-Type": result.bytes ? "image/png" : "application/json",
      },
    });
  };
  return { fetchFn, calls, stats: () => ({ maxInFlight }) };
}

function snapshot(over: Partial<JobSnapshot> = {}): JobSnapshot {
  return {
    id: "abc123", kind: "generate", state: "queued",
    progress: { step: -1, total: 10 }, loss: null, error: null,
    ...over,
  };
}

describe("ServiceClient", () => {
  it("submits jobs and parses the snapshot", async () => {
    const { fetchFn, calls } = fakeFetch({
      "POST /api/jobs": (_url, init) => {
        const body = JSON.parse(String(init?.body));
        expect(body.kind).toBe("generate");
        expect(body.config.total_steps).toBe(5);
        return { json: snapshot() };
      },
    });
    const client = new ServiceClient("http://svc", fetchFn);
    const job = await client.submitJob("generate", { total_steps: 5 });
    expect(job.id).toBe("abc123");
    expect(calls).toEqual(["POST /api/jobs"]);
  });

  it("maps 400 field errors to ServiceError with the offending key", async () => {
    const { fetchFn } = fakeFetch({
      "POST /api/jobs": () => ({
        status: 400,
        json: { detail: { key: "sketch", message: "sketch is required" } },
      }),
    });
    const client = new ServiceClient("http://svc", fetchFn);
    const failure = await client.submitJob("generate", {}).catch((e) => e);
    expect(failure).toBeInstanceOf(ServiceError);
    expect(failure.status).toBe(400);
    expect(failure.key).toBe("sketch");
    expect(failure.message).toContain("sketch is required");
  });

  it("maps 404 detail strings", async () => {
    const { fetchFn } = fakeFetch({
      "GET /api/jobs/nope": () => ({
        status: 404, json: { detail: "unknown job" } }),
    });
    const client = new ServiceClient("http://svc", fetchFn);
    const failure = await client.getJob("nope").catch((e) => e);
    expect(failure.status).toBe(404);
    expect(failure.message).toBe("unknown job");
  });

  it("coalesces concurrent polls of one endpoint into one request", async () => {
    const { fetchFn, calls, stats } = fakeFetch({
      "GET /api/jobs/abc123": () => ({
        json: snapshot({ state: "running" }), delayMs: 20 }),
    });
    const client = new ServiceClient("http://svc", fetchFn);
    const [a, b, c] = await Promise.all([
      client.getJob("abc123"),
      client.getJob("abc123"),
      client.getJob("abc123"),
    ]);
    expect(calls.length).toBe(1);
    expect(stats().maxInFlight).toBe(1);
    expect(a).toEqual(b);
    expect(b).toEqual(c);
    // a later poll is a fresh request
    await client.getJob("abc123");
    expect(calls.length).toBe(2);
  });

  it("serializes concurrent writes to one endpoint", async () => {
    let cancels = 0;
    const { fetchFn, stats } = fakeFetch({
      "POST /api/jobs/abc123/cancel": () => {
        cancels += 1;
        return { json: snapshot({ state: "cancelled" }), delayMs: 15 };
      },
    });
    const client = new ServiceClient("http://svc", fetchFn);
    await Promise.all([
      client.cancelJob("abc123"),
      client.cancelJob("abc123"),
    ]);
    expect(cancels).toBe(2); // both requests happen...
    expect(stats().maxInFlight).toBe(1); // ...but never simultaneously
  });

  it("fetches artifact bytes exactly and URL-encodes path segments", async () => {
    const payload = new Uint8Array([1, 2, 3, 250]);
    const { fetchFn, calls } = fakeFetch({
      "GET /api/jobs/abc123/artifacts/checkpoints/step%20001.png": () => ({
        bytes: payload }),
    });
    const client = new ServiceClient("http://svc", fetchFn);
    const bytes = await client.fetchArtifact("abc123",
      "checkpoints/step 001.png");
    expect(bytes).toEqual(payload);
    expect(calls[0]).toContain("checkpoints/step%20001.png");
  });

  it("builds sketch requests with view parameters", async () => {
    const { fetchFn, calls } = fakeFetch({
      "GET *": () => ({ bytes: new Uint8Array([9]) }),
    });
    const client = new ServiceClient("http://svc", fetchFn);
    await client.fetchSketch("jobs/abc123/field.skdf", 90, 15, 64);
    expect(calls[0]).toContain("/api/sketch?");
    expect(calls[0]).toContain("field=jobs%2Fabc123%2Ffield.skdf");
    expect(calls[0]).toContain("azimuth=90");
    expect(calls[0]).toContain("elevation=15");
    expect(calls[0]).toContain("resolution=64");
  });

  it("classifies terminal states", () => {
    expect(isTerminal("done")).toBe(true);
    expect(isTerminal("failed")).toBe(true);
    expect(isTerminal("cancelled")).toBe(true);
    expect(isTerminal("queued")).toBe(false);
    expect(isTerminal("running")).toBe(false);
  });
});
