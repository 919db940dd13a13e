import { describe, expect, it } from "vitest";

import { JobSnapshot, ServiceClient } from "../src/client.js";
import {
  JobMonitor,
  MonitorView,
  parseLossCsv,
  splitArtifacts,
} from "../src/monitor.js";

function snapshot(over: Partial<JobSnapshot> = {}): JobSnapshot {
  return {
    id: "abc123", kind: "generate", state: "running",
    progress: { step: 0, total: 4 }, loss: 1.0, error: null,
    ...over,
  };
}

/** A client whose getJob walks a fixed sequence of snapshots. */
function scriptedClient(sequence: JobSnapshot[], artifacts: Record<string,
    Uint8Array> = {}) {
  let cursor = 0;
  const fetchFn = async (url: string): Promise<Response> => {
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    if (path === "/api/jobs/abc123") {
      const snap = sequence[Math.min(cursor, sequence.length - 1)]!;
      cursor += 1;
      return new Response(JSON.stringify(snap), {
        status: 200, headers: { "Content-Type": "application/json" } });
    }
    const artifact = Object.entries(artifacts).find(([name]) =>
      path === `/api/jobs/abc123/artifacts/${name}`);
    if (artifact) {
      return new Response(artifact[1].slice().buffer as ArrayBuffer,
        { status: 200 });
    }
    return new Response(JSON.stringify({ detail: "unknown job" }),
      { status: 404 });
  };
  return new ServiceClient("http://svc", fetchFn);
}

/** Manual timer queue so the poll loop runs deterministically. */
function manualTimers() {
  const queue: (() => void)[] = [];
  return {
    schedule: (fn: () => void) => {
      queue.push(fn);
      return queue.length - 1;
    },
    cancelSchedule: () => undefined,
    async flush() {
      // Run queued ticks until the loop stops scheduling new ones. Macrotask
      // yields let each tick's whole fetch/body promise chain settle before
      // the queue is declared idle.
      let idle = 0;
      while (idle < 5) {
        if (queue.length > 0) {
          queue.shift()!();
          idle = 0;
        } else {
          idle += 1;
        }
        await new Promise((resolve) => setTimeout(resolve, 0));
      }
    },
  };
}

describe("parseLossCsv", () => {
  it("splits rows into per-term series", () => {
    const text = "step,term,value\n0,sds_3d,1.5\n0,total,2.0\n1,sds_3d,1.2\n";
    const series = parseLossCsv(text);
    expect([...series.keys()]).toEqual(["sds_3d", "total"]);
    expect(series.get("sds_3d")).toEqual([
      { step: 0, value: 1.5 },
      { step: 1, value: 1.2 },
    ]);
  });

  it("skips malformed rows without failing", () => {
    const series = parseLossCsv("step,term,value\ngarbage\n2,ok,3.5\n");
    expect(series.get("ok")).toEqual([{ step: 2, value: 3.5 }]);
  });
});

describe("splitArtifacts", () => {
  it("sorts artifacts into checkpoint and turntable strips", () => {
    const { checkpoints, turntable } = splitArtifacts([
      "field.skdf",
      "turntable/001.png",
      "checkpoints/step_000100.png",
      "checkpoints/step_000000.png",
      "turntable/000.png",
      "losses.csv",
    ]);
    expect(checkpoints).toEqual([
      "checkpoints/step_000000.png",
      "checkpoints/step_000100.png",
    ]);
    expect(turntable).toEqual(["turntable/000.png", "turntable/001.png"]);
  });
});

describe("JobMonitor", () => {
  it("accumulates progress across polls and stops at terminal", async () => {
    const losses = new TextEncoder().encode(
      "step,term,value\n0,sds_3d,1.0\n1,sds_3d,0.5\n");
    const client = scriptedClient([
      snapshot({ progress: { step: 0, total: 4 }, loss: 1.0 }),
      snapshot({ progress: { step: 2, total: 4 }, loss: 0.7 }),
      snapshot({
        state: "done", progress: { step: 3, total: 4 }, loss: 0.5,
        artifacts: ["field.skdf", "losses.csv", "checkpoints/step_000002.png",
                    "turntable/000.png", "turntable/001.png"],
      }),
      snapshot({ state: "done" }), // must never be reached
    ], { "losses.csv": losses });
    const timers = manualTimers();
    const updates: MonitorView[] = [];
    const monitor = new JobMonitor(client, "abc123", {
      onUpdate: (view) => updates.push(view),
      schedule: timers.schedule,
      cancelSchedule: timers.cancelSchedule,
    });
    await monitor.start();
    await timers.flush();

    const last = updates[updates.length - 1]!;
    expect(last.finished).toBe(true);
    expect(last.job?.state).toBe("done");
    // progress advanced across the three polls
    expect(updates.map((u) => u.job?.progress.step)).toEqual([0, 2, 3]);
    expect(last.livePoints.map((p) => p.value)).toEqual([1.0, 0.7, 0.5]);
    // the finished view carries the parsed loss table and the strips
    expect(last.lossTable?.get("sds_3d")?.length).toBe(2);
    expect(last.checkpointNames).toEqual(["checkpoints/step_000002.png"]);
    expect(last.turntableNames).toEqual(
      ["turntable/000.png", "turntable/001.png"]);
    // terminal: the loop scheduled nothing further
    await timers.flush();
    expect(updates.length).toBe(3);
  });

  it("shows failures verbatim", async () => {
    const client = scriptedClient([
      snapshot({ state: "failed", error: "field file is corrupt",
                 artifacts: [] }),
    ]);
    const timers = manualTimers();
    const updates: MonitorView[] = [];
    const monitor = new JobMonitor(client, "abc123", {
      onUpdate: (view) => updates.push(view),
      schedule: timers.schedule,
      cancelSchedule: timers.cancelSchedule,
    });
    await monitor.start();
    expect(updates[0]?.job?.error).toBe("field file is corrupt");
    expect(updates[0]?.finished).toBe(true);
  });

  it("clears the view on not-found", async () => {
    const client = scriptedClient([]); // every status poll 404s
    const timers = manualTimers();
    const updates: MonitorView[] = [];
    const monitor = new JobMonitor(client, "missing", {
      onUpdate: (view) => updates.push(view),
      schedule: timers.schedule,
      cancelSchedule: timers.cancelSchedule,
    });
    await monitor.start();
    expect(updates[0]?.job).toBeNull();
    expect(updates[0]?.finished).toBe(true);
  });

  it("stop() halts future polls", async () => {
    const client = scriptedClient([snapshot(), snapshot(), snapshot()]);
    const timers = manualTimers();
    const updates: MonitorView[] = [];
    const monitor = new JobMonitor(client, "abc123", {
      onUpdate: (view) => updates.push(view),
      schedule: timers.schedule,
      cancelSchedule: timers.cancelSchedule,
    });
    await monitor.start();
    expect(updates.length).toBe(1);
    monitor.stop();
    await timers.flush();
    expect(updates.length).toBe(1);
  });
});
