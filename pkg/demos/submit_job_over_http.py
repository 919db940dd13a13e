"""Drive the whole pipeline through the HTTP job service, like the studio UI.

Starts the service in-process, submits a generation job whose sketch travels
inline as a data: URI (no shared filesystem needed), polls its progress,
downloads the loss table, and asks the sketch endpoint to re-draw the result.
Everything lands in demos/out/http/. Takes about a minute.

Run from the repository root:

    python3 demos/submit_job_over_http.py
"""

import base64
import json
import threading
import time
import urllib.request
from pathlib import Path

import numpy as np
import uvicorn

from sketchfield.imgio import encode_sketch_png
from sketchfield.service import create_app

OUT = Path(__file__).parent / "out" / "http"
PORT = 8731
BASE = f"http://127.0.0.1:{PORT}"


def circle_sketch(size=64, radius=20.0, width=1.2):
    ii, jj = np.mgrid[:size, :size]
    d = np.sqrt((ii - size / 2) ** 2 + (jj - size / 2) ** 2)
    page = np.ones((size, size))
    page[np.abs(d - radius) <= width] = 0.0
    return page


def api(method, path, payload=None):
    req = urllib.request.Request(BASE + path, method=method)
    if payload is not None:
        req.add_header("Content-Type", "application/json")
        req.data = json.dumps(payload).encode()
    with urllib.request.urlopen(req) as resp:
        body = resp.read()
        if resp.headers.get_content_type() == "application/json":
            return json.loads(body)
        return body


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    server = uvicorn.Server(uvicorn.Config(
        create_app(OUT), host="127.0.0.1", port=PORT, log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        time.sleep(0.05)
    print(f"service listening on {BASE}")

    sketch_uri = ("data:image/png;base64," + base64.b64encode(
        encode_sketch_png(circle_sketch())).decode())
    job = api("POST", "/api/jobs", {"kind": "generate", "config": {
        "sketch": sketch_uri,
        "total_steps": 300,
        "field_resolution": 32,
        "render_steps": 48,
        "seed": 3,
        "checkpoint_every": 100,
        "shading": "none",
        "model_2d": None,
        "weights": {"resolution_low": 48, "resolution_high": 48},
    }})
    job_id = job["id"]
    print(f"submitted generate job {job_id}")

    while True:
        status = api("GET", f"/api/jobs/{job_id}")
        print(f"  state={status['state']} "
              f"step={status['progress']['step']}/{status['progress']['total']}")
        if status["state"] in ("done", "failed", "cancelled"):
            break
        time.sleep(2.0)
    if status["state"] != "done":
        raise SystemExit(f"job ended {status['state']}: {status.get('error')}")

    print(f"artifacts: {status['artifacts']}")
    losses = api("GET", f"/api/jobs/{job_id}/artifacts/losses.csv")
    (OUT / "losses.csv").write_bytes(losses)

    field_rel = f"jobs/{job_id}/field.skdf"
    png = api("GET", f"/api/sketch?field={field_rel}&azimuth=45&elevation=15")
    (OUT / "resketched.png").write_bytes(png)
    print(f"loss table and a 45-degree re-sketch saved under {OUT}")

    server.should_exit = True
    thread.join(timeout=5.0)


if __name__ == "__main__":
    main()
