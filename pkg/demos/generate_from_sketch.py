"""Generate a small 3D field from a hand-drawn-style circle sketch.

Draws a circular outline, runs a short desk-scale generation against it,
and writes the recovered field, its loss log, and a 8-frame turntable to
demos/out/generate/. Takes about a minute on one core.

Run from the repository root:

    python3 demos/generate_from_sketch.py
"""

from pathlib import Path

import numpy as np

from sketchfield import (
    generate,
    load_field,
    load_generation_config,
    turntable,
)
from sketchfield.imgio import save_render_png, save_sketch_png

OUT = Path(__file__).parent / "out" / "generate"


def circle_sketch(size=64, radius=20.0, width=1.2):
    """A white page with a dark circular outline, like a quick pen stroke."""
    ii, jj = np.mgrid[:size, :size]
    d = np.sqrt((ii - size / 2) ** 2 + (jj - size / 2) ** 2)
    page = np.ones((size, size))
    page[np.abs(d - radius) <= width] = 0.0
    return page


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    sketch_path = OUT / "sketch.png"
    save_sketch_png(sketch_path, circle_sketch())
    print(f"sketch written to {sketch_path}")

    config = load_generation_config({
        "sketch": str(sketch_path),
        "total_steps": 400,
        "field_resolution": 32,
        "render_steps": 48,
        "seed": 3,
        "checkpoint_every": 100,
        "shading": "none",
        "model_2d": None,
        "weights": {"resolution_low": 48, "resolution_high": 48},
    })
    print("optimizing a 32^3 field against the sketch (400 steps)...")
    artifacts = generate(config, OUT / "run")
    print(f"field:  {artifacts.field_path}")
    print(f"losses: {artifacts.loss_csv_path}")

    fld = load_field(artifacts.field_path)
    frames = turntable(fld, elevation_deg=15.0, frames=8, resolution=96)
    for k, rgb in enumerate(frames):
        save_render_png(OUT / f"turntable_{k:02d}.png", rgb)
    print(f"8 turntable frames written to {OUT}")


if __name__ == "__main__":
    main()
