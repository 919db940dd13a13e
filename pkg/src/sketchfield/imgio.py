"""Image and table I/O: sketch and render PNGs, 16-bit depth PNGs with a
JSON sidecar mapping integer codes to scene units, and loss-curve CSVs.

Depth convention: code 0 marks an invalid pixel; codes 1..65535 map linearly
onto [near, far]. The sidecar ``<stem>.json`` records ``{near, far, units}``
so a depth image round-trips to scene units within (far - near) / 65534.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np
from PIL import Image

from .cameras import DepthMap

__all__ = [
    "save_sketch_png", "load_sketch_png",
    "save_render_png", "load_render_png",
    "save_depth_png", "load_depth_png", "depth_sidecar_path",
    "write_loss_csv", "append_loss_rows", "read_loss_csv",
]

_DEPTH_CODES = 65534  # codes 1..65535 span [near, far]; 0 = invalid


def _to_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0),
                   0, 255).astype(np.uint8)


def save_sketch_png(path, sketch: np.ndarray) -> None:
    """Write a [0, 1] single-channel sketch as an 8-bit grayscale PNG."""
    sketch = np.asarray(sketch, dtype=np.float64)
    if sketch.ndim != 2:
        raise ValueError("sketch must be a single-channel image")
    if sketch.min() < 0.0 or sketch.max() > 1.0:
        raise ValueError("sketch values must lie in [0, 1]")
    Image.fromarray(_to_u8(sketch), mode="L").save(Path(path), format="PNG")


def encode_sketch_png(sketch: np.ndarray) -> bytes:
    """The PNG byte payload save_sketch_png would write, without a file."""
    sketch = np.asarray(sketch, dtype=np.float64)
    if sketch.ndim != 2:
        raise ValueError("sketch must be a single-channel image")
    if sketch.min() < 0.0 or sketch.max() > 1.0:
        raise ValueError("sketch values must lie in [0, 1]")
    buf = io.BytesIO()
    Image.fromarray(_to_u8(sketch), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def load_sketch_png(path) -> np.ndarray:
    """Read a grayscale PNG into a [0, 1] float sketch image."""
    with Image.open(Path(path)) as im:
        gray = im.convert("L")
        return np.asarray(gray, dtype=np.float64) / 255.0


def save_render_png(path, rgb: np.ndarray) -> None:
    """Write a (H, W, 3) float [0, 1] render as an 8-bit RGB PNG."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("rgb must be (H, W, 3)")
    Image.fromarray(_to_u8(rgb), mode="RGB").save(Path(path), format="PNG")


def load_render_png(path) -> np.ndarray:
    """Read an RGB PNG into a (H, W, 3) float array in [0, 1]."""
    with Image.open(Path(path)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def depth_sidecar_path(path) -> Path:
    """The JSON sidecar carrying {near, far, units} for a depth PNG."""
    return Path(path).with_suffix(".json")


def save_depth_png(path, depth: DepthMap,
                   near: Optional[float] = None,
                   far: Optional[float] = None,
                   units: str = "scene") -> None:
    """Write a depth map as a 16-bit grayscale PNG plus its JSON sidecar.

    near/far default to the min/max over valid pixels; valid depths outside
    a caller-supplied range are clamped into it. Invalid pixels get code 0.
    """
    values = np.asarray(depth.values, dtype=np.float64)
    valid = depth.valid & np.isfinite(values)
    if near is None or far is None:
        if not valid.any():
            near_v, far_v = 0.0, 1.0
        else:
            near_v = float(values[valid].min())
            far_v = float(values[valid].max())
        near = near_v if near is None else float(near)
        far = far_v if far is None else float(far)
    if far <= near:
        far = near + 1.0  # degenerate range: constant depth still encodes
    codes = np.zeros(values.shape, dtype=np.uint16)
    scaled = (np.clip(values, near, far) - near) / (far - near)
    codes[valid] = 1 + np.rint(scaled[valid] * _DEPTH_CODES).astype(np.uint16)
    path = Path(path)
    Image.fromarray(codes).save(path, format="PNG")
    sidecar = {"near": near, "far": far, "units": units}
    depth_sidecar_path(path).write_text(json.dumps(sidecar, indent=2))


def load_depth_png(path) -> DepthMap:
    """Read a 16-bit depth PNG and its sidecar back into scene units."""
    path = Path(path)
    sidecar_file = depth_sidecar_path(path)
    if not sidecar_file.exists():
        raise FileNotFoundError(
            f"depth image {path.name} has no {sidecar_file.name} sidecar")
    sidecar = json.loads(sidecar_file.read_text())
    for key in ("near", "far"):
        if key not in sidecar:
            raise ValueError(f"depth sidecar missing required key '{key}'")
    near, far = float(sidecar["near"]), float(sidecar["far"])
    with Image.open(path) as im:
        codes = np.asarray(im, dtype=np.int64)
    if codes.ndim != 2:
        raise ValueError("depth PNG must be single-channel")
    valid = codes > 0
    values = np.zeros(codes.shape, dtype=np.float64)
    values[valid] = near + (codes[valid] - 1) / _DEPTH_CODES * (far - near)
    return DepthMap(values=values, valid=valid)


# loss curves: long-format CSV, one row per (step, term)

_LOSS_HEADER = ("step", "term", "value")


def write_loss_csv(path, rows: Iterable[tuple]) -> None:
    """Write (step, term, value) rows with a header, replacing the file."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_LOSS_HEADER)
        for step, term, value in rows:
            writer.writerow((int(step), str(term), repr(float(value))))


def append_loss_rows(path, step: int,
                     terms: Mapping[str, float]) -> None:
    """Append one optimization step's loss terms, creating the file (with
    header) on first use. Term order is sorted for reproducible bytes."""
    path = Path(path)
    fresh = not path.exists()
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(_LOSS_HEADER)
        for term in sorted(terms):
            writer.writerow((int(step), term, repr(float(terms[term]))))


def read_loss_csv(path) -> list[tuple[int, str, float]]:
    """Read a loss CSV back into (step, term, value) tuples."""
    out: list[tuple[int, str, float]] = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != _LOSS_HEADER:
            raise ValueError("loss CSV header must be step,term,value")
        for ln, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ValueError(f"loss CSV line {ln}: expected 3 columns")
            out.append((int(row[0]), row[1], float(row[2])))
    return out
