"""Sketch-image operations: silhouette closure and render-to-sketch edges.

Sketches are single-channel float images in [0, 1]; strokes are dark (0),
blank paper is 1. The silhouette of a sketch is everything that is not
connected to the image border through blank pixels, i.e. strokes plus the
regions they enclose.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from skimage import filters, morphology

STROKE_THRESHOLD = 0.5

# 4-connected flood fill so diagonal stroke chains still seal a region
_CONN4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def extract_silhouette(sketch: np.ndarray,
                       threshold: float = STROKE_THRESHOLD) -> np.ndarray:
    """Strokes plus every region they enclose, as a boolean mask.

    Blank pixels reachable from the border stay outside; a closed outline
    therefore fills to a solid shape while an open arc contributes only its
    own stroke pixels.
    """
    sketch = np.asarray(sketch, dtype=np.float64)
    if sketch.ndim != 2:
        raise ValueError("sketch must be a single-channel image")
    stroke = sketch < threshold
    blank = ~stroke
    labels, _ = ndimage.label(blank, structure=_CONN4)
    border = np.unique(np.concatenate([
        labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]]))
    border = border[border != 0]
    outside = np.isin(labels, border)
    return ~outside


def extract_sketch(rgb, depth: np.ndarray | None = None,
                   rgb_threshold: float = 0.1,
                   depth_threshold: float = 0.05,
                   alpha: np.ndarray | None = None) -> np.ndarray:
    """Synthesize a sketch from a rendered view: color edges plus depth
    discontinuities, thinned to stroke width <= 2 px, strokes dark on white.

    Accepts either a render result (anything with .rgb, .depth and .alpha)
    as the sole positional argument, or explicit arrays. When alpha is
    given, depth readings on rays that hit nothing (alpha <= 0.5) are
    pushed to the far plane first — their raw values are numerically
    meaningless and would otherwise register as edges in empty space.
    depth_threshold is relative to the robust depth range of the image.
    """
    if depth is None:
        rgb, depth, alpha = rgb.rgb, rgb.depth, rgb.alpha
    rgb = np.asarray(rgb, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("rgb must be (H, W, 3)")
    if depth.shape != rgb.shape[:2]:
        raise ValueError("depth and rgb sizes differ")
    if alpha is not None:
        depth = np.where(np.asarray(alpha) > 0.5, depth, depth.max())
    gray = rgb.mean(axis=2)
    rgb_edges = filters.sobel(gray) > rgb_threshold
    lo, hi = np.percentile(depth, [5, 95])
    span = max(hi - lo, 1e-9)
    depth_edges = filters.sobel(depth / span) > depth_threshold
    edges = morphology.thin(rgb_edges | depth_edges)
    return 1.0 - edges.astype(np.float64)
