"""The browser studio and the service must agree on file conventions.

The studio's test suite commits a golden export of a drawn circle
(frontend/fixtures/). Loading that PNG through the service-side image
routines must yield a sketch whose extracted silhouette is a filled
disk, proving the two codebases read and write the same format with the
same stroke/mask polarity.
"""

from pathlib import Path

import numpy as np
import pytest

from sketchfield.imgio import load_sketch_png
from sketchfield.sketchops import extract_silhouette

FIXTURES = Path(__file__).resolve().parent.parent / "frontend" / "fixtures"


def _require(name: str) -> Path:
    path = FIXTURES / name
    if not path.exists():
        pytest.skip(f"studio fixture {name} not generated "
                    "(run `npm run make-fixtures` in frontend/)")
    return path


def test_studio_circle_export_reads_as_a_disk_silhouette():
    sketch = load_sketch_png(_require("circle_sketch.png"))
    assert sketch.shape == (64, 64)
    # strokes are dark on a white page
    assert sketch.min() < 0.5 and sketch.max() > 0.5

    sil = extract_silhouette(sketch) > 0.5
    area = int(sil.sum())
    assert area > 0
    # the silhouette is one filled disk: compare against the ideal disk
    # of the same area around the drawn center
    radius = np.sqrt(area / np.pi)
    assert 19.0 < radius < 23.0  # drawn at radius 20 with a 2 px brush
    yy, xx = np.mgrid[0:64, 0:64]
    ideal = (xx + 0.5 - 32.0) ** 2 + (yy + 0.5 - 32.0) ** 2 <= radius ** 2
    iou = (sil & ideal).sum() / (sil | ideal).sum()
    assert iou > 0.95


def test_studio_mask_export_polarity_is_bright_on_black():
    mask = load_sketch_png(_require("circle_mask.png"))
    assert mask.shape == (64, 64)
    # the fixture document paints no mask: an untouched mask layer is an
    # all-black page (nothing editable)
    assert float(mask.max()) == 0.0
