"""Edit a region of an existing field with a sketch overdraw and a 2D mask.

Builds a colored sphere field, draws its silhouette with a bump added on the
right, masks the bump region, and runs the coarse-to-fine edit. Writes the
edited field, the extracted surface mesh, and before/after renders to
demos/out/edit/. Takes a few minutes on one core.

Run from the repository root:

    python3 demos/edit_with_mask.py
"""

from pathlib import Path

import numpy as np
from scipy import ndimage

from sketchfield import edit, load_edit_config, load_field, make_camera, render
from sketchfield.imgio import save_render_png, save_sketch_png
from sketchfield.volume import (
    RenderConfig,
    VoxelRadianceField,
    inverse_softplus,
    save_field,
)

OUT = Path(__file__).parent / "out" / "edit"
SIZE = 48


def sphere_field(n=24, radius=0.28):
    """A soft solid sphere, warm-colored, centered in the unit cube."""
    idx = (np.arange(n) + 0.5) / n - 0.5
    x, y, z = np.meshgrid(idx, idx, idx, indexing="ij")
    r = np.sqrt(x * x + y * y + z * z)
    dens = np.where(r < radius, 50.0, 0.05)
    p = np.clip(np.stack([0.8 + 0 * x, 0.5 + 0.3 * x, 0.3 + 0 * x], -1),
                0.02, 0.98)
    return VoxelRadianceField(
        raw_density=inverse_softplus(dens),
        raw_color=np.log(p / (1.0 - p)),
        bounds_min=np.array([-0.5, -0.5, -0.5]),
        bounds_max=np.array([0.5, 0.5, 0.5]),
    )


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    base = sphere_field()
    field_path = OUT / "base.skdf"
    save_field(base, field_path)

    cam = make_camera(30.0, 20.0, 2.0, fov_y_deg=50.0, width=SIZE, height=SIZE)
    before = render(base, cam, RenderConfig(n_steps=48), background=1.0)
    save_render_png(OUT / "before.png", before.rgb)

    # sketch: the current silhouette outline plus a bump on the right
    sil = before.alpha > 0.5
    outline = sil ^ ndimage.binary_erosion(sil)
    cols = np.nonzero(sil.any(axis=0))[0]
    row = SIZE // 2
    bump_c = int(cols.max()) + 3
    ii, jj = np.mgrid[:SIZE, :SIZE]
    bump = np.abs(np.sqrt((ii - row) ** 2 + (jj - bump_c) ** 2) - 4.0) <= 0.8
    page = np.ones((SIZE, SIZE))
    page[ndimage.binary_dilation(outline) | bump] = 0.0
    sketch_path = OUT / "sketch.png"
    save_sketch_png(sketch_path, page)

    # mask: a disk around the bump (bright = editable); the rest must persist
    mask = (ii - row) ** 2 + (jj - bump_c) ** 2 <= 8.0 ** 2
    mask_path = OUT / "mask.png"
    save_sketch_png(mask_path, mask.astype(np.float64))

    config = load_edit_config({
        "field": str(field_path),
        "sketch": str(sketch_path),
        "mask": str(mask_path),
        "azimuth_deg": 30.0,
        "elevation_deg": 20.0,
        "radius": 2.0,
        "fov_y_deg": 50.0,
        "z_min": 1.75,
        "z_max": 2.25,
        "coarse": {"steps": 200, "seed": 7, "lr": 1.0},
        "fine": {"steps": 150, "seed": 11, "lr": 0.1},
    })
    print("running coarse-to-fine edit (200 + 150 steps)...")
    artifacts = edit(config, OUT / "run")
    print(f"edited field: {artifacts.field_path}")
    print(f"surface mesh: {artifacts.extra_paths['mesh']}")

    after = render(load_field(artifacts.field_path), cam,
                   RenderConfig(n_steps=48), background=1.0)
    save_render_png(OUT / "after.png", after.rgb)
    changed = np.abs(after.rgb - before.rgb).mean(axis=2)
    inside = float(changed[mask].mean())
    outside = float(changed[~mask].mean())
    print(f"mean rgb change inside mask {inside:.4f}, outside {outside:.6f}")


if __name__ == "__main__":
    main()
