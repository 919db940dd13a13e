"""Mask-driven field editing: 2D masks lifted to scene geometry, containment
labeling of extracted surfaces, and the coarse/fine optimization loops.

Geometry conventions: a 2D mask's boundary is traced along the 0.5 iso-line
between inside and outside pixel centers, lifted along the per-pixel camera
rays, and capped at two optical-axis depths. Mask boundaries are assumed
simple; a mask pinched to zero width can produce a self-touching boundary
and is rejected when the lifted tube fails the closedness audit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage
from skimage import measure

from . import _kernels
from .cameras import (
    CameraPose,
    DepthMap,
    generate_rays,
    lift_pixels,
    local_camera_from_sphere,
    nearest_view,
    project_points,
    sample_orthogonal_views,
    warp_sketch,
)
from .diffusion import (
    ConditionSet,
    DiffusionSchedule,
    GuidanceConfig,
    ImageScoreModel,
    ScoreModel,
)
from .errors import DegenerateGeometryError, NothingToEditError, OpenMeshError
from .losses import (
    LossReport,
    StageInputs,
    WeightSchedule,
    coarse_edit_objective,
    fine_edit_objective,
)
from .meshes import TriMesh
from .optim import MomentumSGD
from .sketchops import extract_silhouette
from .volume import (
    RenderConfig,
    ShadingConfig,
    VoxelRadianceField,
    extract_mesh,
    render,
)

# a single labeled vertex gives a zero-radius bounding sphere; the local
# camera still needs a finite subject to frame
MIN_LOCAL_SPHERE_RADIUS = 1e-2

EDIT_RENDER_STEPS = 48
EDIT_LEARNING_RATE = 0.05
LOCAL_STEP_FRACTION = 0.5


# ------------------------------------------------------------ domain types

@dataclass(frozen=True)
class Sphere:
    """A bounding sphere in scene units."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64).reshape(3)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))
        if not np.isfinite(center).all() or not np.isfinite(self.radius):
            raise ValueError("sphere parameters must be finite")
        if self.radius < 0:
            raise ValueError("radius must be non-negative")

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        d = np.linalg.norm(points - self.center, axis=1)
        return d <= self.radius * (1.0 + tol) + tol


@dataclass(frozen=True)
class LabeledMesh:
    """A mesh with a per-vertex edit/keep flag; True marks an edit vertex."""

    mesh: TriMesh
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=bool).reshape(-1)
        object.__setattr__(self, "labels", labels)
        if len(labels) != len(self.mesh.vertices):
            raise ValueError("one label per vertex required")

    @property
    def edit_count(self) -> int:
        return int(self.labels.sum())


@dataclass(frozen=True)
class EditRequest:
    """One editing job: a base field, the edited sketch with its camera,
    a 2D region mask in the same view, and the depth slab that localizes
    the region along the view rays."""

    base_field: VoxelRadianceField
    sketch: np.ndarray
    camera: CameraPose
    mask: np.ndarray
    z_min: float
    z_max: float
    text_token: Optional[str] = None

    def __post_init__(self):
        sketch = np.asarray(self.sketch, dtype=np.float64)
        if sketch.ndim != 2:
            raise ValueError("sketch must be a single-channel image")
        if sketch.shape != (self.camera.height, self.camera.width):
            raise ValueError("sketch resolution does not match the camera")
        if sketch.min() < 0.0 or sketch.max() > 1.0:
            raise ValueError("sketch values must lie in [0, 1]")
        mask = _as_binary_mask(self.mask)
        if mask.shape != sketch.shape:
            raise ValueError("mask and sketch resolutions differ")
        object.__setattr__(self, "sketch", sketch)
        object.__setattr__(self, "mask", mask)
        _check_depth_slab(self.z_min, self.z_max)


def _as_binary_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError("mask must be a single-channel image")
    return mask > 0.5 if mask.dtype != bool else mask


def _check_depth_slab(z_min: float, z_max: float) -> None:
    if not np.isfinite([z_min, z_max]).all():
        raise ValueError("depth bounds must be finite")
    if z_min == z_max:
        raise DegenerateGeometryError("depth slab has zero thickness")
    if z_min <= 0 or z_max < z_min:
        raise ValueError("need 0 < z_min < z_max")


# ----------------------------------------------------------- mask lifting

def _cross2(o, a, b) -> float:
    return float((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))


def _drop_collinear(poly: np.ndarray) -> np.ndarray:
    n = len(poly)
    keep = [i for i in range(n)
            if abs(_cross2(poly[i - 1], poly[i], poly[(i + 1) % n])) > 1e-12]
    return poly[keep] if len(keep) >= 3 else poly


def _boundary_polygons(mask: np.ndarray) -> list:
    """Outer boundary of each connected mask component, holes filled, as
    (P, 2) arrays of continuous (u, v) pixel coordinates."""
    labels, n_comp = ndimage.label(mask)
    polys = []
    for lab in range(1, n_comp + 1):
        comp = ndimage.binary_fill_holes(labels == lab)
        padded = np.pad(comp, 1).astype(np.float64)
        contours = measure.find_contours(padded, 0.5)
        contour = max(contours, key=len)
        if np.allclose(contour[0], contour[-1]):
            contour = contour[:-1]
        # padded index (r, c) -> pixel-center coordinate (c - 1 + 0.5, ...)
        uv = np.stack([contour[:, 1] - 0.5, contour[:, 0] - 0.5], axis=-1)
        polys.append(_drop_collinear(uv))
    return polys


def _triangulate_polygon(poly: np.ndarray) -> np.ndarray:
    """Ear-clipping triangulation of a simple polygon; (P, 2) -> (P-2, 3)."""
    n = len(poly)
    if n < 3:
        raise ValueError("boundary polygon needs at least 3 vertices")
    area2 = sum(_cross2((0.0, 0.0), poly[i], poly[(i + 1) % n])
                for i in range(n))
    sign = 1.0 if area2 > 0 else -1.0
    idx = list(range(n))
    tris = []
    while len(idx) > 3:
        clipped = False
        m = len(idx)
        for k in range(m):
            ia, ib, ic = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, c = poly[ia], poly[ib], poly[ic]
            if sign * _cross2(a, b, c) < -1e-12:
                continue  # reflex corner: not an ear; collinear corners
                # are zero-area ears and clipping them is always safe
            blocked = False
            for io in idx:
                if io in (ia, ib, ic):
                    continue
                p = poly[io]
                if (sign * _cross2(a, b, p) > 1e-12
                        and sign * _cross2(b, c, p) > 1e-12
                        and sign * _cross2(c, a, p) > 1e-12):
                    blocked = True
                    break
            if not blocked:
                tris.append((ia, ib, ic))
                idx.pop(k)
                clipped = True
                break
        if not clipped:
            raise ValueError("mask boundary is not a simple polygon")
    tris.append(tuple(idx))
    return np.array(tris, dtype=np.int64)


def lift_mask_to_cylinder(mask: np.ndarray, camera: CameraPose,
                          z_min: float, z_max: float) -> TriMesh:
    """Lift a 2D mask into a closed tube between two optical-axis depths.

    Each mask component's outer boundary (holes are filled) becomes a ring
    of side walls along the per-pixel camera rays, closed by ear-clipped
    caps at z_min and z_max. The result re-projects to the mask in the
    source camera: caps cover exactly the boundary polygon's interior and
    the walls project onto the boundary curve itself.
    """
    mask = _as_binary_mask(mask)
    if mask.shape != (camera.height, camera.width):
        raise ValueError("mask resolution does not match the camera")
    _check_depth_slab(z_min, z_max)
    if not mask.any():
        raise ValueError("mask selects no pixels")

    verts_all, faces_all, offset = [], [], 0
    for poly in _boundary_polygons(mask):
        p = len(poly)
        near = lift_pixels(camera, poly, np.full(p, float(z_min)))
        far = lift_pixels(camera, poly, np.full(p, float(z_max)))
        faces = []
        for i in range(p):
            j = (i + 1) % p
            faces.append((i, j, j + p))
            faces.append((i, j + p, i + p))
        for a, b, c in _triangulate_polygon(poly):
            faces.append((a, c, b))          # near cap
            faces.append((a + p, b + p, c + p))  # far cap
        verts_all.append(np.concatenate([near, far]))
        faces_all.append(np.asarray(faces, dtype=np.int64) + offset)
        offset += 2 * p
    mesh = TriMesh(vertices=np.concatenate(verts_all),
                   faces=np.concatenate(faces_all))
    if not mesh.is_closed():
        raise ValueError("mask boundary produced a non-manifold tube; "
                         "masks pinched to zero width are not supported")
    return mesh


# ----------------------------------------------------------- mask rendering

def render_mask(mesh: TriMesh, camera: CameraPose) -> np.ndarray:
    """Binary image marking pixels whose center ray intersects the mesh.

    Triangles fully in front of the camera are rasterized only inside
    their projected bounding rectangle; triangles crossing the camera
    plane fall back to testing the whole frame.
    """
    h, w = camera.height, camera.width
    hit = np.zeros(h * w, dtype=np.uint8)
    if mesh.is_empty:
        return hit.reshape(h, w)

    corners = mesh.vertices[mesh.faces]              # (F, 3, 3)
    uv, z = project_points(camera, corners.reshape(-1, 3))
    uv = uv.reshape(-1, 3, 2)
    z = z.reshape(-1, 3)
    n_faces = len(mesh.faces)
    r0 = np.zeros(n_faces, dtype=np.int64)
    r1 = np.full(n_faces, -1, dtype=np.int64)  # empty range: skipped
    c0 = np.zeros(n_faces, dtype=np.int64)
    c1 = np.full(n_faces, -1, dtype=np.int64)

    front = z > 1e-9
    full = front.any(axis=1) & ~front.all(axis=1)  # crosses the camera plane
    r0[full], r1[full] = 0, h - 1
    c0[full], c1[full] = 0, w - 1
    boxed = front.all(axis=1)
    if boxed.any():
        u_lo, u_hi = uv[boxed, :, 0].min(1), uv[boxed, :, 0].max(1)
        v_lo, v_hi = uv[boxed, :, 1].min(1), uv[boxed, :, 1].max(1)
        c0[boxed] = np.clip(np.floor(u_lo - 0.5), 0, w - 1).astype(np.int64)
        c1[boxed] = np.clip(np.ceil(u_hi - 0.5), -1, w - 1).astype(np.int64)
        r0[boxed] = np.clip(np.floor(v_lo - 0.5), 0, h - 1).astype(np.int64)
        r1[boxed] = np.clip(np.ceil(v_hi - 0.5), -1, h - 1).astype(np.int64)

    rays = generate_rays(camera)
    v0, e1, e2 = mesh.triangle_arrays()
    _kernels.raycast_mask_kernel(
        v0, e1, e2, r0, r1, c0, c1,
        np.ascontiguousarray(rays.origins.reshape(-1, 3)),
        np.ascontiguousarray(rays.directions.reshape(-1, 3)), w, hit)
    return hit.reshape(h, w)


# ------------------------------------------------------ containment labels

def _unit_direction(rng: np.random.Generator) -> np.ndarray:
    while True:
        d = rng.standard_normal(3)
        n = np.linalg.norm(d)
        if n > 1e-3:
            return d / n


def contains_points(mesh: TriMesh, points: np.ndarray, *, seed: int = 0,
                    max_rounds: int = 20) -> np.ndarray:
    """Inside/outside flags for points against a closed mesh.

    Ray-parity voting: each round casts two rays per unresolved point in
    freshly drawn directions and accepts points whose crossing counts are
    clean (no grazing hits) and agree in parity. Remaining points retry
    with new directions.
    """
    if not mesh.is_closed():
        raise OpenMeshError("containment needs a closed mesh")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != 3:
        raise ValueError("points must be (N, 3)")
    v0, e1, e2 = mesh.triangle_arrays()
    inside = np.zeros(len(points), dtype=bool)
    unresolved = np.arange(len(points))
    rng = np.random.default_rng(seed)

    def _run(pts, d):
        counts = np.zeros(len(pts), dtype=np.int64)
        suspect = np.zeros(len(pts), dtype=np.uint8)
        _kernels.parity_kernel(np.ascontiguousarray(pts), v0, e1, e2,
                               d[0], d[1], d[2], counts, suspect)
        return counts, suspect

    for _ in range(max_rounds):
        pts = points[unresolved]
        c1, s1 = _run(pts, _unit_direction(rng))
        c2, s2 = _run(pts, _unit_direction(rng))
        ok = (s1 == 0) & (s2 == 0) & ((c1 & 1) == (c2 & 1))
        inside[unresolved[ok]] = (c1[ok] & 1).astype(bool)
        unresolved = unresolved[~ok]
        if unresolved.size == 0:
            return inside
    raise RuntimeError(f"{unresolved.size} points stayed ambiguous after "
                       f"{max_rounds} jittered retries")


def load_overrides(path) -> dict:
    """Parse per-vertex relabels: lines of "<vertex_index> <0|1>";
    blanks and '#' comments are skipped."""
    out = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ValueError(f"line {ln}: expected '<vertex_index> <0|1>'")
            try:
                idx, val = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"line {ln}: expected two integers") from None
            if val not in (0, 1):
                raise ValueError(f"line {ln}: label must be 0 or 1")
            out[idx] = val
    return out


def label_vertices(mesh: TriMesh, coarse_mask_mesh: TriMesh,
                   overrides: Optional[Mapping[int, int]] = None, *,
                   seed: int = 0) -> LabeledMesh:
    """Label each vertex edit/keep by containment in the mask mesh, then
    apply explicit relabels (vertex index -> 0 or 1)."""
    if not coarse_mask_mesh.is_closed():
        raise OpenMeshError("the mask mesh is open, containment is undefined")
    labels = contains_points(coarse_mask_mesh, mesh.vertices, seed=seed)
    if overrides:
        items = overrides.items() if isinstance(overrides, Mapping) \
            else overrides
        for idx, val in items:
            idx, val = int(idx), int(val)
            if not 0 <= idx < len(mesh.vertices):
                raise ValueError(f"override index {idx} out of range")
            if val not in (0, 1):
                raise ValueError("override labels must be 0 or 1")
            labels[idx] = bool(val)
    return LabeledMesh(mesh=mesh, labels=labels)


# ----------------------------------------------------------- bounding sphere

def _ritter(points: np.ndarray, start: int):
    p0 = points[start]
    p1 = points[np.argmax(((points - p0) ** 2).sum(axis=1))]
    p2 = points[np.argmax(((points - p1) ** 2).sum(axis=1))]
    center = 0.5 * (p1 + p2)
    radius = 0.5 * float(np.linalg.norm(p2 - p1))
    while True:
        d = np.linalg.norm(points - center, axis=1)
        i = int(np.argmax(d))
        if d[i] <= radius * (1.0 + 1e-12) + 1e-15:
            return center, radius
        radius = 0.5 * (radius + d[i])
        center = center + (1.0 - radius / d[i]) * (points[i] - center)


def bounding_sphere(points: np.ndarray) -> Sphere:
    """Enclosing sphere of a point set, two-pass construction: a diameter
    guess from farthest-point hops, then growth toward outliers. Several
    deterministic starts are tried and the tightest result kept; the final
    radius is re-measured so containment is exact."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.size == 0:
        raise ValueError("bounding sphere of an empty point set")
    if points.shape[1] != 3:
        raise ValueError("points must be (N, 3)")
    starts = {0, int(np.argmin(points[:, 0])), int(np.argmax(points[:, 0])),
              int(np.argmin(points.sum(axis=1))),
              int(np.argmax(points.sum(axis=1)))}
    best_center, best_radius = None, np.inf
    for s in starts:
        center, radius = _ritter(points, s)
        if radius < best_radius:
            best_center, best_radius = center, radius
    best_radius = max(best_radius,
                      float(np.linalg.norm(points - best_center, axis=1).max()))
    return Sphere(center=best_center, radius=best_radius)


# ------------------------------------------------------------- edit loops

def edit_shading(camera: CameraPose, ambient: float = 0.8) -> ShadingConfig:
    """Deterministic per-view headlight, so pre-edit reference renders and
    live renders share lighting exactly."""
    return ShadingConfig(light_position=tuple(camera.eye), ambient=ambient)


def _edit_cameras(camera: CameraPose) -> list:
    orth = sample_orthogonal_views(
        camera.azimuth_deg, camera.elevation_deg, camera.radius,
        look_at=camera.look_at, fov_y_deg=camera.fov_y_deg,
        width=camera.width, height=camera.height)
    return [camera, *orth]


def _edit_conditions(request: EditRequest, cams: Sequence[CameraPose],
                     n_render_steps: int) -> ConditionSet:
    # depth for warping comes from the pre-edit geometry itself
    base = render(request.base_field, cams[0],
                  RenderConfig(n_steps=n_render_steps), background=1.0)
    depth = DepthMap(values=base.depth, valid=base.alpha > 0.5)
    orth = cams[1:]
    near = nearest_view(request.camera, orth)
    warped = warp_sketch(request.sketch, depth, request.camera, orth[near])
    return ConditionSet.assemble(
        sketch=request.sketch, sketch_camera=cams[0], orthogonal_cameras=orth,
        nearest_offset=near, warped_sketch=warped,
        text_token=request.text_token)


def _edit_masks(request: EditRequest, cams: Sequence[CameraPose]) -> list:
    if not request.mask.any():
        zero = np.zeros((request.camera.height, request.camera.width),
                        dtype=np.uint8)
        return [zero.copy() for _ in cams]
    tube = lift_mask_to_cylinder(request.mask, request.camera,
                                 request.z_min, request.z_max)
    return [render_mask(tube, c) for c in cams]


def _recomposite(ori: Sequence, bg: float) -> list:
    """Pre-edit renders over black, recomposed onto the step background."""
    return [o.rgb + bg * (1.0 - o.alpha)[..., None] for o in ori]


def coarse_edit(request: EditRequest, score_model: ScoreModel,
                schedule: DiffusionSchedule, *, total_steps: int = 200,
                seed: int = 0, weights: Optional[WeightSchedule] = None,
                n_render_steps: int = EDIT_RENDER_STEPS,
                lr: float = EDIT_LEARNING_RATE,
                guidance: Optional[GuidanceConfig] = None,
                background: Optional[float] = None,
                progress: Optional[Callable[[int, LossReport], bool]] = None,
                ) -> VoxelRadianceField:
    """First editing stage: distill the edited sketch into a clone of the
    base field while pinning everything outside the lifted mask.

    The five views (sketch view plus its orthogonal ring), the tube masks,
    and the pre-edit reference renders are fixed for the whole loop; only
    the gray background is redrawn per step, and the references are
    recomposed onto it. An empty mask is allowed and pins every pixel.
    A progress callback returning False stops the loop early.
    """
    fld = request.base_field.copy()
    if total_steps <= 0:
        return fld
    ws = weights if weights is not None \
        else WeightSchedule(total_steps=total_steps)
    rng = np.random.default_rng(seed)
    cams = _edit_cameras(request.camera)
    configs = [RenderConfig(n_steps=n_render_steps, shading=edit_shading(c))
               for c in cams]
    conditions = _edit_conditions(request, cams, n_render_steps)
    masks = _edit_masks(request, cams)
    sil = extract_silhouette(request.sketch)
    ori = [render(request.base_field, cams[v], configs[v], background=0.0)
           for v in range(5)]
    opt = MomentumSGD(lr=lr)
    for step in range(total_steps):
        bg = float(rng.random()) if background is None else float(background)
        renders = [render(fld, cams[v], configs[v], background=bg)
                   for v in range(5)]
        inputs = StageInputs(
            conditions=conditions, score_model=score_model, schedule=schedule,
            weights=ws, rng=rng, silhouette_target=sil, guidance=guidance,
            x_ori=_recomposite(ori, bg), masks_2d=masks)
        report = coarse_edit_objective(step, renders, inputs)
        if not np.isfinite(report.total):
            raise FloatingPointError(f"non-finite loss at step {step}")
        opt.step(fld, report.gradient)
        if progress is not None and progress(step, report) is False:
            break
    return fld


def fine_edit(request: EditRequest, coarse_field: VoxelRadianceField,
              score_model_3d: ScoreModel,
              score_model_2d: Optional[ImageScoreModel],
              schedule: DiffusionSchedule, *, total_steps: int = 200,
              seed: int = 0, weights: Optional[WeightSchedule] = None,
              n_render_steps: int = EDIT_RENDER_STEPS,
              lr: float = EDIT_LEARNING_RATE,
              guidance: Optional[GuidanceConfig] = None,
              background: Optional[float] = None,
              overrides: Optional[Mapping[int, int]] = None,
              iso_density: float = 1.0,
              local_fraction: float = LOCAL_STEP_FRACTION,
              progress: Optional[Callable[[int, LossReport], bool]] = None,
              ):
    """Second editing stage: relabel the edit region on the coarse surface
    and refine it with alternating global and local views.

    The coarse surface is extracted, its vertices are labeled by
    containment in the lifted tube (plus explicit overrides), and the
    precise per-view masks come from rendering only fully edit-labeled
    faces. Each step renders either the global five-view set or five views
    orbiting the edit region's bounding sphere; local views carry no
    sketch controls and skip the silhouette term. Preservation always
    anchors to renders of the original base field. Returns the refined
    field and the labeled mesh.
    """
    if not request.mask.any():
        raise NothingToEditError("edit mask selects no pixels")
    mesh = extract_mesh(coarse_field, iso_density=iso_density)
    if mesh.is_empty:
        raise NothingToEditError("the coarse field has no surface to label")
    tube = lift_mask_to_cylinder(request.mask, request.camera,
                                 request.z_min, request.z_max)
    labeled = label_vertices(mesh, tube, overrides=overrides, seed=seed)
    edit_points = labeled.mesh.vertices[labeled.labels]
    if len(edit_points) == 0:
        raise NothingToEditError("no vertices are labeled for editing")
    sphere = bounding_sphere(edit_points)
    face_edit = labeled.labels[mesh.faces].all(axis=1)
    precise = TriMesh(vertices=mesh.vertices, faces=mesh.faces[face_edit])

    fld = coarse_field.copy()
    if total_steps <= 0:
        return fld, labeled

    cam = request.camera
    global_cams = _edit_cameras(cam)
    local_base = local_camera_from_sphere(
        sphere.center, max(sphere.radius, MIN_LOCAL_SPHERE_RADIUS),
        cam.azimuth_deg, cam.elevation_deg, fov_y_deg=cam.fov_y_deg,
        width=cam.width, height=cam.height)
    local_cams = [local_base] + sample_orthogonal_views(
        local_base.azimuth_deg, local_base.elevation_deg, local_base.radius,
        look_at=sphere.center, fov_y_deg=cam.fov_y_deg,
        width=cam.width, height=cam.height)

    view_sets = {}
    for name, cams in (("global", global_cams), ("local", local_cams)):
        configs = [RenderConfig(n_steps=n_render_steps,
                                shading=edit_shading(c)) for c in cams]
        masks = [render_mask(precise, c) for c in cams]
        ori = [render(request.base_field, cams[v], configs[v], background=0.0)
               for v in range(5)]
        view_sets[name] = (cams, configs, masks, ori)
    cond_global = _edit_conditions(request, global_cams, n_render_steps)
    cond_local = ConditionSet(
        cameras=tuple(local_cams),
        control_images=np.ones((5, cam.height, cam.width)),
        nearest_offset=0, text_token=request.text_token)
    sil = extract_silhouette(request.sketch)

    ws = weights if weights is not None \
        else WeightSchedule(total_steps=total_steps)
    rng = np.random.default_rng(seed)
    opt = MomentumSGD(lr=lr)
    for step in range(total_steps):
        use_local = bool(rng.random() < local_fraction)
        cams, configs, masks, ori = view_sets["local" if use_local
                                              else "global"]
        bg = float(rng.random()) if background is None else float(background)
        renders = [render(fld, cams[v], configs[v], background=bg)
                   for v in range(5)]
        inputs = StageInputs(
            conditions=cond_local if use_local else cond_global,
            score_model=score_model_3d, schedule=schedule, weights=ws,
            rng=rng, silhouette_target=None if use_local else sil,
            score_model_2d=score_model_2d, guidance=guidance,
            x_ori=_recomposite(ori, bg), masks_2d=masks)
        report = fine_edit_objective(step, renders, inputs)
        if not np.isfinite(report.total):
            raise FloatingPointError(f"non-finite loss at step {step}")
        opt.step(fld, report.gradient)
        if progress is not None and progress(step, report) is False:
            break
    return fld, labeled
