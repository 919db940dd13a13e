"""Orbit cameras, ray generation, cross-view reprojection and sketch warping.

Coordinate conventions used throughout the package:

* World frame: right-handed, +z is up. Azimuth is measured in degrees about
  +z starting from +x (toward +y); elevation in degrees above the xy-plane.
* Camera frame: x right, y down, z forward (optical axis). The camera up
  vector is world +z with the component along the view axis removed, so
  orbits never roll.
* Image frame: continuous pixel coordinates (u, v); u grows along columns
  (right), v along rows (down). The center of pixel (row i, col j) is
  (u, v) = (j + 0.5, i + 0.5). The principal point is (width/2, height/2),
  which for odd resolutions is the center pixel's center.
* Depth is the distance along the optical axis (camera-frame z), not the
  Euclidean ray length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WORLD_UP = np.array([0.0, 0.0, 1.0])

# behind-camera cutoff for reprojection, in scene units
_Z_EPS = 1e-9
# relative depth slack for z-buffer ties when splatting; wide enough that
# coplanar neighbors on a slanted surface blend instead of occluding each
# other's footprints, narrow enough to resolve front/back surface collisions
_ZBUF_REL_TOL = 0.05


@dataclass(frozen=True)
class CameraPose:
    """An orbit camera: spherical pose around a look-at point plus intrinsics."""

    azimuth_deg: float
    elevation_deg: float
    radius: float
    look_at: np.ndarray
    fov_y_deg: float
    width: int
    height: int

    @property
    def eye(self) -> np.ndarray:
        az = np.deg2rad(self.azimuth_deg)
        el = np.deg2rad(self.elevation_deg)
        offset = np.array([
            np.cos(el) * np.cos(az),
            np.cos(el) * np.sin(az),
            np.sin(el),
        ])
        return self.look_at + self.radius * offset

    @property
    def axis(self) -> np.ndarray:
        """Unit optical axis (from the eye toward the look-at point)."""
        fwd = self.look_at - self.eye
        return fwd / np.linalg.norm(fwd)

    @property
    def rotation(self) -> np.ndarray:
        """World-to-camera rotation; rows are (right, down, forward)."""
        forward = self.axis
        right = np.cross(forward, WORLD_UP)
        nrm = np.linalg.norm(right)
        if nrm < 1e-12:
            raise ValueError("camera axis parallel to world up (pole)")
        right = right / nrm
        down = np.cross(forward, right)
        return np.stack([right, down, forward])

    @property
    def focal_px(self) -> float:
        return (self.height / 2.0) / np.tan(np.deg2rad(self.fov_y_deg) / 2.0)

    @property
    def principal_point(self) -> tuple[float, float]:
        return (self.width / 2.0, self.height / 2.0)

    def world_to_cam(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return (points - self.eye) @ self.rotation.T

    def cam_to_world(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return points @ self.rotation + self.eye


@dataclass
class RayBundle:
    """Per-pixel rays; row-major pixel order, one ray through each pixel center."""

    origins: np.ndarray     # (H, W, 3)
    directions: np.ndarray  # (H, W, 3), unit norm
    width: int
    height: int


@dataclass
class DepthMap:
    """Per-pixel optical-axis depth in scene units with a validity mask."""

    values: np.ndarray  # (H, W) float
    valid: np.ndarray   # (H, W) bool

    def __post_init__(self):
        if self.values.shape != self.valid.shape:
            raise ValueError("depth values and validity mask shapes differ")


@dataclass
class ReprojectResult:
    """Continuous destination pixels plus status flags; never raises on misses."""

    uv: np.ndarray        # (N, 2) continuous destination pixel coords
    depth: np.ndarray     # (N,) destination optical-axis depth
    in_front: np.ndarray  # (N,) bool, destination depth > 0
    in_frame: np.ndarray  # (N,) bool, lands inside the destination image


def make_camera(azimuth_deg, elevation_deg, radius, look_at=(0.0, 0.0, 0.0),
                fov_y_deg=50.0, width=64, height=64) -> CameraPose:
    """Build an orbit camera; azimuth wraps mod 360, poles are rejected."""
    if not np.isfinite([azimuth_deg, elevation_deg, radius, fov_y_deg]).all():
        raise ValueError("non-finite camera parameter")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not (0.0 < fov_y_deg < 180.0):
        raise ValueError("fov_y_deg must lie in (0, 180)")
    if abs(elevation_deg) >= 90.0:
        raise ValueError("elevation at or beyond +-90 degrees is degenerate")
    if width < 1 or height < 1:
        raise ValueError("image size must be at least 1x1")
    look_at = np.asarray(look_at, dtype=np.float64)
    if look_at.shape != (3,):
        raise ValueError("look_at must be a 3-vector")
    return CameraPose(
        azimuth_deg=float(azimuth_deg) % 360.0,
        elevation_deg=float(elevation_deg),
        radius=float(radius),
        look_at=look_at,
        fov_y_deg=float(fov_y_deg),
        width=int(width),
        height=int(height),
    )


def sample_orthogonal_views(base_azimuth_deg, elevation_deg, radius, **camera_kwargs):
    """Four cameras at 90-degree azimuth gaps sharing one elevation and radius."""
    return [
        make_camera(base_azimuth_deg + k * 90.0, elevation_deg, radius, **camera_kwargs)
        for k in range(4)
    ]


def view_angle(cam_a: CameraPose, cam_b: CameraPose) -> float:
    """Angle in radians between two cameras' optical axes."""
    d = float(np.clip(np.dot(cam_a.axis, cam_b.axis), -1.0, 1.0))
    return float(np.arccos(d))


def nearest_view(sketch_camera: CameraPose, views) -> int:
    """Index of the view whose optical axis is angularly closest to the sketch view.

    Exact ties (within 1e-9 rad) resolve to the lowest index.
    """
    if len(views) == 0:
        raise ValueError("views must be non-empty")
    angles = np.array([view_angle(sketch_camera, v) for v in views])
    best = angles.min()
    return int(np.nonzero(angles <= best + 1e-9)[0][0])


def generate_rays(camera: CameraPose) -> RayBundle:
    """One ray per pixel through the pixel center; directions are unit vectors."""
    h, w = camera.height, camera.width
    f = camera.focal_px
    cx, cy = camera.principal_point
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    u = jj + 0.5
    v = ii + 0.5
    dirs_cam = np.stack([(u - cx) / f, (v - cy) / f, np.ones_like(u)], axis=-1)
    dirs_world = dirs_cam @ camera.rotation  # row-vector times R == R^T @ col
    dirs_world /= np.linalg.norm(dirs_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.eye, (h, w, 3)).copy()
    return RayBundle(origins=origins, directions=dirs_world, width=w, height=h)


def lift_pixels(camera: CameraPose, uv: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """Continuous pixels + optical-axis depths -> world points, shape (N, 3)."""
    uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
    depth = np.atleast_1d(np.asarray(depth, dtype=np.float64))
    f = camera.focal_px
    cx, cy = camera.principal_point
    x = (uv[:, 0] - cx) / f * depth
    y = (uv[:, 1] - cy) / f * depth
    pts_cam = np.stack([x, y, depth], axis=-1)
    return camera.cam_to_world(pts_cam)


def project_points(camera: CameraPose, points: np.ndarray):
    """World points -> (uv (N,2), depth (N,)); no visibility culling."""
    pts_cam = camera.world_to_cam(points)
    z = pts_cam[:, 2]
    f = camera.focal_px
    cx, cy = camera.principal_point
    with np.errstate(divide="ignore", invalid="ignore"):
        u = f * pts_cam[:, 0] / z + cx
        v = f * pts_cam[:, 1] / z + cy
    return np.stack([u, v], axis=-1), z


def reproject(uv: np.ndarray, depth: np.ndarray, cam_src: CameraPose,
              cam_dst: CameraPose) -> ReprojectResult:
    """Map source pixels with known depth into the destination camera.

    Behind-camera and out-of-frame landings are flagged, never raised.
    """
    uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
    depth = np.atleast_1d(np.asarray(depth, dtype=np.float64))
    if uv.shape[0] != depth.shape[0]:
        raise ValueError("uv and depth lengths differ")
    if np.any(depth <= 0):
        raise ValueError("source depths must be positive")
    world = lift_pixels(cam_src, uv, depth)
    uv_dst, z_dst = project_points(cam_dst, world)
    in_front = z_dst > _Z_EPS
    in_frame = (
        in_front
        & (uv_dst[:, 0] >= 0.0) & (uv_dst[:, 0] < cam_dst.width)
        & (uv_dst[:, 1] >= 0.0) & (uv_dst[:, 1] < cam_dst.height)
    )
    return ReprojectResult(uv=uv_dst, depth=z_dst, in_front=in_front, in_frame=in_frame)


def warp_sketch(sketch: np.ndarray, depth: DepthMap, cam_src: CameraPose,
                cam_dst: CameraPose) -> np.ndarray:
    """Forward-warp a sketch image into another view using per-pixel depth.

    Every valid-depth source pixel is splatted with bilinear weights onto the
    4 destination pixels around its continuous landing point. Depth collisions
    keep the nearest surface (z-buffer with a small relative tolerance), and
    ink mass (1 - intensity) accumulates additively among the survivors, so
    stroke mass is conserved when nothing collides or leaves the frame.
    Uncovered destination pixels stay blank (1.0).
    """
    sketch = np.asarray(sketch, dtype=np.float64)
    if sketch.ndim != 2:
        raise ValueError("sketch must be a single-channel image")
    if sketch.shape != depth.values.shape:
        raise ValueError("sketch and depth shapes differ")
    h_src, w_src = sketch.shape
    h_dst, w_dst = cam_dst.height, cam_dst.width

    valid = depth.valid & np.isfinite(depth.values) & (depth.values > 0)
    if not valid.any():
        return np.ones((h_dst, w_dst))

    ii, jj = np.nonzero(valid)
    uv_src = np.stack([jj + 0.5, ii + 0.5], axis=-1)
    res = reproject(uv_src, depth.values[ii, jj], cam_src, cam_dst)
    keep = res.in_front
    if not keep.any():
        return np.ones((h_dst, w_dst))

    u = res.uv[keep, 0]
    v = res.uv[keep, 1]
    z = res.depth[keep]
    ink = 1.0 - sketch[ii[keep], jj[keep]]

    # bilinear splat targets: pixel centers bracket the continuous coordinate
    c0 = np.floor(u - 0.5).astype(np.int64)
    r0 = np.floor(v - 0.5).astype(np.int64)
    au = (u - 0.5) - c0
    av = (v - 0.5) - r0

    n_px = h_dst * w_dst
    cand_idx = []
    cand_w = []
    cand_ink = []
    cand_z = []
    for dr, dc in ((0, 0), (0, 1), (1, 0), (1, 1)):
        rr = r0 + dr
        cc = c0 + dc
        w = (av if dr else (1.0 - av)) * (au if dc else (1.0 - au))
        ok = (rr >= 0) & (rr < h_dst) & (cc >= 0) & (cc < w_dst) & (w > 1e-12)
        cand_idx.append((rr[ok] * w_dst + cc[ok]))
        cand_w.append(w[ok])
        cand_ink.append(ink[ok])
        cand_z.append(z[ok])
    idx = np.concatenate(cand_idx)
    wgt = np.concatenate(cand_w)
    inks = np.concatenate(cand_ink)
    zs = np.concatenate(cand_z)
    if idx.size == 0:
        return np.ones((h_dst, w_dst))

    zmin = np.full(n_px, np.inf)
    np.minimum.at(zmin, idx, zs)
    survivors = zs <= zmin[idx] * (1.0 + _ZBUF_REL_TOL) + 1e-12

    ink_img = np.bincount(idx[survivors], weights=(wgt * inks)[survivors], minlength=n_px)
    out = np.clip(1.0 - ink_img, 0.0, 1.0)
    return out.reshape(h_dst, w_dst)


def local_camera_from_sphere(center, sphere_radius, azimuth_deg, elevation_deg,
                             fov_y_deg=50.0, fill_fraction=0.8,
                             width=64, height=64) -> CameraPose:
    """Orbit camera around a bounding sphere sized so the sphere fills the frame.

    Orbit radius = sphere_radius * (1 / fill_fraction) / tan(fov_y / 2); the
    sphere's angular extent then stays inside the frame for any direction.
    """
    if sphere_radius <= 0:
        raise ValueError("sphere_radius must be positive")
    if not (0.0 < fill_fraction <= 1.0):
        raise ValueError("fill_fraction must lie in (0, 1]")
    orbit = sphere_radius * (1.0 / fill_fraction) / np.tan(np.deg2rad(fov_y_deg) / 2.0)
    return make_camera(azimuth_deg, elevation_deg, orbit, look_at=center,
                       fov_y_deg=fov_y_deg, width=width, height=height)
