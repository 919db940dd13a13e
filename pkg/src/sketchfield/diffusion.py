"""Analytic score engine: noise schedule, guidance, and plug-in denoisers.

The optimization losses only ever talk to a denoiser through
``ScoreModel.denoise(x_t, t, conditions)``, so any epsilon-prediction model
fits. The models here are closed-form stand-ins: an oracle that knows a
hidden radiance field (for convergence experiments with a known answer) and
a sketch-consistency model that pulls rendered views toward their control
sketches. Images are float arrays in [0, 1], stacked (V, H, W, 3) with one
row per view.

View stack layout: index 0 is the sketch view, indices 1..4 are the four
azimuth-orthogonal views; exactly one of those (the one nearest the sketch
view) carries a warped control sketch, the remaining far views carry blank
(all-ones) controls.
"""

from __future__ import annotations

import colorsys
import hashlib
from dataclasses import dataclass, replace
from typing import Callable, Optional, Protocol, Sequence

import numpy as np
from scipy import ndimage

from .cameras import CameraPose, DepthMap
from .sketchops import extract_silhouette

T_DEFAULT = 1000
BETA_START = 8.5e-4
BETA_END = 1.2e-2

# SDS timesteps avoid the first and last 2% of the schedule
TIMESTEP_LOW_FRACTION = 0.02
TIMESTEP_HIGH_FRACTION = 0.98

GUIDANCE_SCALE_DEFAULT = 7.5
RESCALE_FACTOR_DEFAULT = 0.5

_BLANK_EPS = 1e-9
_STD_EPS = 1e-8


@dataclass(frozen=True)
class GuidanceConfig:
    """How cfg_combine blends the conditional and unconditional branches."""

    guidance_scale: float = GUIDANCE_SCALE_DEFAULT
    rescale_factor: float = RESCALE_FACTOR_DEFAULT

    def __post_init__(self):
        if self.guidance_scale < 0.0:
            raise ValueError("guidance_scale must be >= 0")
        if not 0.0 <= self.rescale_factor <= 1.0:
            raise ValueError("rescale_factor must lie in [0, 1]")


@dataclass(frozen=True)
class DiffusionSchedule:
    """Cumulative signal levels alpha_bar[t] of a variance-preserving
    forward process, strictly decreasing over t in [0, T)."""

    alpha_bar: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.ndim != 1 or ab.size < 2:
            raise ValueError("alpha_bar must be a 1-D array with T >= 2")
        if np.any(ab <= 0.0) or np.any(ab > 1.0):
            raise ValueError("alpha_bar values must lie in (0, 1]")
        if np.any(np.diff(ab) >= 0.0):
            raise ValueError("alpha_bar must be strictly decreasing")
        object.__setattr__(self, "alpha_bar", ab)

    @classmethod
    def linear_beta(cls, num_timesteps: int = T_DEFAULT,
                    beta_start: float = BETA_START,
                    beta_end: float = BETA_END) -> "DiffusionSchedule":
        betas = np.linspace(beta_start, beta_end, num_timesteps)
        return cls(alpha_bar=np.cumprod(1.0 - betas))

    @property
    def num_timesteps(self) -> int:
        return self.alpha_bar.size

    def _check_t(self, t: int) -> int:
        t = int(t)
        if not 0 <= t < self.num_timesteps:
            raise ValueError(f"timestep {t} outside [0, {self.num_timesteps})")
        return t

    def signal_scale(self, t: int) -> float:
        """sqrt(alpha_bar[t])"""
        return float(np.sqrt(self.alpha_bar[self._check_t(t)]))

    def noise_scale(self, t: int) -> float:
        """sqrt(1 - alpha_bar[t])"""
        return float(np.sqrt(1.0 - self.alpha_bar[self._check_t(t)]))


def sample_timestep(schedule: DiffusionSchedule,
                    rng: np.random.Generator) -> int:
    """Uniform integer timestep in the central band of the schedule."""
    t_count = schedule.num_timesteps
    low = int(round(TIMESTEP_LOW_FRACTION * t_count))
    high = int(round(TIMESTEP_HIGH_FRACTION * t_count))
    return int(rng.integers(low, high + 1))


def add_noise(schedule: DiffusionSchedule, x0: np.ndarray, t: int,
              eps: np.ndarray) -> np.ndarray:
    """Forward-process sample x_t = sqrt(ab)*x0 + sqrt(1-ab)*eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError("x0 and eps shapes differ")
    return schedule.signal_scale(t) * x0 + schedule.noise_scale(t) * eps


def estimate_x0(schedule: DiffusionSchedule, x_t: np.ndarray, t: int,
                eps_hat: np.ndarray) -> np.ndarray:
    """Invert the forward process: x0 = (x_t - sqrt(1-ab)*eps) / sqrt(ab)."""
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if x_t.shape != eps_hat.shape:
        raise ValueError("x_t and eps_hat shapes differ")
    s = schedule.signal_scale(t)
    if s == 0.0:
        raise ValueError("signal scale is zero; x0 is unrecoverable")
    return (x_t - schedule.noise_scale(t) * eps_hat) / s


def _per_image_std(x: np.ndarray) -> np.ndarray:
    """Std over each leading-axis image for stacks, scalar std otherwise."""
    if x.ndim == 4:
        return x.std(axis=(1, 2, 3), keepdims=True)
    return np.asarray(x.std())


def cfg_combine(schedule: DiffusionSchedule, x_t: np.ndarray, t: int,
                eps_cond: np.ndarray, eps_uncond: np.ndarray,
                guidance_scale: float = GUIDANCE_SCALE_DEFAULT,
                rescale_factor: float = RESCALE_FACTOR_DEFAULT) -> np.ndarray:
    """Classifier-free guidance with std rescaling in x0 space.

    The guided prediction eps_u + s*(eps_c - eps_u) inflates the contrast of
    the implied clean image; rescaling shrinks the per-view std of the guided
    x0 back toward the conditional one, blended by rescale_factor, and maps
    the result back to an epsilon. guidance_scale 1 returns eps_cond and 0
    returns eps_uncond, bit for bit; rescale_factor 0 is plain guidance.
    """
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError("eps_cond and eps_uncond shapes differ")
    if guidance_scale == 1.0:
        return eps_cond.copy()
    if guidance_scale == 0.0:
        return eps_uncond.copy()
    eps_cfg = eps_uncond + guidance_scale * (eps_cond - eps_uncond)
    if rescale_factor == 0.0:
        return eps_cfg
    x0_cfg = estimate_x0(schedule, x_t, t, eps_cfg)
    x0_cond = estimate_x0(schedule, x_t, t, eps_cond)
    ratio = _per_image_std(x0_cond) / (_per_image_std(x0_cfg) + _STD_EPS)
    x0_rescaled = x0_cfg * ratio
    x0_final = rescale_factor * x0_rescaled + (1.0 - rescale_factor) * x0_cfg
    s, n = schedule.signal_scale(t), schedule.noise_scale(t)
    return (np.asarray(x_t, dtype=np.float64) - s * x0_final) / n


def is_blank(image: np.ndarray) -> bool:
    return bool(np.all(np.asarray(image) >= 1.0 - _BLANK_EPS))


@dataclass(frozen=True)
class ConditionSet:
    """Per-view conditioning for a five-view denoiser call.

    control_images is (5, H, W): row 0 the sketch at the sketch view, row
    1 + nearest_offset the sketch warped into the nearest orthogonal view,
    the other three rows blank. text_token seeds the model's palette.
    """

    cameras: tuple
    control_images: np.ndarray
    nearest_offset: int
    text_token: Optional[str] = None

    def __post_init__(self):
        if len(self.cameras) != 5:
            raise ValueError("a condition set carries exactly 5 views")
        imgs = np.asarray(self.control_images, dtype=np.float64)
        if imgs.ndim != 3 or imgs.shape[0] != 5:
            raise ValueError("control_images must be (5, H, W)")
        if np.any(imgs < 0.0) or np.any(imgs > 1.0):
            raise ValueError("control images must lie in [0, 1]")
        if not 0 <= self.nearest_offset < 4:
            raise ValueError("nearest_offset indexes the 4 orthogonal views")
        for j in range(4):
            if j != self.nearest_offset and not is_blank(imgs[1 + j]):
                raise ValueError(f"far view {1 + j} must carry a blank control")
        object.__setattr__(self, "control_images", imgs)
        object.__setattr__(self, "cameras", tuple(self.cameras))

    @classmethod
    def assemble(cls, sketch: np.ndarray, sketch_camera: CameraPose,
                 orthogonal_cameras: Sequence[CameraPose],
                 nearest_offset: int, warped_sketch: np.ndarray,
                 text_token: Optional[str] = None) -> "ConditionSet":
        sketch = np.asarray(sketch, dtype=np.float64)
        if len(orthogonal_cameras) != 4:
            raise ValueError("expected 4 orthogonal views")
        imgs = np.ones((5,) + sketch.shape, dtype=np.float64)
        imgs[0] = sketch
        imgs[1 + nearest_offset] = np.asarray(warped_sketch, dtype=np.float64)
        return cls(cameras=(sketch_camera, *orthogonal_cameras),
                   control_images=imgs, nearest_offset=nearest_offset,
                   text_token=text_token)

    @property
    def nearest_index(self) -> int:
        """Index of the warped-control view within the 5-view stack."""
        return 1 + self.nearest_offset

    def as_unconditional(self) -> "ConditionSet":
        """Same views, blank controls and no text: the guidance baseline."""
        return replace(self, control_images=np.ones_like(self.control_images),
                       text_token=None)


class ScoreModel(Protocol):
    """Epsilon-prediction interface every denoiser plugs in through."""

    is_conditional: bool

    def denoise(self, x_t: np.ndarray, t: int,
                conditions: Optional[ConditionSet]) -> np.ndarray: ...


def _check_stack(x_t: np.ndarray) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.ndim != 4 or x_t.shape[0] != 5 or x_t.shape[3] != 3:
        raise ValueError("x_t must be a (5, H, W, 3) view stack")
    return x_t


class OracleScoreModel:
    """Denoiser that knows a hidden field: the predicted epsilon is exactly
    the noise that separates x_t from the hidden field's rendering, so the
    implied clean image is that rendering regardless of t.

    renderer(camera) -> (H, W, 3) must match the training loop's background
    and image size; conditions supply the cameras and are otherwise ignored.
    """

    is_conditional = False

    def __init__(self, schedule: DiffusionSchedule,
                 renderer: Callable[[CameraPose], np.ndarray]):
        self.schedule = schedule
        self.renderer = renderer

    def denoise(self, x_t: np.ndarray, t: int,
                conditions: Optional[ConditionSet]) -> np.ndarray:
        x_t = _check_stack(x_t)
        if conditions is None:
            raise ValueError("oracle model needs conditions for the cameras")
        targets = np.stack([np.asarray(self.renderer(cam), dtype=np.float64)
                            for cam in conditions.cameras])
        if targets.shape != x_t.shape:
            raise ValueError("renderer output size does not match x_t")
        s, n = self.schedule.signal_scale(t), self.schedule.noise_scale(t)
        return (x_t - s * targets) / n


def palette_color(text_token: Optional[str]) -> np.ndarray:
    """Stable token -> RGB mapping; None means neutral gray."""
    if text_token is None:
        return np.full(3, 0.5)
    digest = hashlib.md5(text_token.encode("utf-8")).digest()
    hue = int.from_bytes(digest[:4], "little") / 2.0 ** 32
    return np.array(colorsys.hsv_to_rgb(hue, 0.55, 0.75))


@dataclass(frozen=True)
class SketchModelParams:
    """Pull strengths of the sketch-consistency denoiser, all in [0, 1]:
    how far the implied clean image moves toward each target per call."""

    stroke_pull: float = 0.8
    fill_pull: float = 0.3
    carve_pull: float = 0.5
    coupling: float = 0.3
    stroke_value: float = 0.15
    background_value: float = 1.0


class SketchConsistencyModel:
    """Analytic conditional denoiser: on control-bearing views the implied
    clean image is pulled toward dark strokes, a palette-colored fill inside
    the silhouette, and background outside it; far views are pulled toward
    the mean color of the sketch view so all views converge on one object.
    Blank conditions leave x0 at the identity, making the model its own
    unconditional branch.
    """

    is_conditional = True

    def __init__(self, schedule: DiffusionSchedule,
                 params: SketchModelParams = SketchModelParams()):
        self.schedule = schedule
        self.params = params

    def _pull_view(self, x0: np.ndarray, control: np.ndarray,
                   color: np.ndarray) -> np.ndarray:
        p = self.params
        stroke = control < 0.5
        sil = extract_silhouette(control)
        fill = sil & ~stroke
        out = x0.copy()
        out[fill] += p.fill_pull * (color - x0[fill])
        out[stroke] += p.stroke_pull * (p.stroke_value - x0[stroke])
        out[~sil] += p.carve_pull * (p.background_value - x0[~sil])
        return out

    def denoise(self, x_t: np.ndarray, t: int,
                conditions: Optional[ConditionSet]) -> np.ndarray:
        x_t = _check_stack(x_t)
        x0 = estimate_x0(self.schedule, x_t, t, np.zeros_like(x_t))
        if conditions is not None and not is_blank(conditions.control_images):
            color = palette_color(conditions.text_token)
            x0 = x0.copy()
            guided = set()
            for v in range(5):
                ctrl = conditions.control_images[v]
                if not is_blank(ctrl):
                    x0[v] = self._pull_view(x0[v], ctrl, color)
                    guided.add(v)
            # cross-view anchor is the sketch view's mean color
            anchor = x0[0].mean(axis=(0, 1))
            for v in range(5):
                if v not in guided:
                    x0[v] += self.params.coupling * (anchor - x0[v])
        s, n = self.schedule.signal_scale(t), self.schedule.noise_scale(t)
        return (x_t - s * x0) / n


class ImageScoreModel(Protocol):
    """Single-image epsilon predictor, the 2D counterpart of ScoreModel.
    text_token is the only conditioning channel; None is unconditional."""

    is_conditional: bool

    def denoise_image(self, x_t: np.ndarray, t: int,
                      text_token: Optional[str] = None) -> np.ndarray: ...


class ImageOracleModel:
    """Single-image denoiser that knows a target picture; the 2D analogue
    of OracleScoreModel, used by the interval-score objective."""

    is_conditional = False

    def __init__(self, schedule: DiffusionSchedule, target: np.ndarray):
        self.schedule = schedule
        self.target = np.asarray(target, dtype=np.float64)

    def denoise_image(self, x_t: np.ndarray, t: int,
                      text_token: Optional[str] = None) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.shape != self.target.shape:
            raise ValueError("x_t size does not match the target image")
        s, n = self.schedule.signal_scale(t), self.schedule.noise_scale(t)
        return (x_t - s * self.target) / n


class ImagePaletteModel:
    """Single-image denoiser pulling toward the token's palette color; a
    weak stylization prior for the 2D branch. Without a token the implied
    clean image stays at the identity, giving the unconditional branch."""

    is_conditional = True

    def __init__(self, schedule: DiffusionSchedule, pull: float = 0.3):
        self.schedule = schedule
        self.pull = pull

    def denoise_image(self, x_t: np.ndarray, t: int,
                      text_token: Optional[str] = None) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.float64)
        x0 = estimate_x0(self.schedule, x_t, t, np.zeros_like(x_t))
        if text_token is not None:
            x0 = x0 + self.pull * (palette_color(text_token) - x0)
        s, n = self.schedule.signal_scale(t), self.schedule.noise_scale(t)
        return (x_t - s * x0) / n


def mv_ctrl_loss(model: ScoreModel, schedule: DiffusionSchedule,
                 x0: np.ndarray, t: int, eps: np.ndarray,
                 conditions: ConditionSet) -> float:
    """Mean squared noise-prediction error on a clean view stack: the
    quantity a trainable multi-view denoiser would minimize. Analytical
    models are not trained; this is their diagnostic."""
    x_t = add_noise(schedule, x0, t, eps)
    eps_hat = model.denoise(x_t, t, conditions)
    return float(np.mean((np.asarray(eps) - eps_hat) ** 2))


INFLATION_FRACTION = 0.25


class DepthProvider(Protocol):
    """Source of per-pixel depth for warping a sketch between views."""

    def depth_for(self, sketch: np.ndarray,
                  camera: CameraPose) -> DepthMap: ...


class UserDepthProvider:
    """Returns a fixed user-supplied depth map."""

    def __init__(self, depth: DepthMap):
        self.depth = depth

    def depth_for(self, sketch: np.ndarray, camera: CameraPose) -> DepthMap:
        if self.depth.values.shape != np.asarray(sketch).shape:
            raise ValueError("user depth size does not match the sketch")
        return self.depth

class InflationDepthProvider:
    """Builds depth by inflating the sketch silhouette: every silhouette
    pixel sits at the camera's orbit radius minus a bulge proportional to
    its distance-to-boundary, peaking at inflation_fraction * radius.
    Pixels outside the silhouette are invalid.
    """

    def __init__(self, inflation_fraction: float = INFLATION_FRACTION):
        if inflation_fraction < 0.0:
            raise ValueError("inflation_fraction must be >= 0")
        self.inflation_fraction = inflation_fraction

    def depth_for(self, sketch: np.ndarray, camera: CameraPose) -> DepthMap:
        sil = extract_silhouette(np.asarray(sketch, dtype=np.float64))
        dist = ndimage.distance_transform_edt(sil)
        peak = float(dist.max())
        values = np.full(sil.shape, camera.radius, dtype=np.float64)
        if peak > 0.0:
            kappa = self.inflation_fraction * camera.radius / peak
            values -= kappa * dist
        return DepthMap(values=values, valid=sil)
