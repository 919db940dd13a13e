"""Optimization objectives for field distillation, and their schedules.

Every loss returns (scalar, gradient with respect to its direct argument);
the three staged objectives combine term gradients through one adjoint
render per view and report each active term alongside the weighted total.

Gradient conventions, mirroring standard score distillation:
  * sds: x0_hat is treated as constant, so grad = 2*(rendered - x0_hat)/N.
  * ism: both noise predictions are constants except for x_t's direct
    dependence on the rendered image, so grad = (2/N)*sqrt(ab_t)*(e_t - e_s).
All reductions are means over elements, keeping weights independent of
image resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .cameras import generate_rays
from .diffusion import (
    ConditionSet,
    DiffusionSchedule,
    GuidanceConfig,
    ImageScoreModel,
    ScoreModel,
    add_noise,
    cfg_combine,
    estimate_x0,
    sample_timestep,
)
from .volume import (
    FieldGradient,
    RenderCache,
    RenderOutput,
    render_backward,
    softplus_grad,
)

ISM_INVERSION_STEPS = 3
ISM_INTERVAL_FRACTION = 0.2

SILHOUETTE_WEIGHT = 1e2
ORIENTATION_START = 10.0
ORIENTATION_END = 1000.0

PHASE2_FRACTION = 5.0 / 6.0
P_2D_DEFAULT = 0.9

COARSE_RGB_WEIGHT = 1e5
FINE_RGB_LOW = 1e5
FINE_RGB_HIGH = 1e6
FINE_RGB_BOUNDARY_STEP = 10_000


# --------------------------------------------------------------- raw losses

def sds_loss(rendered: np.ndarray, score_model: ScoreModel,
             conditions: Optional[ConditionSet], t: int, eps: np.ndarray,
             schedule: DiffusionSchedule,
             guidance: Optional[GuidanceConfig] = None):
    """Score-distillation residual against the model's implied clean stack.

    Noises the rendered views to x_t, asks the model for its noise
    prediction (classifier-free guided when configured and the model is
    conditional), recovers x0_hat, and scores mean squared distance from
    the render to that detached target.
    """
    rendered = np.asarray(rendered, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if rendered.shape != eps.shape:
        raise ValueError("rendered and eps shapes differ")
    x_t = add_noise(schedule, rendered, t, eps)
    if guidance is not None and score_model.is_conditional \
            and conditions is not None:
        eps_cond = score_model.denoise(x_t, t, conditions)
        eps_uncond = score_model.denoise(x_t, t, conditions.as_unconditional())
        eps_hat = cfg_combine(schedule, x_t, t, eps_cond, eps_uncond,
                              guidance.guidance_scale, guidance.rescale_factor)
    else:
        eps_hat = score_model.denoise(x_t, t, conditions)
    x0_hat = estimate_x0(schedule, x_t, t, eps_hat)
    diff = rendered - x0_hat
    loss = float(np.mean(diff ** 2))
    grad = 2.0 * diff / diff.size
    return loss, grad


def ism_loss(rendered: np.ndarray, score_model_2d: ImageScoreModel,
             schedule: DiffusionSchedule, t: int, s_t: int,
             text_token: Optional[str] = None,
             guidance: Optional[GuidanceConfig] = None,
             inversion_steps: int = ISM_INVERSION_STEPS):
    """Interval residual between noise predictions at two timesteps.

    The rendered image is inverted to x_s by a fixed number of
    deterministic (noise-free) inversion steps, re-noised to x_t with the
    s-level prediction, and scored by mean squared difference of the two
    endpoint predictions. Guidance, when configured and the model is
    conditional, applies to the t endpoint only.
    """
    rendered = np.asarray(rendered, dtype=np.float64)
    t, s_t = int(t), int(s_t)
    if not 0 <= s_t < t < schedule.num_timesteps:
        raise ValueError("need 0 <= s_t < t within the schedule")
    taus = np.unique(np.round(np.linspace(0, s_t, inversion_steps + 1))
                     .astype(int))
    x_cur = rendered
    for i in range(taus.size - 1):
        eps_hat = score_model_2d.denoise_image(x_cur, int(taus[i]), text_token)
        x0_hat = estimate_x0(schedule, x_cur, int(taus[i]), eps_hat)
        x_cur = add_noise(schedule, x0_hat, int(taus[i + 1]), eps_hat)
    eps_s = score_model_2d.denoise_image(x_cur, s_t, text_token)
    x_t = add_noise(schedule, rendered, t, eps_s)
    if guidance is not None and score_model_2d.is_conditional \
            and text_token is not None:
        eps_c = score_model_2d.denoise_image(x_t, t, text_token)
        eps_u = score_model_2d.denoise_image(x_t, t, None)
        eps_t = cfg_combine(schedule, x_t, t, eps_c, eps_u,
                            guidance.guidance_scale, guidance.rescale_factor)
    else:
        eps_t = score_model_2d.denoise_image(x_t, t, text_token)
    resid = eps_t - eps_s
    loss = float(np.mean(resid ** 2))
    grad = (2.0 / resid.size) * schedule.signal_scale(t) * resid
    return loss, grad


def interval_start(schedule: DiffusionSchedule, t: int,
                   fraction: float = ISM_INTERVAL_FRACTION) -> int:
    """Lower interval endpoint s_t = t - fraction*T, clamped at 0."""
    return max(0, int(t) - int(round(fraction * schedule.num_timesteps)))


def silhouette_loss(target_mask: np.ndarray, alpha: np.ndarray):
    """Mean squared distance between rendered opacity and the target mask."""
    target_mask = np.asarray(target_mask, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if target_mask.shape != alpha.shape:
        raise ValueError("mask and alpha resolutions differ")
    diff = alpha - target_mask
    loss = float(np.mean(diff ** 2))
    return loss, 2.0 * diff / diff.size


def rgb_preserve_loss(x: np.ndarray, x_ori: np.ndarray, mask_2d: np.ndarray):
    """Mean squared drift from the pre-edit image outside the edit mask.

    The gradient is exactly zero at masked (editable) pixels.
    """
    x = np.asarray(x, dtype=np.float64)
    x_ori = np.asarray(x_ori, dtype=np.float64)
    mask = np.asarray(mask_2d)
    if x.shape != x_ori.shape or mask.shape != x.shape[:2]:
        raise ValueError("image and mask shapes are inconsistent")
    keep = mask == 0
    diff = np.zeros_like(x)
    diff[keep] = x[keep] - x_ori[keep]
    loss = float(np.mean(diff ** 2))
    return loss, 2.0 * diff / diff.size


def orientation_loss(cache: RenderCache):
    """Penalty for density-gradient normals facing away from the camera.

    Marches the cache's rays again and accumulates w_i * max(0, n_i . d)^2
    over all ray samples (normalized by their count), with the exact
    gradient through both the visibility weights and the normals. The cache
    must come from a shaded render, which fixes the normal step size.
    """
    cache.check_fresh()
    if cache.config.shading is None:
        raise ValueError(
            "orientation loss needs a cache rendered with shading enabled")
    fld = cache.field
    rays = generate_rays(cache.camera)
    origins = np.ascontiguousarray(rays.origins.reshape(-1, 3))
    dirs = np.ascontiguousarray(rays.directions.reshape(-1, 3))
    grad_act = np.zeros_like(fld.raw_density)
    loss = _kernels.orientation_kernel(
        fld.activated_density(), origins, dirs,
        fld.bounds_min, fld.bounds_max, cache.config.n_steps,
        cache.config.transmittance_floor,
        cache.config.shading.normal_step_cells,
        grad_act, True)
    grad = FieldGradient(
        d_raw_density=grad_act * softplus_grad(fld.raw_density),
        d_raw_color=np.zeros_like(fld.raw_color))
    return float(loss), grad


# ---------------------------------------------------------------- schedule

def _ramp(step: int, start_step: float, end_step: float,
          v0: float, v1: float) -> float:
    if step <= start_step:
        return v0
    if step >= end_step:
        return v1
    return v0 + (v1 - v0) * (step - start_step) / (end_step - start_step)


@dataclass(frozen=True)
class GenerationWeights:
    sds_3d: float
    ism_2d: float
    silhouette: float
    orientation: float
    branch: str  # "3d" or "2d"


@dataclass(frozen=True)
class CoarseWeights:
    sds_3d: float
    rgb_preserve: float
    silhouette: float
    orientation: float


@dataclass(frozen=True)
class FineWeights:
    sds_3d: float
    ism_2d: float
    rgb_preserve: float
    silhouette: float
    orientation: float
    branch: str


@dataclass(frozen=True)
class WeightSchedule:
    """Per-step term weights for the three optimization stages.

    Ramps and phase boundaries are fractions of total_steps except the
    fine-stage rgb weight boundary, which is an absolute step count.
    """

    total_steps: int
    silhouette_weight: float = SILHOUETTE_WEIGHT
    orientation_start: float = ORIENTATION_START
    orientation_end: float = ORIENTATION_END
    orientation_ramp: tuple = (1.0 / 6.0, 5.0 / 12.0)
    p_2d: float = P_2D_DEFAULT
    phase2_fraction: float = PHASE2_FRACTION
    resolution_low: int = 64
    resolution_high: int = 256
    resolution_switch_fraction: float = 5.0 / 12.0
    coarse_rgb_weight: float = COARSE_RGB_WEIGHT
    coarse_orientation_ramp: tuple = (0.2, 0.6)
    fine_rgb_low: float = FINE_RGB_LOW
    fine_rgb_high: float = FINE_RGB_HIGH
    fine_rgb_boundary_step: int = FINE_RGB_BOUNDARY_STEP

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")
        if not 0.0 <= self.p_2d <= 1.0:
            raise ValueError("p_2d must lie in [0, 1]")
        for name in ("silhouette_weight", "orientation_start",
                     "orientation_end", "coarse_rgb_weight",
                     "fine_rgb_low", "fine_rgb_high"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("orientation_ramp", "coarse_orientation_ramp"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"{name} fractions must be ordered in [0,1]")
        if not 0.0 <= self.phase2_fraction <= 1.0:
            raise ValueError("phase2_fraction must lie in [0, 1]")
        if not 0.0 <= self.resolution_switch_fraction <= 1.0:
            raise ValueError("resolution_switch_fraction must lie in [0, 1]")

    def _check_step(self, step: int) -> int:
        step = int(step)
        if not 0 <= step < self.total_steps:
            raise ValueError(f"step {step} outside [0, {self.total_steps})")
        return step

    def orientation_weight(self, step: int) -> float:
        lo, hi = self.orientation_ramp
        return _ramp(self._check_step(step), lo * self.total_steps,
                     hi * self.total_steps,
                     self.orientation_start, self.orientation_end)

    def coarse_orientation_weight(self, step: int) -> float:
        lo, hi = self.coarse_orientation_ramp
        return _ramp(self._check_step(step), lo * self.total_steps,
                     hi * self.total_steps,
                     self.orientation_start, self.orientation_end)

    def resolution(self, step: int) -> int:
        switch = self.resolution_switch_fraction * self.total_steps
        return self.resolution_low if self._check_step(step) < switch \
            else self.resolution_high

    def in_phase2(self, step: int) -> bool:
        return self._check_step(step) >= self.phase2_fraction * self.total_steps

    def generation_weights(self, step: int, rng: np.random.Generator,
                           has_2d: bool = True) -> GenerationWeights:
        """Weights for one generation step; in phase 2 with a 2D model
        available this consumes one rng draw to pick the branch."""
        branch = "3d"
        if self.in_phase2(step) and has_2d:
            if float(rng.random()) < self.p_2d:
                branch = "2d"
        return GenerationWeights(
            sds_3d=1.0 if branch == "3d" else 0.0,
            ism_2d=1.0 if branch == "2d" else 0.0,
            silhouette=self.silhouette_weight,
            orientation=self.orientation_weight(step),
            branch=branch)

    def coarse_weights(self, step: int) -> CoarseWeights:
        return CoarseWeights(
            sds_3d=1.0,
            rgb_preserve=self.coarse_rgb_weight,
            silhouette=self.silhouette_weight,
            orientation=self.coarse_orientation_weight(step))

    def fine_weights(self, step: int, rng: np.random.Generator,
                     has_2d: bool = True) -> FineWeights:
        gen = self.generation_weights(step, rng, has_2d)
        rgb = self.fine_rgb_low if step < self.fine_rgb_boundary_step \
            else self.fine_rgb_high
        return FineWeights(
            sds_3d=gen.sds_3d, ism_2d=gen.ism_2d, rgb_preserve=rgb,
            silhouette=gen.silhouette, orientation=gen.orientation,
            branch=gen.branch)


# --------------------------------------------------------------- objectives

@dataclass
class LossReport:
    """The scalar terms of one optimization step plus the field gradient
    of their weighted sum. terms and weights share keys; total is the
    weighted sum of the active terms."""

    step: int
    terms: dict
    weights: dict
    total: float
    gradient: FieldGradient
    branch: Optional[str] = None


@dataclass
class StageInputs:
    """Everything the staged objectives need besides the fresh renders.

    x_ori and masks_2d (pre-edit renders and per-view edit masks, aligned
    with the render list) are only consulted by the editing stages;
    silhouette_target may be None when no sketch-view mask applies (then
    the silhouette term is skipped).
    """

    conditions: ConditionSet
    score_model: ScoreModel
    schedule: DiffusionSchedule
    weights: WeightSchedule
    rng: np.random.Generator
    silhouette_target: Optional[np.ndarray] = None
    score_model_2d: Optional[ImageScoreModel] = None
    guidance: Optional[GuidanceConfig] = None
    x_ori: Optional[Sequence[np.ndarray]] = None
    masks_2d: Optional[Sequence[np.ndarray]] = None


@dataclass
class _Accumulator:
    renders: Sequence[RenderOutput]
    inputs: StageInputs
    terms: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grad_rgb = [np.zeros_like(r.rgb) for r in self.renders]
        self.grad_alpha = [np.zeros_like(r.alpha) for r in self.renders]
        self.extra = None  # orientation gradient, added post-render

    def add_sds(self, weight: float):
        if weight <= 0.0:
            return
        ins = self.inputs
        stack = np.stack([r.rgb for r in self.renders])
        t = sample_timestep(ins.schedule, ins.rng)
        eps = ins.rng.standard_normal(stack.shape)
        loss, g = sds_loss(stack, ins.score_model, ins.conditions, t, eps,
                           ins.schedule, ins.guidance)
        self._record("sds_3d", weight, loss)
        for v in range(len(self.renders)):
            self.grad_rgb[v] += weight * g[v]

    def add_ism(self, weight: float):
        if weight <= 0.0:
            return
        ins = self.inputs
        if ins.score_model_2d is None:
            raise ValueError("interval term is active but no 2D score model "
                             "was provided")
        t = sample_timestep(ins.schedule, ins.rng)
        s_t = interval_start(ins.schedule, t)
        n_views = len(self.renders)
        total = 0.0
        for v, r in enumerate(self.renders):
            loss_v, g_v = ism_loss(r.rgb, ins.score_model_2d, ins.schedule,
                                   t, s_t, ins.conditions.text_token,
                                   ins.guidance)
            total += loss_v / n_views
            self.grad_rgb[v] += (weight / n_views) * g_v
        self._record("ism_2d", weight, total)

    def add_silhouette(self, weight: float):
        ins = self.inputs
        if weight <= 0.0 or ins.silhouette_target is None:
            return
        loss, g = silhouette_loss(ins.silhouette_target, self.renders[0].alpha)
        self._record("silhouette", weight, loss)
        self.grad_alpha[0] += weight * g

    def add_rgb_preserve(self, weight: float):
        if weight <= 0.0:
            return
        ins = self.inputs
        if ins.x_ori is None or ins.masks_2d is None:
            raise ValueError("rgb preservation is active but pre-edit "
                             "renders or edit masks are missing")
        n_views = len(self.renders)
        if len(ins.x_ori) != n_views or len(ins.masks_2d) != n_views:
            raise ValueError("x_ori and masks_2d must align with the renders")
        total = 0.0
        for v, r in enumerate(self.renders):
            loss_v, g_v = rgb_preserve_loss(r.rgb, ins.x_ori[v],
                                            ins.masks_2d[v])
            total += loss_v / n_views
            self.grad_rgb[v] += (weight / n_views) * g_v
        self._record("rgb_preserve", weight, total)

    def add_orientation(self, weight: float):
        if weight <= 0.0:
            return
        n_views = len(self.renders)
        total = 0.0
        for r in self.renders:
            loss_v, g_v = orientation_loss(r.cache)
            total += loss_v / n_views
            if self.extra is None:
                self.extra = g_v.scale(weight / n_views)
            else:
                self.extra.add(g_v, weight / n_views)
        self._record("orientation", weight, total)

    def _record(self, name: str, weight: float, value: float):
        self.terms[name] = value
        self.weights[name] = weight

    def report(self, step: int, branch: Optional[str] = None) -> LossReport:
        grad = None
        for v, r in enumerate(self.renders):
            if np.any(self.grad_rgb[v]) or np.any(self.grad_alpha[v]):
                gv = render_backward(r.cache, grad_rgb=self.grad_rgb[v],
                                     grad_alpha=self.grad_alpha[v])
                grad = gv if grad is None else grad.add(gv)
        if grad is None:
            grad = FieldGradient.zeros_like(self.renders[0].cache.field)
        if self.extra is not None:
            grad.add(self.extra)
        total = sum(self.weights[k] * self.terms[k] for k in self.terms)
        return LossReport(step=step, terms=dict(self.terms),
                          weights=dict(self.weights), total=float(total),
                          gradient=grad, branch=branch)


def generation_objective(step: int, renders: Sequence[RenderOutput],
                         inputs: StageInputs) -> LossReport:
    """Phase-scheduled generation total: multi-view score distillation or
    2D interval matching (phase 2, probabilistic branch), plus silhouette
    and orientation regularizers."""
    w = inputs.weights.generation_weights(
        step, inputs.rng, has_2d=inputs.score_model_2d is not None)
    acc = _Accumulator(renders, inputs)
    acc.add_sds(w.sds_3d)
    acc.add_ism(w.ism_2d)
    acc.add_silhouette(w.silhouette)
    acc.add_orientation(w.orientation)
    return acc.report(step, branch=w.branch)


def coarse_edit_objective(step: int, renders: Sequence[RenderOutput],
                          inputs: StageInputs) -> LossReport:
    """Coarse editing total: score distillation constrained by pre-edit
    renders outside the lifted mask; never uses the 2D interval term."""
    w = inputs.weights.coarse_weights(step)
    acc = _Accumulator(renders, inputs)
    acc.add_sds(w.sds_3d)
    acc.add_rgb_preserve(w.rgb_preserve)
    acc.add_silhouette(w.silhouette)
    acc.add_orientation(w.orientation)
    return acc.report(step)


def fine_edit_objective(step: int, renders: Sequence[RenderOutput],
                        inputs: StageInputs) -> LossReport:
    """Fine editing total: the generation schedule plus a preservation
    term whose weight steps up at the configured absolute boundary."""
    w = inputs.weights.fine_weights(
        step, inputs.rng, has_2d=inputs.score_model_2d is not None)
    acc = _Accumulator(renders, inputs)
    acc.add_sds(w.sds_3d)
    acc.add_ism(w.ism_2d)
    acc.add_rgb_preserve(w.rgb_preserve)
    acc.add_silhouette(w.silhouette)
    acc.add_orientation(w.orientation)
    return acc.report(step, branch=w.branch)
