"""End-to-end runs: sketch-conditioned generation, the two-stage editing
entry point, turntable rendering, and the JSON run configurations that the
command line and the job service execute.

Determinism contract: a resolved configuration (including its seed) fully
determines every artifact byte. All randomness flows through one
``numpy.random.Generator`` seeded from the config, consumed in a fixed
per-step order: camera azimuth, camera elevation, (if shading is sampled)
light direction and ambient, background gray, then the objective's own
draws. Artifact files are written atomically (temp file, then rename).
"""
from __future__ import annotations

import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from skimage.transform import resize as _sk_resize

from . import __version__
from .cameras import (CameraPose, make_camera, nearest_view,
                      sample_orthogonal_views, warp_sketch)
from .diffusion import (ConditionSet, DiffusionSchedule, GuidanceConfig,
                        ImageOracleModel, ImagePaletteModel,
                        InflationDepthProvider, OracleScoreModel,
                        SketchConsistencyModel, SketchModelParams,
                        UserDepthProvider)
from .editing import (EditRequest, coarse_edit, edit_shading, fine_edit,
                      load_overrides)
from .errors import ConfigError, NothingToEditError
from .imgio import (append_loss_rows, load_depth_png, load_render_png,
                    load_sketch_png, save_render_png)
from .losses import LossReport, StageInputs, WeightSchedule, \
    generation_objective
from .meshes import save_obj
from .optim import MomentumSGD
from .sketchops import extract_silhouette, extract_sketch  # re-exported
from .volume import (RenderConfig, ShadingConfig, VoxelRadianceField,
                     inverse_softplus, load_field, render, save_field)

__all__ = [
    "GenerationConfig", "EditConfig", "RunArtifacts",
    "load_generation_config", "load_edit_config",
    "generate", "edit", "turntable", "blob_field",
    "extract_silhouette", "extract_sketch",
]

DESK_PRESET = dict(total_steps=2000, field_resolution=64,
                   weights={"resolution_low": 64, "resolution_high": 64})
FULL_PRESET = dict(total_steps=12000, field_resolution=128, weights={})

_PROGRESS = Optional[Callable[[int, LossReport], bool]]


# ------------------------------------------------------------ configuration

def _require(data: Mapping, key: str, kind, label: str):
    if key not in data:
        raise ConfigError(label, "this key is required")
    return _typed(data, key, kind, label)


_KIND_NAMES = {int: "an integer", float: "a number", str: "a string"}


def _typed(data: Mapping, key: str, kind, label: str):
    value = data[key]
    if kind is float and isinstance(value, int) \
            and not isinstance(value, bool):
        value = float(value)
    if isinstance(value, bool) or not isinstance(value, kind):
        raise ConfigError(label, f"must be {_KIND_NAMES[kind]}")
    return value


def _check_keys(data: Mapping, allowed: set, context: str = ""):
    prefix = f"{context}." if context else ""
    for key in sorted(set(data) - allowed):
        raise ConfigError(f"{prefix}{key}", "unknown key")


def _resolve_path(value: str, base_dir: Optional[Path]) -> str:
    p = Path(value)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    return str(p)


_MODEL_NAMES = ("sketch_consistency", "oracle")
_MODEL_2D_NAMES = ("palette", "oracle")
_DEPTH_NAMES = ("inflation", "user")
_PARAM_FIELDS = {f.name for f in dataclasses.fields(SketchModelParams)}
_WEIGHT_FIELDS = {f.name for f in dataclasses.fields(WeightSchedule)} \
    - {"total_steps"}


def _check_model(model: Mapping, base_dir: Optional[Path]) -> dict:
    name = _require(model, "name", str, "model.name")
    if name not in _MODEL_NAMES:
        raise ConfigError("model.name",
                          f"must be one of {', '.join(_MODEL_NAMES)}")
    out = dict(model)
    if name == "oracle":
        _check_keys(model, {"name", "field"}, "model")
        out["field"] = _resolve_path(
            _require(model, "field", str, "model.field"), base_dir)
    else:
        _check_keys(model, {"name"} | _PARAM_FIELDS, "model")
        for key in _PARAM_FIELDS & set(model):
            _typed(model, key, float, f"model.{key}")
    return out


def _check_model_2d(model: Optional[Mapping],
                    base_dir: Optional[Path]) -> Optional[dict]:
    if model is None:
        return None
    name = _require(model, "name", str, "model_2d.name")
    if name not in _MODEL_2D_NAMES:
        raise ConfigError("model_2d.name",
                          f"must be one of {', '.join(_MODEL_2D_NAMES)}")
    out = dict(model)
    if name == "oracle":
        _check_keys(model, {"name", "image"}, "model_2d")
        out["image"] = _resolve_path(
            _require(model, "image", str, "model_2d.image"), base_dir)
    else:
        _check_keys(model, {"name", "pull"}, "model_2d")
        if "pull" in model:
            _typed(model, "pull", float, "model_2d.pull")
    return out


def _check_depth(depth: Mapping, base_dir: Optional[Path]) -> dict:
    provider = _require(depth, "provider", str, "depth.provider")
    if provider not in _DEPTH_NAMES:
        raise ConfigError("depth.provider",
                          f"must be one of {', '.join(_DEPTH_NAMES)}")
    out = dict(depth)
    if provider == "user":
        _check_keys(depth, {"provider", "path"}, "depth")
        out["path"] = _resolve_path(
            _require(depth, "path", str, "depth.path"), base_dir)
    else:
        _check_keys(depth, {"provider", "inflation_fraction"}, "depth")
        if "inflation_fraction" in depth:
            _typed(depth, "inflation_fraction", float,
                   "depth.inflation_fraction")
    return out


def _check_weights(weights) -> dict:
    if not isinstance(weights, Mapping):
        raise ConfigError("weights", "must be an object")
    for key in sorted(set(weights) - _WEIGHT_FIELDS):
        raise ConfigError(f"weights.{key}", "unknown key")
    return dict(weights)


def _as_block(value, label: str) -> Mapping:
    if not isinstance(value, Mapping):
        raise ConfigError(label, "must be an object")
    return value


@dataclass(frozen=True)
class GenerationConfig:
    """A resolved generation run: the sketch and its camera, the score
    models, the schedules, and every constant the loop consumes."""

    sketch: str
    azimuth_deg: float = 0.0
    elevation_deg: float = 15.0
    radius: float = 2.0
    fov_y_deg: float = 50.0
    text_token: Optional[str] = None
    preset: str = "desk"
    total_steps: int = 2000
    field_resolution: int = 64
    render_steps: int = 96
    seed: int = 0
    lr: float = 0.05
    momentum: float = 0.9
    grad_clip: float = 1.0
    model: Mapping = field(default_factory=lambda: {
        "name": "sketch_consistency"})
    model_2d: Optional[Mapping] = field(default_factory=lambda: {
        "name": "palette"})
    depth: Mapping = field(default_factory=lambda: {"provider": "inflation"})
    weights: Mapping = field(default_factory=dict)
    diffusion: Mapping = field(default_factory=dict)
    guidance: Optional[Mapping] = None
    shading: str = "sampled"
    background: Optional[float] = None
    checkpoint_every: int = 500
    out_dir: Optional[str] = None

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["model"] = dict(self.model)
        out["model_2d"] = None if self.model_2d is None \
            else dict(self.model_2d)
        out["depth"] = dict(self.depth)
        out["weights"] = dict(self.weights)
        out["diffusion"] = dict(self.diffusion)
        out["guidance"] = None if self.guidance is None \
            else dict(self.guidance)
        return out

    def weight_schedule(self) -> WeightSchedule:
        return WeightSchedule(total_steps=self.total_steps, **self.weights)

    def diffusion_schedule(self) -> DiffusionSchedule:
        return DiffusionSchedule.linear_beta(**self.diffusion)


_GEN_KEYS = {f.name for f in dataclasses.fields(GenerationConfig)}


def load_generation_config(source) -> GenerationConfig:
    """Build a GenerationConfig from a JSON file path or a mapping.

    Unknown or mistyped keys raise ConfigError naming the key. Relative
    paths inside a file-loaded config resolve against the file's directory.
    """
    data, base_dir = _load_json_source(source, "generation config")
    _check_keys(data, _GEN_KEYS)
    kw = dict(data)
    kw["sketch"] = _resolve_path(
        _require(data, "sketch", str, "sketch"), base_dir)

    preset = _typed(data, "preset", str, "preset") if "preset" in data \
        else "desk"
    if preset not in ("desk", "full"):
        raise ConfigError("preset", "must be one of desk, full")
    chosen = DESK_PRESET if preset == "desk" else FULL_PRESET
    kw.setdefault("total_steps", chosen["total_steps"])
    kw.setdefault("field_resolution", chosen["field_resolution"])
    kw["weights"] = {**chosen["weights"],
                     **_check_weights(data.get("weights", {}))}

    for key, kind in (("azimuth_deg", float), ("elevation_deg", float),
                      ("radius", float), ("fov_y_deg", float),
                      ("total_steps", int), ("field_resolution", int),
                      ("render_steps", int), ("seed", int), ("lr", float),
                      ("momentum", float), ("grad_clip", float),
                      ("shading", str), ("checkpoint_every", int),
                      ("out_dir", str), ("text_token", str),
                      ("background", float)):
        if key in kw and kw[key] is not None:
            kw[key] = _typed(kw, key, kind, key)
    if kw.get("shading", "sampled") not in ("sampled", "none"):
        raise ConfigError("shading", "must be one of sampled, none")
    kw["model"] = _check_model(
        _as_block(data.get("model", {"name": "sketch_consistency"}),
                  "model"), base_dir)
    model_2d = data.get("model_2d", {"name": "palette"})
    kw["model_2d"] = _check_model_2d(
        None if model_2d is None else _as_block(model_2d, "model_2d"),
        base_dir)
    kw["depth"] = _check_depth(
        _as_block(data.get("depth", {"provider": "inflation"}), "depth"),
        base_dir)
    kw["diffusion"] = dict(_as_block(data.get("diffusion", {}), "diffusion"))
    if data.get("guidance") is not None:
        kw["guidance"] = dict(_as_block(data["guidance"], "guidance"))
    if "out_dir" in kw and kw["out_dir"] is not None:
        kw["out_dir"] = _resolve_path(kw["out_dir"], base_dir)

    cfg = GenerationConfig(**kw)
    try:
        ws = cfg.weight_schedule()
        cfg.diffusion_schedule()
        _guidance_config(cfg.guidance)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.shading == "none" and _orientation_active(ws):
        raise ConfigError(
            "shading",
            "the orientation term needs shaded renders: set shading to "
            "sampled, or zero weights.orientation_start and "
            "weights.orientation_end")
    return cfg


def _load_json_source(source, label: str):
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"{label} file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{label} is not valid JSON: {exc}") from exc
        base_dir = path.resolve().parent
    elif isinstance(source, Mapping):
        data, base_dir = dict(source), None
    else:
        raise ConfigError(f"{label} must be a JSON file path or a mapping")
    if not isinstance(data, dict):
        raise ConfigError(f"{label} must be a JSON object")
    return data, base_dir


def _orientation_active(ws: WeightSchedule) -> bool:
    return ws.orientation_start > 0.0 or ws.orientation_end > 0.0


def _guidance_config(data: Optional[Mapping]) -> Optional[GuidanceConfig]:
    if data is None:
        return None
    allowed = {f.name for f in dataclasses.fields(GuidanceConfig)}
    _check_keys(data, allowed, "guidance")
    return GuidanceConfig(**data)


# ------------------------------------------------------------ run artifacts

@dataclass(frozen=True)
class RunArtifacts:
    """Everything a run leaves on disk. The manifest echoes the resolved
    configuration, seed, and library versions, which is sufficient to
    reproduce every other artifact bit for bit."""

    out_dir: Path
    field_path: Path
    manifest_path: Path
    loss_csv_path: Path
    checkpoint_paths: tuple = ()
    extra_paths: Mapping = field(default_factory=dict)

    def load_field(self) -> VoxelRadianceField:
        return load_field(self.field_path)


def _atomic(path: Path, write: Callable[[Path], None]) -> Path:
    tmp = path.with_name(path.name + ".tmp")
    write(tmp)
    os.replace(tmp, path)
    return path


def _versions() -> dict:
    import numba
    import PIL
    import scipy
    import skimage
    return {
        "python": sys.version.split()[0],
        "sketchfield": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "scikit-image": skimage.__version__,
        "pillow": PIL.__version__,
    }


def _write_manifest(path: Path, payload: dict) -> Path:
    payload = {**payload, "versions": _versions()}
    return _atomic(path, lambda tmp: tmp.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"))


# ------------------------------------------------------------- field priors

def blob_field(resolution: int, *, peak_density: float = 5.0,
               sigma_fraction: float = 0.2) -> VoxelRadianceField:
    """Warm-start field: activated density is a centered Gaussian blob
    (peak at the center, near zero at the bounds), color mid-gray."""
    fld = VoxelRadianceField.empty(resolution)
    centers = [bmin + (np.arange(n) + 0.5) * (bmax - bmin) / n
               for n, bmin, bmax in zip(fld.resolution, fld.bounds_min,
                                        fld.bounds_max)]
    X, Y, Z = np.meshgrid(*centers, indexing="ij")
    span = float(min(b - a for a, b in zip(fld.bounds_min, fld.bounds_max)))
    r2 = X ** 2 + Y ** 2 + Z ** 2
    sigma = sigma_fraction * span
    density = peak_density * np.exp(-0.5 * r2 / sigma ** 2)
    fld.raw_density[...] = np.maximum(inverse_softplus(density),
                                      fld.raw_density)
    fld.version += 1
    return fld


# ---------------------------------------------------------------- generate

def _resize_unit(image: np.ndarray, size: int) -> np.ndarray:
    if image.shape == (size, size):
        return image
    out = _sk_resize(image, (size, size), order=1, mode="edge",
                     anti_aliasing=image.shape[0] > size,
                     preserve_range=True)
    return np.clip(out, 0.0, 1.0)


def _sample_light(rng: np.random.Generator, camera: CameraPose,
                  shell_fraction: float = 0.5) -> ShadingConfig:
    """Point light uniform on a shell around the camera eye, soft ambient."""
    direction = rng.standard_normal(3)
    norm = float(np.linalg.norm(direction))
    if norm < 1e-12:
        direction, norm = np.array([0.0, 0.0, 1.0]), 1.0
    light = camera.eye + shell_fraction * camera.radius * direction / norm
    ambient = float(rng.uniform(0.6, 1.0))
    return ShadingConfig(light_position=tuple(light), ambient=ambient)


class _SharedState:
    """Per-step render settings shared between the training renders and an
    oracle model's hidden-field renderer, so their images stay comparable."""

    def __init__(self, render_steps: int):
        self.render_steps = render_steps
        self.background = 0.5
        self.shading: Optional[ShadingConfig] = None

    def config(self) -> RenderConfig:
        return RenderConfig(n_steps=self.render_steps, shading=self.shading)


def _build_model(cfg: GenerationConfig, schedule: DiffusionSchedule,
                 state: _SharedState):
    model = dict(cfg.model)
    name = model.pop("name")
    if name == "oracle":
        hidden = load_field(model["field"])

        def renderer(camera: CameraPose) -> np.ndarray:
            return render(hidden, camera, state.config(),
                          background=state.background).rgb

        return OracleScoreModel(schedule, renderer)
    params = SketchModelParams(**model)
    return SketchConsistencyModel(schedule, params)


def _build_model_2d(cfg: GenerationConfig, schedule: DiffusionSchedule):
    if cfg.model_2d is None:
        return None
    model = dict(cfg.model_2d)
    name = model.pop("name")
    if name == "oracle":
        return ImageOracleModel(schedule, load_render_png(model["image"]))
    return ImagePaletteModel(schedule, **model)


def _build_depth_provider(cfg: GenerationConfig):
    depth = dict(cfg.depth)
    provider = depth.pop("provider")
    if provider == "user":
        return UserDepthProvider(load_depth_png(depth["path"]))
    return InflationDepthProvider(**depth)


def _nan_dump(out_dir: Path, step: int, report: LossReport,
              seed: int) -> Path:
    payload = {
        "step": step, "seed": seed, "total": report.total,
        "terms": {k: float(v) for k, v in report.terms.items()},
        "weights": {k: float(v) for k, v in report.weights.items()},
        "gradient_norm": float(report.gradient.norm()),
    }
    path = out_dir / f"diagnostics_step_{step:06d}.json"
    return _atomic(path, lambda tmp: tmp.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"))


def generate(config, out_dir=None, *, progress: _PROGRESS = None,
             ) -> RunArtifacts:
    """Run sketch-conditioned generation and leave artifacts in out_dir.

    Per step: sample the orbit (azimuth, elevation), build the sketch view
    plus its four orthogonal views at the schedule resolution, warp the
    sketch into the nearest orthogonal view using the depth provider,
    render all five views over a shared random gray, evaluate the
    generation objective, and apply one momentum-SGD update. Checkpoint
    renders, a loss table, the final field, and a manifest are written
    atomically. A progress callback returning False stops the run early;
    a non-finite loss aborts with a diagnostics dump.
    """
    cfg = config if isinstance(config, GenerationConfig) \
        else load_generation_config(config)
    target = out_dir if out_dir is not None else cfg.out_dir
    if target is None:
        raise ConfigError("an output directory is required (config key "
                          "'out_dir' or the out_dir argument)")
    out = Path(target)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    losses_path = out / "losses.csv"
    losses_path.unlink(missing_ok=True)

    schedule = cfg.diffusion_schedule()
    ws = cfg.weight_schedule()
    guidance = _guidance_config(cfg.guidance)
    state = _SharedState(cfg.render_steps)
    model = _build_model(cfg, schedule, state)
    model_2d = _build_model_2d(cfg, schedule)

    sketch_native = load_sketch_png(cfg.sketch)
    h, w = sketch_native.shape
    native_cam = make_camera(cfg.azimuth_deg, cfg.elevation_deg, cfg.radius,
                             fov_y_deg=cfg.fov_y_deg, width=w, height=h)
    depth_native = _build_depth_provider(cfg).depth_for(sketch_native,
                                                        native_cam)
    per_res: dict = {}

    def at_resolution(res: int):
        if res not in per_res:
            sk = _resize_unit(sketch_native, res)
            cam = make_camera(cfg.azimuth_deg, cfg.elevation_deg, cfg.radius,
                              fov_y_deg=cfg.fov_y_deg, width=res, height=res)
            per_res[res] = (sk, extract_silhouette(sk), cam)
        return per_res[res]

    fld = blob_field(cfg.field_resolution)
    opt = MomentumSGD(lr=cfg.lr, momentum=cfg.momentum,
                      clip_norm=cfg.grad_clip)
    rng = np.random.default_rng(cfg.seed)
    checkpoints = []

    for step in range(cfg.total_steps):
        res = ws.resolution(step)
        sketch_r, sil_r, sketch_cam = at_resolution(res)
        base_az = float(rng.uniform(0.0, 360.0))
        base_el = float(rng.uniform(0.0, 30.0))
        state.shading = _sample_light(rng, sketch_cam) \
            if cfg.shading == "sampled" else None
        state.background = float(rng.random()) if cfg.background is None \
            else float(cfg.background)

        orth = sample_orthogonal_views(base_az, base_el, cfg.radius,
                                       fov_y_deg=cfg.fov_y_deg,
                                       width=res, height=res)
        near = nearest_view(sketch_cam, orth)
        orth_native = sample_orthogonal_views(base_az, base_el, cfg.radius,
                                              fov_y_deg=cfg.fov_y_deg,
                                              width=w, height=h)
        warped = warp_sketch(sketch_native, depth_native, native_cam,
                             orth_native[near])
        conditions = ConditionSet.assemble(
            sketch=sketch_r, sketch_camera=sketch_cam,
            orthogonal_cameras=orth, nearest_offset=near,
            warped_sketch=_resize_unit(warped, res),
            text_token=cfg.text_token)

        rcfg = state.config()
        renders = [render(fld, cam, rcfg, background=state.background)
                   for cam in conditions.cameras]
        inputs = StageInputs(
            conditions=conditions, score_model=model, schedule=schedule,
            weights=ws, rng=rng, silhouette_target=sil_r,
            score_model_2d=model_2d, guidance=guidance)
        report = generation_objective(step, renders, inputs)
        if not np.isfinite(report.total) or not report.gradient.is_finite():
            dump = _nan_dump(out, step, report, cfg.seed)
            raise FloatingPointError(
                f"non-finite loss at step {step}; diagnostics in {dump}")
        append_loss_rows(losses_path, step,
                         {**report.terms, "total": report.total})
        opt.step(fld, report.gradient)

        last = step == cfg.total_steps - 1
        if cfg.checkpoint_every > 0 and (step % cfg.checkpoint_every == 0
                                         or last):
            ck = ckpt_dir / f"step_{step:06d}.png"
            checkpoints.append(_atomic(
                ck, lambda tmp: save_render_png(tmp, renders[0].rgb)))
        if progress is not None and progress(step, report) is False:
            break

    field_path = _atomic(out / "field.skdf",
                         lambda tmp: save_field(fld, tmp))
    manifest_path = _write_manifest(out / "manifest.json", {
        "kind": "generate", "config": cfg.to_dict(), "seed": cfg.seed,
        "artifacts": {
            "field": field_path.name, "losses": losses_path.name,
            "checkpoints": [p.name for p in checkpoints]},
    })
    return RunArtifacts(out_dir=out, field_path=field_path,
                        manifest_path=manifest_path,
                        loss_csv_path=losses_path,
                        checkpoint_paths=tuple(checkpoints))


# -------------------------------------------------------------------- edit

_STAGE_KEYS = {"steps", "seed", "lr"}
_FINE_KEYS = _STAGE_KEYS | {"local_fraction", "iso_density", "overrides"}


@dataclass(frozen=True)
class EditConfig:
    """A resolved two-stage editing run on an existing field."""

    field: str
    sketch: str
    mask: str
    z_min: float
    z_max: float
    azimuth_deg: float = 0.0
    elevation_deg: float = 15.0
    radius: float = 2.0
    fov_y_deg: float = 50.0
    text_token: Optional[str] = None
    render_steps: int = 48
    background: Optional[float] = None
    model: Mapping = field(default_factory=lambda: {
        "name": "sketch_consistency"})
    model_2d: Optional[Mapping] = field(default_factory=lambda: {
        "name": "palette"})
    weights: Mapping = field(default_factory=dict)
    diffusion: Mapping = field(default_factory=dict)
    guidance: Optional[Mapping] = None
    coarse: Mapping = field(default_factory=dict)
    fine: Mapping = field(default_factory=dict)
    out_dir: Optional[str] = None

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("model", "model_2d", "weights", "diffusion", "guidance",
                    "coarse", "fine"):
            if out[key] is not None:
                out[key] = dict(out[key])
        return out

    def stage(self, name: str) -> dict:
        defaults = {"steps": 200, "seed": 0, "lr": 0.05}
        if name == "fine":
            defaults.update(local_fraction=0.5, iso_density=1.0,
                            overrides=None)
        return {**defaults, **dict(getattr(self, name))}


_EDIT_KEYS = {f.name for f in dataclasses.fields(EditConfig)}


def load_edit_config(source) -> EditConfig:
    """Build an EditConfig from a JSON file path or a mapping, with the
    same key checking and path resolution as generation configs."""
    data, base_dir = _load_json_source(source, "edit config")
    _check_keys(data, _EDIT_KEYS)
    kw = dict(data)
    for key in ("field", "sketch", "mask"):
        kw[key] = _resolve_path(_require(data, key, str, key), base_dir)
    for key in ("z_min", "z_max"):
        kw[key] = _require(data, key, float, key)
    for key, kind in (("azimuth_deg", float), ("elevation_deg", float),
                      ("radius", float), ("fov_y_deg", float),
                      ("render_steps", int), ("text_token", str),
                      ("background", float), ("out_dir", str)):
        if key in kw and kw[key] is not None:
            kw[key] = _typed(kw, key, kind, key)
    kw["model"] = _check_model(
        _as_block(data.get("model", {"name": "sketch_consistency"}),
                  "model"), base_dir)
    model_2d = data.get("model_2d", {"name": "palette"})
    kw["model_2d"] = _check_model_2d(
        None if model_2d is None else _as_block(model_2d, "model_2d"),
        base_dir)
    kw["weights"] = _check_weights(data.get("weights", {}))
    kw["diffusion"] = dict(_as_block(data.get("diffusion", {}), "diffusion"))
    if data.get("guidance") is not None:
        kw["guidance"] = dict(_as_block(data["guidance"], "guidance"))
    for stage, allowed in (("coarse", _STAGE_KEYS), ("fine", _FINE_KEYS)):
        block = _as_block(data.get(stage, {}), stage)
        _check_keys(block, allowed, stage)
        block = dict(block)
        for key, kind in (("steps", int), ("seed", int), ("lr", float),
                          ("local_fraction", float), ("iso_density", float)):
            if key in block:
                block[key] = _typed(block, key, kind, f"{stage}.{key}")
        if block.get("overrides") is not None:
            block["overrides"] = _resolve_path(
                _typed(block, "overrides", str, "fine.overrides"), base_dir)
        kw[stage] = block
    if "out_dir" in kw and kw["out_dir"] is not None:
        kw["out_dir"] = _resolve_path(kw["out_dir"], base_dir)
    cfg = EditConfig(**kw)
    try:
        DiffusionSchedule.linear_beta(**cfg.diffusion)
        WeightSchedule(total_steps=max(cfg.stage("coarse")["steps"], 1),
                       **cfg.weights)
        _guidance_config(cfg.guidance)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _edit_models(cfg: EditConfig, schedule: DiffusionSchedule,
                 state: _SharedState):
    gen_like = GenerationConfig(sketch=cfg.sketch, model=cfg.model,
                                model_2d=cfg.model_2d)
    return (_build_model(gen_like, schedule, state),
            _build_model_2d(gen_like, schedule))


def edit(config, out_dir=None, *, progress: _PROGRESS = None,
         ) -> RunArtifacts:
    """Run the coarse then fine editing stages and leave artifacts.

    Artifacts: both stage fields, the labeled surface mesh (OBJ plus a
    label-per-vertex sidecar), before/after render pairs from the five
    edit views, the loss table for both stages (terms prefixed coarse./
    fine.), and the manifest. An empty mask fails before any optimization.
    """
    cfg = config if isinstance(config, EditConfig) else load_edit_config(config)
    target = out_dir if out_dir is not None else cfg.out_dir
    if target is None:
        raise ConfigError("an output directory is required (config key "
                          "'out_dir' or the out_dir argument)")
    out = Path(target)
    renders_dir = out / "renders"
    renders_dir.mkdir(parents=True, exist_ok=True)
    losses_path = out / "losses.csv"
    losses_path.unlink(missing_ok=True)

    base = load_field(cfg.field)
    sketch = load_sketch_png(cfg.sketch)
    mask = load_sketch_png(cfg.mask) > 0.5
    h, w_ = sketch.shape
    camera = make_camera(cfg.azimuth_deg, cfg.elevation_deg, cfg.radius,
                         fov_y_deg=cfg.fov_y_deg, width=w_, height=h)
    if not mask.any():
        raise NothingToEditError("the edit mask selects no pixels")
    request = EditRequest(base_field=base, sketch=sketch, camera=camera,
                          mask=mask, z_min=cfg.z_min, z_max=cfg.z_max,
                          text_token=cfg.text_token)

    schedule = DiffusionSchedule.linear_beta(**cfg.diffusion)
    guidance = _guidance_config(cfg.guidance)
    state = _SharedState(cfg.render_steps)
    model, model_2d = _edit_models(cfg, schedule, state)

    view_cams = [camera, *sample_orthogonal_views(
        camera.azimuth_deg, camera.elevation_deg, camera.radius,
        look_at=camera.look_at, fov_y_deg=camera.fov_y_deg,
        width=camera.width, height=camera.height)]

    def snapshot(fld: VoxelRadianceField, tag: str) -> list:
        paths = []
        for v, cam in enumerate(view_cams):
            img = render(fld, cam, RenderConfig(
                n_steps=cfg.render_steps, shading=edit_shading(cam)),
                background=1.0).rgb
            paths.append(_atomic(renders_dir / f"{tag}_{v}.png",
                                 lambda tmp: save_render_png(tmp, img)))
        return paths

    before_paths = snapshot(base, "before")

    coarse_cfg = cfg.stage("coarse")
    fine_cfg = cfg.stage("fine")

    def staged_progress(prefix: str, offset: int):
        def cb(step: int, report: LossReport) -> bool:
            append_loss_rows(
                losses_path, step,
                {f"{prefix}.{k}": v for k, v in report.terms.items()})
            if progress is not None:
                return progress(offset + step, report) is not False
            return True
        return cb

    ws_coarse = WeightSchedule(total_steps=coarse_cfg["steps"],
                               **cfg.weights)
    coarse_field = coarse_edit(
        request, model, schedule, total_steps=coarse_cfg["steps"],
        seed=coarse_cfg["seed"], weights=ws_coarse,
        n_render_steps=cfg.render_steps, lr=coarse_cfg["lr"],
        guidance=guidance, background=cfg.background,
        progress=staged_progress("coarse", 0))
    coarse_path = _atomic(out / "field_coarse.skdf",
                          lambda tmp: save_field(coarse_field, tmp))

    overrides = None
    if fine_cfg.get("overrides"):
        overrides = load_overrides(fine_cfg["overrides"])
    ws_fine = WeightSchedule(total_steps=fine_cfg["steps"], **cfg.weights)
    fine_field, labeled = fine_edit(
        request, coarse_field, model, model_2d, schedule,
        total_steps=fine_cfg["steps"], seed=fine_cfg["seed"],
        weights=ws_fine, n_render_steps=cfg.render_steps,
        lr=fine_cfg["lr"], guidance=guidance, background=cfg.background,
        overrides=overrides, iso_density=fine_cfg["iso_density"],
        local_fraction=fine_cfg["local_fraction"],
        progress=staged_progress("fine", coarse_cfg["steps"]))

    field_path = _atomic(out / "field.skdf",
                         lambda tmp: save_field(fine_field, tmp))
    mesh_path = out / "mesh_labeled.obj"
    save_obj(labeled.mesh, mesh_path,
             labels=labeled.labels.astype(np.int64))
    after_paths = snapshot(fine_field, "after")

    manifest_path = _write_manifest(out / "manifest.json", {
        "kind": "edit", "config": cfg.to_dict(),
        "stages": {"coarse": coarse_cfg, "fine": fine_cfg},
        "artifacts": {
            "field": field_path.name, "field_coarse": coarse_path.name,
            "mesh": mesh_path.name,
            "mesh_labels": mesh_path.name + ".labels",
            "losses": losses_path.name,
            "renders": [p.name for p in before_paths + after_paths]},
    })
    return RunArtifacts(
        out_dir=out, field_path=field_path, manifest_path=manifest_path,
        loss_csv_path=losses_path,
        extra_paths={"field_coarse": coarse_path, "mesh": mesh_path,
                     "before": tuple(before_paths),
                     "after": tuple(after_paths)})


# --------------------------------------------------------------- turntable

def turntable(fld: VoxelRadianceField, elevation_deg: float = 15.0,
              frames: int = 36, resolution: int = 256, *,
              radius: float = 2.0, fov_y_deg: float = 50.0,
              background: float = 1.0, render_steps: int = 128,
              start_azimuth_deg: float = 0.0) -> list:
    """Render a full azimuth rotation at fixed elevation: frames equally
    spaced images as (H, W, 3) float arrays."""
    if frames < 1:
        raise ValueError("frames must be >= 1")
    cfg = RenderConfig(n_steps=render_steps)
    images = []
    for k in range(frames):
        cam = make_camera(start_azimuth_deg + 360.0 * k / frames,
                          elevation_deg, radius, fov_y_deg=fov_y_deg,
                          width=resolution, height=resolution)
        images.append(render(fld, cam, cfg, background=background).rgb)
    return images
