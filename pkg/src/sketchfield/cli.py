"""Command line for the engine: generation and editing runs from JSON
configs, field rendering (single view or turntable), sketch synthesis from
a field, and the HTTP job service."""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .editing import edit_shading
from .errors import ConfigError
from .imgio import save_render_png, save_sketch_png
from .pipeline import (edit, extract_sketch, generate,
                       load_edit_config, load_generation_config, turntable)
from .cameras import make_camera
from .volume import RenderConfig, load_field, render


def _cmd_generate(args) -> int:
    cfg = load_generation_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    arts = generate(cfg, args.out, progress=_ticker(args, cfg.total_steps))
    print(f"field: {arts.field_path}")
    print(f"manifest: {arts.manifest_path}")
    return 0


def _cmd_edit(args) -> int:
    cfg = load_edit_config(args.config)
    total = cfg.stage("coarse")["steps"] + cfg.stage("fine")["steps"]
    arts = edit(cfg, args.out, progress=_ticker(args, total))
    print(f"field: {arts.field_path}")
    print(f"manifest: {arts.manifest_path}")
    return 0


def _ticker(args, total_steps: int):
    if getattr(args, "quiet", False):
        return None

    def tick(step: int, report) -> bool:
        if step % 50 == 0 or step == total_steps - 1:
            print(f"step {step}/{total_steps} loss {report.total:.5f}",
                  file=sys.stderr)
        return True
    return tick


def _cmd_render(args) -> int:
    fld = load_field(args.field)
    out = Path(args.out)
    if args.turntable:
        out.mkdir(parents=True, exist_ok=True)
        frames = turntable(fld, elevation_deg=args.elevation,
                           frames=args.frames, resolution=args.resolution,
                           radius=args.radius, render_steps=args.steps,
                           background=args.background)
        for k, img in enumerate(frames):
            save_render_png(out / f"{k:03d}.png", img)
        print(f"wrote {len(frames)} frames to {out}")
        return 0
    cam = make_camera(args.azimuth, args.elevation, args.radius,
                      width=args.resolution, height=args.resolution)
    shading = edit_shading(cam) if args.shaded else None
    img = render(fld, cam, RenderConfig(n_steps=args.steps, shading=shading),
                 background=args.background).rgb
    out.parent.mkdir(parents=True, exist_ok=True)
    save_render_png(out, img)
    print(f"wrote {out}")
    return 0


def _cmd_sketch(args) -> int:
    fld = load_field(args.field)
    cam = make_camera(args.azimuth, args.elevation, args.radius,
                      width=args.resolution, height=args.resolution)
    view = render(fld, cam, RenderConfig(n_steps=args.steps),
                  background=1.0)
    sketch = extract_sketch(view.rgb, view.depth)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_sketch_png(out, sketch)
    print(f"wrote {out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    app = create_app(Path(args.data))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchfield",
        description="Sketch-conditioned 3D generation and editing on voxel "
                    "radiance fields.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="run sketch-conditioned generation")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("edit", help="run the two editing stages on a field")
    p.add_argument("--config", required=True, help="JSON edit configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_edit)

    p = sub.add_parser("render", help="render a field file")
    p.add_argument("--field", required=True, help="field file (.skdf)")
    p.add_argument("--turntable", action="store_true",
                   help="render a full azimuth rotation")
    p.add_argument("--elevation", type=float, default=15.0)
    p.add_argument("--azimuth", type=float, default=0.0,
                   help="azimuth for a single view")
    p.add_argument("--frames", type=int, default=36)
    p.add_argument("--radius", type=float, default=2.0)
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--steps", type=int, default=128,
                   help="ray-march steps per pixel")
    p.add_argument("--background", type=float, default=1.0)
    p.add_argument("--shaded", action="store_true",
                   help="light the single view from the camera")
    p.add_argument("--out", required=True,
                   help="PNG path, or a directory with --turntable")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("sketch",
                       help="synthesize a sketch of a field for editing")
    p.add_argument("--field", required=True, help="field file (.skdf)")
    p.add_argument("--azimuth", type=float, required=True)
    p.add_argument("--elevation", type=float, required=True)
    p.add_argument("--radius", type=float, default=2.0)
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--steps", type=int, default=128)
    p.add_argument("--out", required=True, help="sketch PNG path")
    p.set_defaults(func=_cmd_sketch)

    p = sub.add_parser("serve", help="start the HTTP job service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data", required=True,
                   help="directory for job state and artifacts")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
