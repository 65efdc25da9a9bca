"""Command line entry points: run edits, serve sessions, serve mock oracles.

Exit codes for ``edit``: 0 success, 2 input validation, 3 oracle failure,
4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .alignment import SolverConfig
from .errors import (
    DepthEditError,
    InvalidInputError,
    OracleError,
    SolverFailureError,
)
from .geometry import (
    CameraIntrinsics,
    RigidTransform,
    fraction_of_transform,
    load_intrinsics,
    load_transform,
)
from .imgio import load_mask, load_png, save_png
from .oracle import create_oracle, serve_oracle
from .pipeline import EditConfig, create_session

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ORACLE = 3
EXIT_SOLVER = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depthedit",
                                     description="3D-aware single-image editing")
    sub = parser.add_subparsers(dest="command", required=True)

    edit = sub.add_parser("edit", help="run one edit end to end")
    edit.add_argument("--image", required=True, help="source image (PNG)")
    edit.add_argument("--mask", required=True, help="selection mask (PNG, nonzero = selected)")
    edit.add_argument("--transform", required=True, help="transform JSON file")
    edit.add_argument("--intrinsics", help="camera intrinsics JSON (default: 55 deg vfov)")
    edit.add_argument("--oracle", default="mock:identity",
                      help="mock:identity | mock:<scene.json> | http://host:port")
    edit.add_argument("--out", required=True, help="session output directory")
    edit.add_argument("--sigma", default="0.5,0.4,0.3",
                      help="comma-separated noise schedule, non-increasing")
    edit.add_argument("--iterations", type=int, default=3)
    edit.add_argument("--stride", type=int, default=4, help="correspondence subsampling stride")
    edit.add_argument("--lambda", dest="regularization", type=float, default=1.0,
                      help="depth-gradient regularization weight")
    edit.add_argument("--stretch-threshold", type=float, default=4.0)
    edit.add_argument("--chain-steps", type=int, default=1,
                      help="split the edit into N incremental steps, feeding each output forward")

    serve = sub.add_parser("serve", help="run the session HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8700)
    serve.add_argument("--storage", help="session storage root (default: env DEPTHEDIT_STORAGE or ./sessions)")
    serve.add_argument("--oracle", default="mock:identity", help="default oracle for new sessions")
    serve.add_argument("--config", help="JSON file with the default edit config for new sessions")

    oracle = sub.add_parser("serve-oracle", help="expose a mock oracle over HTTP")
    oracle.add_argument("--oracle", default="mock:identity")
    oracle.add_argument("--host", default="127.0.0.1")
    oracle.add_argument("--port", type=int, default=8800)

    return parser


def _load_inputs(args):
    for flag, path in (("--image", args.image), ("--mask", args.mask),
                       ("--transform", args.transform)):
        if not Path(path).exists():
            raise InvalidInputError(f"{flag}: file not found: {path}")
    if args.intrinsics and not Path(args.intrinsics).exists():
        raise InvalidInputError(f"--intrinsics: file not found: {args.intrinsics}")

    image = load_png(args.image)
    mask = load_mask(args.mask)
    transform = load_transform(args.transform)
    if args.intrinsics:
        intrinsics = load_intrinsics(args.intrinsics)
    else:
        intrinsics = CameraIntrinsics.default(image.shape[1], image.shape[0])
    return image, mask, transform, intrinsics


def _parse_config(args) -> EditConfig:
    try:
        schedule = tuple(float(x) for x in args.sigma.split(","))
    except ValueError:
        raise InvalidInputError(f"--sigma: cannot parse {args.sigma!r}")
    return EditConfig(
        iterations=args.iterations,
        sigma_schedule=schedule,
        stretch_threshold=args.stretch_threshold,
        correspondence_stride=args.stride,
        solver=SolverConfig(regularization=args.regularization),
    )


def _transport_mask(session) -> np.ndarray:
    """Selection mask for the next chained step: the warp footprint of the last one."""
    from .warping import lift_to_mesh, rasterize

    mesh = lift_to_mesh(session.image, session.mask, session.depth, session.config.warp)
    result = rasterize(mesh, session.transform, session.intrinsics, session.config.warp)
    return result.visible_mask | result.ambiguous_mask


def run_edit_command(args) -> int:
    try:
        image, mask, transform, intrinsics = _load_inputs(args)
        config = _parse_config(args)
        if args.chain_steps < 1:
            raise InvalidInputError("--chain-steps: must be >= 1")
    except (InvalidInputError, DepthEditError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out = Path(args.out)
    steps = args.chain_steps
    step_transform = transform if steps == 1 else fraction_of_transform(transform, 1.0 / steps)

    try:
        current_image, current_mask = image, mask
        final = None
        for step in range(steps):
            root = out if steps == 1 else out / f"step_{step}"
            session = create_session(
                root, current_image, current_mask, step_transform,
                intrinsics=intrinsics, config=config, oracle_spec=args.oracle,
                oracle=create_oracle(args.oracle, request_prefix=root.name),
                session_id=root.name if steps > 1 else (args.out.strip("/").split("/")[-1] or "session"))
            final, _ = session.run_edit()
            if steps > 1 and step < steps - 1:
                current_mask = _transport_mask(session)
                current_image = final
        save_png(out / "final.png", final)
    except OracleError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except SolverFailureError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InvalidInputError, DepthEditError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def run_serve_command(args) -> int:
    import os

    import uvicorn

    from .service import build_service_app

    storage = args.storage or os.environ.get("DEPTHEDIT_STORAGE", "./sessions")
    default_config = None
    if args.config:
        default_config = EditConfig.from_json(
            json.loads(Path(args.config).read_text(encoding="utf-8")))
    app = build_service_app(Path(storage), default_oracle=args.oracle,
                            default_config=default_config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def run_serve_oracle_command(args) -> int:
    oracle = create_oracle(args.oracle)
    serve_oracle(oracle, host=args.host, port=args.port)
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "edit":
        return run_edit_command(args)
    if args.command == "serve":
        return run_serve_command(args)
    if args.command == "serve-oracle":
        return run_serve_oracle_command(args)
    return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
