"""Serve the adapter over the oracle wire protocol."""

from __future__ import annotations

import argparse

from depthedit.oracle.server import serve_oracle

from .manifest import Manifest
from .oracle_impl import AdapterOracle


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="depthedit-adapter",
                                     description="diffusion oracle adapter")
    parser.add_argument("--manifest", help="model manifest JSON (default: builtin)")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8800)
    args = parser.parse_args(argv)

    manifest = Manifest.load(args.manifest) if args.manifest else Manifest.default()
    oracle = AdapterOracle(manifest)
    print(f"capabilities: {sorted(oracle.capabilities())}")
    if oracle.load_errors:
        for kind, err in oracle.load_errors.items():
            print(f"withdrawn {kind}: {err}")
    serve_oracle(oracle, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
