"""Round-trip the gizmo's transform JSON through the real harness validation.

The studio and the session service share one schema; this check feeds the
fixture the UI tests assert against into the engine's validating parser and
fails loudly on any drift.
"""

import json
import sys
from pathlib import Path

FIXTURE = Path(__file__).parent.parent / "fixtures" / "gizmo_transform.json"


def main() -> int:
    try:
        from depthedit.geometry import RigidTransform
    except ImportError:
        print("validate_fixture: depthedit is not installed; skipping harness validation")
        return 0

    payload = json.loads(FIXTURE.read_text(encoding="utf-8"))
    transform = RigidTransform.from_json(payload)
    round_tripped = transform.to_json()
    for key in ("rotation", "translation", "scale", "pivot"):
        a, b = payload[key], round_tripped[key]
        if isinstance(a, list):
            ok = len(a) == len(b) and all(abs(x - y) < 1e-9 for x, y in zip(a, b))
        else:
            ok = a == b
        if not ok:
            print(f"validate_fixture: field {key!r} drifted: {a} != {b}")
            return 1
    print("validate_fixture: gizmo transform JSON accepted by harness validation")
    return 0


if __name__ == "__main__":
    sys.exit(main())
