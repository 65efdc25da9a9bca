"""3D-aware single-image editing with a pluggable generative-oracle boundary.

The numerical core (geometry, forward warping, background depth completion,
correspondence-based depth refinement) is deterministic and testable
offline; every neural capability lives behind the oracle protocol in
:mod:`depthedit.oracle`.
"""

__version__ = "0.1.0"

from .geometry import CameraIntrinsics, DepthMap, DisparityMap, RigidTransform
from .pipeline import EditConfig, EditSession, create_session, load_session

__all__ = [
    "CameraIntrinsics", "DepthMap", "DisparityMap", "RigidTransform",
    "EditConfig", "EditSession", "create_session", "load_session",
    "__version__",
]
