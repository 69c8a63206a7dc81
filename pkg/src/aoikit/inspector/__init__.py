"""Per-component inspection engine: feature embedding, board registration,
defect heads, and the orchestrating engine."""

from .features import (
    FeatureVector,
    crop_box,
    distance,
    embed,
    foreground_mask,
    mask_geometry,
)
from .registration import RegistrationFailure, Transform, apply_transform, register
from .engine import (
    BoardMeta,
    ComponentVerdict,
    InspectionEngine,
    InspectionRecord,
)

__all__ = [
    "FeatureVector",
    "crop_box",
    "distance",
    "embed",
    "foreground_mask",
    "mask_geometry",
    "RegistrationFailure",
    "Transform",
    "apply_transform",
    "register",
    "BoardMeta",
    "ComponentVerdict",
    "InspectionEngine",
    "InspectionRecord",
]
