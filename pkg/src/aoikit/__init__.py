"""Desk-scale automated optical inspection toolkit for PCB assemblies.

The pipeline: learn per-component digital profiles from a single golden
board image plus its dimensions, inspect sample boards with four defect
heads (missing, wrong component, reversed polarity, skewed) over one
shared embedding per component, adapt thresholds from operator feedback,
and account for inline conveyor operation with SMEMA handshakes and
cycle-time modeling. A deterministic synthetic board renderer provides
ground truth for every accuracy claim.
"""

__version__ = "0.1.0"

from .boardspec import (
    BoardDesign,
    ComponentClass,
    ComponentInstance,
    DefectType,
    DigitalProfile,
    GoldenProfile,
    default_class_library,
    load_board_design,
    save_board_design,
)
from .config import DEFAULT_CONFIG, EngineConfig
from .goldenlearn import learn_golden, load_profile, save_profile
from .inspector import BoardMeta, ComponentVerdict, InspectionEngine, InspectionRecord

__all__ = [
    "__version__",
    "BoardDesign",
    "ComponentClass",
    "ComponentInstance",
    "DefectType",
    "DigitalProfile",
    "GoldenProfile",
    "default_class_library",
    "load_board_design",
    "save_board_design",
    "DEFAULT_CONFIG",
    "EngineConfig",
    "learn_golden",
    "load_profile",
    "save_profile",
    "BoardMeta",
    "ComponentVerdict",
    "InspectionEngine",
    "InspectionRecord",
]
