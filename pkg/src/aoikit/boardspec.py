"""Board and component data model shared by every other module.

Holds the component-class vocabulary, board designs (the test-fixture
language for the synthetic generator), the defect taxonomy, and the
per-component digital profiles learned from a golden board.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

MM_PER_INCH = 25.4

SENSITIVITY_MIN = 0.25
SENSITIVITY_MAX = 4.0


class SchemaError(ValueError):
    """Document does not conform to the expected schema."""


class InvariantError(ValueError):
    """Document parsed but violates a model invariant."""


class ComponentCategory(Enum):
    SMD_RESISTOR = "SmdResistor"
    SMD_CAPACITOR = "SmdCapacitor"
    IC = "IC"
    DIODE = "Diode"
    CONNECTOR = "Connector"
    OTHER = "Other"


class MarkStyle(Enum):
    """Polarity-mark rendering style. NONE only for non-polarized classes."""

    NONE = "none"
    BAND = "band"
    DOT = "dot"
    STRIPE = "stripe"


class DefectType(Enum):
    MISSING = "Missing"
    SKEWED = "Skewed"
    WRONG_COMPONENT = "WrongComponent"
    REVERSED_POLARITY = "ReversedPolarity"


#: Canonical task order used for serialization and reports.
ALL_DEFECT_TYPES = (
    DefectType.MISSING,
    DefectType.SKEWED,
    DefectType.WRONG_COMPONENT,
    DefectType.REVERSED_POLARITY,
)


@dataclass(frozen=True)
class Appearance:
    """Rendering parameter bundle consumed by the synthetic generator.

    Colors are RGB in 0..255. ``body_color_jitter`` is the per-board
    uniform half-range applied to the body color (vendor-lot variation).
    """

    body_color: tuple[int, int, int]
    cap_color: tuple[int, int, int] = (205, 205, 210)
    cap_frac: float = 0.15  # end-cap length as fraction of body length
    mark_style: MarkStyle = MarkStyle.NONE
    mark_color: tuple[int, int, int] = (235, 235, 235)
    body_color_jitter: int = 4
    detail: str = ""  # extra category-specific detail key ("pins", "holes", ...)


@dataclass(frozen=True)
class ComponentClass:
    id: str
    category: ComponentCategory
    polarized: bool
    nominal_size_mm: tuple[float, float]
    appearance: Appearance
    family: str = ""  # vendor-equivalence group; defaults to own id

    def __post_init__(self):
        w, h = self.nominal_size_mm
        if w <= 0 or h <= 0:
            raise InvariantError(f"class {self.id}: nominal_size_mm must be positive")
        if self.polarized and self.appearance.mark_style is MarkStyle.NONE:
            raise InvariantError(f"class {self.id}: polarized class needs a mark style")
        if not self.family:
            object.__setattr__(self, "family", self.id)


@dataclass(frozen=True)
class ComponentInstance:
    refdes: str
    class_id: str
    center_mm: tuple[float, float]
    rotation_deg: float
    size_mm: tuple[float, float]

    def __post_init__(self):
        if not (0.0 <= self.rotation_deg < 360.0):
            raise InvariantError(
                f"{self.refdes}: rotation_deg {self.rotation_deg} not in [0, 360)"
            )
        w, h = self.size_mm
        if w <= 0 or h <= 0:
            raise InvariantError(f"{self.refdes}: size_mm must be positive")

    @property
    def bbox_mm(self) -> tuple[float, float, float, float]:
        """Axis-aligned extent (x0, y0, x1, y1) of the rotated body."""
        cx, cy = self.center_mm
        hw, hh = rotated_half_extent(self.size_mm, self.rotation_deg)
        return (cx - hw, cy - hh, cx + hw, cy + hh)


def rotated_half_extent(size: tuple[float, float], angle_deg: float) -> tuple[float, float]:
    """Half width/height of the AABB of a w x h rectangle rotated by angle."""
    w, h = size
    a = math.radians(angle_deg)
    c, s = abs(math.cos(a)), abs(math.sin(a))
    return (w * c + h * s) / 2.0, (w * s + h * c) / 2.0


def _boxes_overlap(a: tuple[float, float, float, float],
                   b: tuple[float, float, float, float]) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


@dataclass(frozen=True)
class BoardDesign:
    design_id: str
    name: str
    width_in: float
    height_in: float
    components: tuple[ComponentInstance, ...]

    def __post_init__(self):
        if self.width_in <= 0 or self.height_in <= 0:
            raise InvariantError("board dimensions must be positive")
        seen: set[str] = set()
        for comp in self.components:
            if comp.refdes in seen:
                raise InvariantError(f"duplicate refdes {comp.refdes}")
            seen.add(comp.refdes)
        w_mm = self.width_in * MM_PER_INCH
        h_mm = self.height_in * MM_PER_INCH
        for comp in self.components:
            x0, y0, x1, y1 = comp.bbox_mm
            if x0 < 0 or y0 < 0 or x1 > w_mm or y1 > h_mm:
                raise InvariantError(f"{comp.refdes}: bbox outside board outline")
        comps = self.components
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                if _boxes_overlap(comps[i].bbox_mm, comps[j].bbox_mm):
                    raise InvariantError(
                        f"overlapping bboxes: {comps[i].refdes} and {comps[j].refdes}"
                    )

    @property
    def width_mm(self) -> float:
        return self.width_in * MM_PER_INCH

    @property
    def height_mm(self) -> float:
        return self.height_in * MM_PER_INCH

    def component(self, refdes: str) -> ComponentInstance:
        for comp in self.components:
            if comp.refdes == refdes:
                return comp
        raise KeyError(refdes)

    @property
    def refdes_set(self) -> frozenset[str]:
        return frozenset(c.refdes for c in self.components)


# ---------------------------------------------------------------------------
# Board-design document (JSON encoding)

def board_design_to_dict(design: BoardDesign) -> dict:
    return {
        "design_id": design.design_id,
        "name": design.name,
        "width_in": design.width_in,
        "height_in": design.height_in,
        "components": [
            {
                "refdes": c.refdes,
                "class": c.class_id,
                "center_mm": [c.center_mm[0], c.center_mm[1]],
                "rotation_deg": c.rotation_deg,
                "size_mm": [c.size_mm[0], c.size_mm[1]],
            }
            for c in design.components
        ],
    }


def _require(doc: Mapping, key: str, types, where: str):
    if key not in doc:
        raise SchemaError(f"{where}: missing field '{key}'")
    val = doc[key]
    if not isinstance(val, types):
        raise SchemaError(f"{where}: field '{key}' has wrong type {type(val).__name__}")
    return val


def _pair(value, key: str, where: str) -> tuple[float, float]:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        raise SchemaError(f"{where}: field '{key}' must be a pair of numbers")
    return float(value[0]), float(value[1])


def board_design_from_dict(doc: Mapping) -> BoardDesign:
    if not isinstance(doc, Mapping):
        raise SchemaError("board design document must be an object")
    design_id = _require(doc, "design_id", str, "design")
    name = _require(doc, "name", str, "design")
    width_in = float(_require(doc, "width_in", (int, float), "design"))
    height_in = float(_require(doc, "height_in", (int, float), "design"))
    raw_components = _require(doc, "components", list, "design")
    components = []
    for idx, comp in enumerate(raw_components):
        where = f"components[{idx}]"
        if not isinstance(comp, Mapping):
            raise SchemaError(f"{where}: must be an object")
        refdes = _require(comp, "refdes", str, where)
        where = f"component {refdes or idx}"
        components.append(ComponentInstance(
            refdes=refdes,
            class_id=_require(comp, "class", str, where),
            center_mm=_pair(comp["center_mm"], "center_mm", where)
            if "center_mm" in comp else _require(comp, "center_mm", list, where),
            rotation_deg=float(_require(comp, "rotation_deg", (int, float), where)),
            size_mm=_pair(comp["size_mm"], "size_mm", where)
            if "size_mm" in comp else _require(comp, "size_mm", list, where),
        ))
    return BoardDesign(
        design_id=design_id,
        name=name,
        width_in=width_in,
        height_in=height_in,
        components=tuple(components),
    )


def load_board_design(source: str | Path) -> BoardDesign:
    """Parse and validate a board-design document.

    ``source`` is a path to a JSON file or a raw JSON string. Raises
    SchemaError for malformed documents and InvariantError (with the
    offending refdes) for invariant violations.
    """
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text()
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    return board_design_from_dict(doc)


def save_board_design(design: BoardDesign, path: str | Path) -> None:
    Path(path).write_text(json.dumps(board_design_to_dict(design), indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# Component-class library

LIBRARY_VERSION = 1


def default_class_library() -> dict[str, ComponentClass]:
    """Built-in component-class vocabulary used by the generator and the
    classifier prototypes. Sizes are generous so bodies stay several pixels
    wide at the low raster scales the desk-scale corpus uses.
    """
    classes = [
        ComponentClass(
            "res2512", ComponentCategory.SMD_RESISTOR, False, (6.3, 3.2),
            Appearance(body_color=(45, 45, 48), cap_color=(208, 208, 214), cap_frac=0.16),
        ),
        ComponentClass(
            "cap1210", ComponentCategory.SMD_CAPACITOR, False, (5.7, 5.0),
            # sage ceramic; low saturation keeps the body clear of the
            # gold-pad hue window so pad masking never eats the body
            Appearance(body_color=(168, 178, 148), cap_color=(212, 212, 218), cap_frac=0.14),
        ),
        ComponentClass(
            "cap1210b", ComponentCategory.SMD_CAPACITOR, False, (5.7, 5.0),
            Appearance(body_color=(150, 108, 160), cap_color=(212, 212, 218), cap_frac=0.14),
            family="cap1210",
        ),
        ComponentClass(
            "cap_elec", ComponentCategory.SMD_CAPACITOR, True, (8.0, 8.0),
            Appearance(body_color=(52, 74, 148), cap_color=(180, 182, 188), cap_frac=0.0,
                       mark_style=MarkStyle.STRIPE, mark_color=(240, 234, 200)),
        ),
        ComponentClass(
            "ic_qfp32", ComponentCategory.IC, True, (12.0, 12.0),
            Appearance(body_color=(33, 33, 36), cap_color=(190, 190, 196), cap_frac=0.0,
                       mark_style=MarkStyle.DOT, mark_color=(214, 214, 220), detail="pins"),
        ),
        ComponentClass(
            "diode_smc", ComponentCategory.DIODE, True, (8.0, 5.0),
            Appearance(body_color=(52, 48, 50), cap_color=(200, 200, 206), cap_frac=0.12,
                       mark_style=MarkStyle.BAND, mark_color=(232, 232, 236)),
        ),
        ComponentClass(
            "conn_hdr8", ComponentCategory.CONNECTOR, False, (20.0, 8.0),
            Appearance(body_color=(216, 214, 206), cap_color=(150, 150, 156), cap_frac=0.0,
                       detail="holes"),
        ),
        ComponentClass(
            "shield_can", ComponentCategory.OTHER, False, (10.0, 10.0),
            Appearance(body_color=(122, 126, 130), cap_color=(160, 163, 167), cap_frac=0.0),
        ),
    ]
    return {c.id: c for c in classes}


def class_library_to_dict(library: Mapping[str, ComponentClass]) -> dict:
    return {
        "version": LIBRARY_VERSION,
        "classes": [
            {
                "id": c.id,
                "category": c.category.value,
                "polarized": c.polarized,
                "nominal_size_mm": list(c.nominal_size_mm),
                "family": c.family,
                "appearance": {
                    "body_color": list(c.appearance.body_color),
                    "cap_color": list(c.appearance.cap_color),
                    "cap_frac": c.appearance.cap_frac,
                    "mark_style": c.appearance.mark_style.value,
                    "mark_color": list(c.appearance.mark_color),
                    "body_color_jitter": c.appearance.body_color_jitter,
                    "detail": c.appearance.detail,
                },
            }
            for c in sorted(library.values(), key=lambda c: c.id)
        ],
    }


def class_library_from_dict(doc: Mapping) -> dict[str, ComponentClass]:
    _require(doc, "version", int, "library")
    out: dict[str, ComponentClass] = {}
    for raw in _require(doc, "classes", list, "library"):
        app = raw.get("appearance", {})
        cls = ComponentClass(
            id=raw["id"],
            category=ComponentCategory(raw["category"]),
            polarized=bool(raw["polarized"]),
            nominal_size_mm=(float(raw["nominal_size_mm"][0]), float(raw["nominal_size_mm"][1])),
            family=raw.get("family", ""),
            appearance=Appearance(
                body_color=tuple(app["body_color"]),
                cap_color=tuple(app.get("cap_color", (205, 205, 210))),
                cap_frac=float(app.get("cap_frac", 0.15)),
                mark_style=MarkStyle(app.get("mark_style", "none")),
                mark_color=tuple(app.get("mark_color", (235, 235, 235))),
                body_color_jitter=int(app.get("body_color_jitter", 4)),
                detail=app.get("detail", ""),
            ),
        )
        out[cls.id] = cls
    return out


def load_class_library(path: str | Path) -> dict[str, ComponentClass]:
    return class_library_from_dict(json.loads(Path(path).read_text()))


def save_class_library(library: Mapping[str, ComponentClass], path: str | Path) -> None:
    Path(path).write_text(json.dumps(class_library_to_dict(library), indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# Digital profiles

def default_sensitivity() -> dict[DefectType, float]:
    return {t: 1.0 for t in ALL_DEFECT_TYPES}


def clamp_sensitivity(value: float) -> float:
    return min(SENSITIVITY_MAX, max(SENSITIVITY_MIN, value))


@dataclass(frozen=True)
class AlternateReference:
    """A functionally-equivalent part accepted in place of the reference."""

    crop: "object"  # HxWx3 uint8 ndarray
    embedding: "object"  # 1-D float64 ndarray


@dataclass(frozen=True)
class DigitalProfile:
    """Per-component record learned from the golden board."""

    refdes: str
    class_label: str
    bbox_px: tuple[int, int, int, int]
    reference_crop: "object"
    reference_embedding: "object"
    empty_site_embedding: "object"
    reference_angle_deg: float
    alternates: tuple[AlternateReference, ...] = ()
    sensitivity: Mapping[DefectType, float] = field(default_factory=default_sensitivity)

    def __post_init__(self):
        sens = dict(self.sensitivity)
        for task in ALL_DEFECT_TYPES:
            sens.setdefault(task, 1.0)
            if not (SENSITIVITY_MIN <= sens[task] <= SENSITIVITY_MAX):
                raise InvariantError(
                    f"{self.refdes}: sensitivity[{task.value}]={sens[task]} out of range"
                )
        object.__setattr__(self, "sensitivity", sens)

    def with_sensitivity(self, task: DefectType, value: float) -> "DigitalProfile":
        sens = dict(self.sensitivity)
        sens[task] = clamp_sensitivity(value)
        return DigitalProfile(
            refdes=self.refdes, class_label=self.class_label, bbox_px=self.bbox_px,
            reference_crop=self.reference_crop, reference_embedding=self.reference_embedding,
            empty_site_embedding=self.empty_site_embedding,
            reference_angle_deg=self.reference_angle_deg,
            alternates=self.alternates, sensitivity=sens,
        )

    def with_alternates(self, alternates: Sequence[AlternateReference]) -> "DigitalProfile":
        return DigitalProfile(
            refdes=self.refdes, class_label=self.class_label, bbox_px=self.bbox_px,
            reference_crop=self.reference_crop, reference_embedding=self.reference_embedding,
            empty_site_embedding=self.empty_site_embedding,
            reference_angle_deg=self.reference_angle_deg,
            alternates=tuple(alternates), sensitivity=self.sensitivity,
        )


@dataclass(frozen=True)
class GoldenProfile:
    """The learned golden-board artifact: one DigitalProfile per component."""

    design_id: str
    image_ref: str
    pixels_per_inch: float
    profiles: Mapping[str, DigitalProfile]
    created_at: str
    learn_ms: float = 0.0
    applied_batches: tuple[str, ...] = ()

    def ordered_profiles(self) -> list[DigitalProfile]:
        """Profiles in canonical (y, x) order of their boxes."""
        return sorted(self.profiles.values(), key=lambda p: (p.bbox_px[1], p.bbox_px[0]))

    def with_profiles(self, profiles: Mapping[str, DigitalProfile],
                      applied_batches: Optional[Iterable[str]] = None) -> "GoldenProfile":
        return GoldenProfile(
            design_id=self.design_id, image_ref=self.image_ref,
            pixels_per_inch=self.pixels_per_inch, profiles=dict(profiles),
            created_at=self.created_at, learn_ms=self.learn_ms,
            applied_batches=tuple(applied_batches if applied_batches is not None
                                  else self.applied_batches),
        )
