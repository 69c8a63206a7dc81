"""Synthetic PCBA renderer and defect injector.

Renders raster board images from a BoardDesign and injects ground-truth
defects, so every accuracy number downstream can be checked against an
exact oracle instead of hand-labeled photographs. All rendering is a pure
function of (design, plan, ppi, seed): identical inputs give bit-identical
images.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import cv2
import numpy as np

from .boardspec import (
    MM_PER_INCH,
    Appearance,
    BoardDesign,
    ComponentClass,
    ComponentInstance,
    DefectType,
    MarkStyle,
    default_class_library,
    rotated_half_extent,
)
from .config import STANDARD_NUISANCE, NuisanceProfile
from .imageio import save_png

PPI_MIN, PPI_MAX = 40, 400

SUBSTRATE_COLOR = (30, 96, 64)
SUBSTRATE_NOISE = 5
PAD_COLOR = (200, 168, 92)  # ENIG-style gold: hue-separable from caps/silk
SILK_COLOR = (240, 240, 238)
PAD_PROTRUSION_MM = 1.0
PAD_OVERLAP_MM = 0.8

# Injection floors/ranges. The floors guarantee a defect is visible in
# principle; the sampling ranges sit comfortably above them.
SKEW_ANGLE_FLOOR_DEG = 6.0
SKEW_OFFSET_FLOOR_FRAC = 0.12
SKEW_ANGLE_RANGE = (10.5, 22.0)
SKEW_OFFSET_RANGE = (0.22, 0.34)
ELONGATED_ASPECT = 1.3  # below this, skew is injected as offset (moments
                        # cannot see small rotations of near-square bodies)

_FP_SHIFT = 4  # fixed-point bits for sub-pixel polygon rasterization


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class DefectEntry:
    refdes: str
    defect: DefectType
    params: Mapping[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"refdes": self.refdes, "defect": self.defect.value,
                "params": dict(self.params)}

    @staticmethod
    def from_dict(doc: Mapping) -> "DefectEntry":
        return DefectEntry(doc["refdes"], DefectType(doc["defect"]),
                           dict(doc.get("params", {})))


@dataclass(frozen=True)
class DefectPlan:
    serial: str
    entries: tuple[DefectEntry, ...] = ()

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.refdes in seen:
                raise RenderError(f"plan has multiple defects for {e.refdes}")
            seen.add(e.refdes)
            if e.defect is DefectType.SKEWED:
                angle = abs(float(e.params.get("angle_deg", 0.0)))
                offset = float(e.params.get("offset_frac", 0.0))
                if angle < SKEW_ANGLE_FLOOR_DEG and offset < SKEW_OFFSET_FLOOR_FRAC:
                    raise RenderError(
                        f"{e.refdes}: skew params below visibility floor "
                        f"(angle {angle}, offset {offset})")

    def validate_against(self, design: BoardDesign) -> None:
        known = design.refdes_set
        for e in self.entries:
            if e.refdes not in known:
                raise RenderError(f"plan references unknown refdes {e.refdes}")

    def by_refdes(self) -> dict[str, DefectEntry]:
        return {e.refdes: e for e in self.entries}

    def to_dict(self) -> dict:
        return {"serial": self.serial, "entries": [e.to_dict() for e in self.entries]}

    @staticmethod
    def from_dict(doc: Mapping) -> "DefectPlan":
        return DefectPlan(doc["serial"],
                          tuple(DefectEntry.from_dict(e) for e in doc.get("entries", [])))


@dataclass(frozen=True)
class RenderedBoard:
    serial: str
    image: np.ndarray
    plan: DefectPlan
    pixels_per_inch: float
    rng_seed: int


# ---------------------------------------------------------------------------
# drawing primitives

def _fp(pts: np.ndarray) -> np.ndarray:
    return np.round(pts * (1 << _FP_SHIFT)).astype(np.int32)


def _rect_pts(cx: float, cy: float, w: float, h: float, angle_deg: float,
              dx_local: float = 0.0, dy_local: float = 0.0) -> np.ndarray:
    """Corners of a w x h rect centered at (cx+R*d_local), rotated by angle.

    The optional local offset is expressed in the rect's own frame so
    part details (caps, bands) rotate with the body.
    """
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    local = np.array([
        [dx_local - w / 2, dy_local - h / 2],
        [dx_local + w / 2, dy_local - h / 2],
        [dx_local + w / 2, dy_local + h / 2],
        [dx_local - w / 2, dy_local + h / 2],
    ])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([cx, cy])


def _fill(img: np.ndarray, pts: np.ndarray, color: Sequence[int]) -> None:
    cv2.fillPoly(img, [_fp(pts)], tuple(int(v) for v in color),
                 lineType=cv2.LINE_8, shift=_FP_SHIFT)


def _circle(img: np.ndarray, cx: float, cy: float, r: float,
            color: Sequence[int]) -> None:
    f = 1 << _FP_SHIFT
    cv2.circle(img, (int(round(cx * f)), int(round(cy * f))),
               max(1, int(round(r * f))), tuple(int(v) for v in color),
               thickness=-1, lineType=cv2.LINE_8, shift=_FP_SHIFT)


def _jitter_color(color: Sequence[int], rng: np.random.Generator, amount: int) -> tuple:
    if amount <= 0:
        return tuple(int(v) for v in color)
    delta = rng.integers(-amount, amount + 1, size=3)
    return tuple(int(np.clip(int(c) + int(d), 0, 255)) for c, d in zip(color, delta))


# ---------------------------------------------------------------------------
# component rendering

def _draw_pads(img: np.ndarray, comp: ComponentInstance, cls: ComponentClass,
               px_per_mm: float, pad_color: tuple) -> None:
    cx, cy = comp.center_mm[0] * px_per_mm, comp.center_mm[1] * px_per_mm
    w, h = comp.size_mm[0] * px_per_mm, comp.size_mm[1] * px_per_mm
    rot = comp.rotation_deg
    over = PAD_OVERLAP_MM * px_per_mm
    prot = PAD_PROTRUSION_MM * px_per_mm
    detail = cls.appearance.detail

    if detail == "pins":
        # strips under the pin rows (top/bottom edges in local frame)
        depth = over + prot
        for sign in (-1, 1):
            _fill(img, _rect_pts(cx, cy, w * 0.9, depth, rot,
                                 0.0, sign * (h / 2 + prot - depth / 2)), pad_color)
    elif detail == "holes":
        n = 8
        pitch = w * 0.8 / (n - 1)
        for i in range(n):
            _fill(img, _rect_pts(cx, cy, pitch * 0.5, h * 0.5, rot,
                                 -w * 0.4 + i * pitch, 0.0), pad_color)
    elif cls.appearance.cap_frac > 0 or cls.polarized:
        # two-terminal part: pads under the end caps
        pw = over + prot
        for sign in (-1, 1):
            _fill(img, _rect_pts(cx, cy, pw, h * 0.7, rot,
                                 sign * (w / 2 + prot - pw / 2), 0.0), pad_color)
    else:
        # corner pads (shield-can style)
        pw = over
        for sx in (-1, 1):
            for sy in (-1, 1):
                _fill(img, _rect_pts(cx, cy, pw, pw, rot,
                                     sx * (w / 2 - pw / 2), sy * (h / 2 - pw / 2)),
                      pad_color)


def _draw_body(img: np.ndarray, cls: ComponentClass, cx: float, cy: float,
               w: float, h: float, rot: float, colors: dict) -> None:
    app = cls.appearance
    _fill(img, _rect_pts(cx, cy, w, h, rot), colors["body"])

    if app.cap_frac > 0:
        cap = w * app.cap_frac
        for sign in (-1, 1):
            _fill(img, _rect_pts(cx, cy, cap, h, rot,
                                 sign * (w - cap) / 2, 0.0), colors["cap"])

    if app.detail == "pins":
        depth = h * 0.06 + 1.0
        for sign in (-1, 1):
            _fill(img, _rect_pts(cx, cy, w * 0.85, depth, rot,
                                 0.0, sign * (h / 2 - depth / 2)), colors["cap"])
    elif app.detail == "holes":
        n = 8
        pitch = w * 0.8 / (n - 1)
        a = math.radians(rot)
        for i in range(n):
            lx = -w * 0.4 + i * pitch
            hx = cx + lx * math.cos(a)
            hy = cy + lx * math.sin(a)
            _circle(img, hx, hy, max(1.0, h * 0.12), (40, 40, 44))

    if app.mark_style is MarkStyle.BAND:
        band = w * 0.15
        _fill(img, _rect_pts(cx, cy, band, h, rot,
                             -(w / 2) + w * 0.08 + band / 2, 0.0), colors["mark"])
    elif app.mark_style is MarkStyle.STRIPE:
        stripe = w * 0.18
        _fill(img, _rect_pts(cx, cy, stripe, h, rot,
                             -(w - stripe) / 2, 0.0), colors["mark"])
    elif app.mark_style is MarkStyle.DOT:
        a = math.radians(rot)
        lx, ly = -w * 0.28, -h * 0.28
        dx = cx + lx * math.cos(a) - ly * math.sin(a)
        dy = cy + lx * math.sin(a) + ly * math.cos(a)
        _circle(img, dx, dy, max(1.5, min(w, h) * 0.16), colors["mark"])


# ---------------------------------------------------------------------------
# board rendering

def _substrate(width_px: int, height_px: int, rng: np.random.Generator) -> np.ndarray:
    base = np.empty((height_px, width_px, 3), dtype=np.int16)
    for ch, val in enumerate(SUBSTRATE_COLOR):
        base[:, :, ch] = val
    noise = rng.integers(-SUBSTRATE_NOISE, SUBSTRATE_NOISE + 1,
                         size=(height_px, width_px, 3), dtype=np.int16)
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def _silkscreen(img: np.ndarray) -> None:
    h, w = img.shape[:2]
    inset = max(2, int(round(0.02 * min(h, w))))
    cv2.rectangle(img, (inset, inset), (w - 1 - inset, h - 1 - inset),
                  SILK_COLOR, thickness=1, lineType=cv2.LINE_8)
    r = 1
    for fx, fy in ((inset * 3, inset * 3), (w - inset * 3, h - inset * 3)):
        cv2.circle(img, (fx, fy), r, SILK_COLOR, -1, lineType=cv2.LINE_8)


def footprint_extent_mm(cls: ComponentClass, size_mm: tuple) -> tuple:
    """Body plus protruding pads, in mm, in the part's local frame.

    Mirrors the pad dispatch in _draw_pads: pin rows extend the height,
    two-terminal end caps extend the width, header holes and corner pads
    stay inside the body outline.
    """
    w, h = size_mm
    detail = cls.appearance.detail
    if detail == "pins":
        h += 2 * PAD_PROTRUSION_MM
    elif detail != "holes" and (cls.appearance.cap_frac > 0 or cls.polarized):
        w += 2 * PAD_PROTRUSION_MM
    return (w, h)


def _footprint_diag_mm(cls: ComponentClass, size_mm: tuple) -> float:
    return math.hypot(*footprint_extent_mm(cls, size_mm))


def nominal_bbox_px(comp: ComponentInstance, cls: ComponentClass,
                    pixels_per_inch: float) -> tuple:
    """Axis-aligned (x, y, w, h) footprint box in pixels for a component at
    its designed pose. Ground truth for detector accuracy checks."""
    ext = footprint_extent_mm(cls, comp.size_mm)
    hx, hy = rotated_half_extent(ext, comp.rotation_deg)
    k = pixels_per_inch / 25.4
    cx, cy = comp.center_mm
    x0 = (cx - hx) * k
    y0 = (cy - hy) * k
    return (int(round(x0)), int(round(y0)),
            int(round(2 * hx * k)), int(round(2 * hy * k)))


def _component_poses(design: BoardDesign, plan: DefectPlan,
                     library: Mapping[str, ComponentClass],
                     nuisance: NuisanceProfile,
                     rng_nuis: Optional[np.random.Generator]):
    """Resolve each component's rendered (class, pose, present) after the
    defect plan and placement nuisance. Pads always stay nominal.
    """
    defects = plan.by_refdes()
    poses = []
    for comp in design.components:
        cls = library[comp.class_id]
        entry = defects.get(comp.refdes)
        present = True
        render_cls = cls
        w_mm, h_mm = comp.size_mm
        cx_mm, cy_mm = comp.center_mm
        rot = comp.rotation_deg

        if entry is not None:
            if entry.defect is DefectType.MISSING:
                present = False
            elif entry.defect is DefectType.REVERSED_POLARITY:
                rot = (rot + 180.0) % 360.0
            elif entry.defect is DefectType.WRONG_COMPONENT:
                render_cls = library[str(entry.params["substitute_class"])]
                w_mm, h_mm = render_cls.nominal_size_mm
            elif entry.defect is DefectType.SKEWED:
                rot = (rot + float(entry.params.get("angle_deg", 0.0))) % 360.0
                off = float(entry.params.get("offset_frac", 0.0))
                if off:
                    # offset_frac is denominated in the padded-footprint
                    # diagonal: the pads define the detector's bounding box,
                    # so visibility floors hold uniformly across classes
                    diag = _footprint_diag_mm(cls, comp.size_mm)
                    d = math.radians(float(entry.params.get("offset_dir_deg", 0.0)))
                    cx_mm += off * diag * math.cos(d)
                    cy_mm += off * diag * math.sin(d)

        if rng_nuis is not None and present:
            # placement tolerance applies to every rendered body
            da = rng_nuis.uniform(-nuisance.placement_angle_jitter_deg,
                                  nuisance.placement_angle_jitter_deg)
            doff = rng_nuis.uniform(0, nuisance.placement_offset_jitter_frac)
            ddir = rng_nuis.uniform(0, 2 * math.pi)
            rot = (rot + da) % 360.0
            diag = math.hypot(*comp.size_mm)
            cx_mm += doff * diag * math.cos(ddir)
            cy_mm += doff * diag * math.sin(ddir)
        elif rng_nuis is not None:
            rng_nuis.uniform(size=3)  # keep the stream aligned across plans

        poses.append((comp, render_cls, present, cx_mm, cy_mm, rot, w_mm, h_mm))
    return poses


def _render(design: BoardDesign, plan: DefectPlan, ppi: float, seed: int,
            library: Mapping[str, ComponentClass],
            nuisance: Optional[NuisanceProfile]) -> np.ndarray:
    if not (PPI_MIN <= ppi <= PPI_MAX):
        raise RenderError(f"ppi {ppi} outside [{PPI_MIN}, {PPI_MAX}]")
    plan.validate_against(design)

    px_per_mm = ppi / MM_PER_INCH
    width_px = int(round(design.width_in * ppi))
    height_px = int(round(design.height_in * ppi))

    rng_base = np.random.default_rng([seed, 0])
    img = _substrate(width_px, height_px, rng_base)
    _silkscreen(img)

    # appearance draws happen for every component in design order so the
    # base stream is identical whatever the plan says
    appearances = []
    for comp in design.components:
        cls = library[comp.class_id]
        appearances.append({
            "body": _jitter_color(cls.appearance.body_color, rng_base,
                                  cls.appearance.body_color_jitter),
            "cap": _jitter_color(cls.appearance.cap_color, rng_base, 2),
            "mark": _jitter_color(cls.appearance.mark_color, rng_base, 2),
        })
    pad_color = _jitter_color(PAD_COLOR, rng_base, 2)

    rng_nuis = np.random.default_rng([seed, 1]) if nuisance is not None else None
    rng_defect = np.random.default_rng([seed, 2])
    poses = _component_poses(design, plan, library, nuisance or STANDARD_NUISANCE,
                             rng_nuis)

    for (comp, render_cls, present, cx_mm, cy_mm, rot, w_mm, h_mm), colors in zip(
            poses, appearances):
        _draw_pads(img, comp, library[comp.class_id], px_per_mm, pad_color)
        if not present:
            continue
        if render_cls.id != comp.class_id:
            colors = {
                "body": _jitter_color(render_cls.appearance.body_color, rng_defect,
                                      render_cls.appearance.body_color_jitter),
                "cap": _jitter_color(render_cls.appearance.cap_color, rng_defect, 2),
                "mark": _jitter_color(render_cls.appearance.mark_color, rng_defect, 2),
            }
        _draw_body(img, render_cls, cx_mm * px_per_mm, cy_mm * px_per_mm,
                   w_mm * px_per_mm, h_mm * px_per_mm, rot, colors)

    if nuisance is not None:
        img = _apply_nuisance(img, rng_nuis, nuisance)
    return img


def _apply_nuisance(img: np.ndarray, rng: np.random.Generator,
                    nuisance: NuisanceProfile) -> np.ndarray:
    out = img.astype(np.float32)
    gain = 1.0 + rng.uniform(-nuisance.gain_pct, nuisance.gain_pct) / 100.0
    out *= gain
    jx = rng.uniform(-nuisance.jitter_px, nuisance.jitter_px)
    jy = rng.uniform(-nuisance.jitter_px, nuisance.jitter_px)
    if nuisance.jitter_px > 0:
        m = np.float32([[1, 0, jx], [0, 1, jy]])
        out = cv2.warpAffine(out, m, (out.shape[1], out.shape[0]),
                             flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE)
    if nuisance.noise_sigma > 0:
        out += rng.normal(0.0, nuisance.noise_sigma, size=out.shape).astype(np.float32)
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def render_golden(design: BoardDesign, ppi: float, seed: int,
                  library: Optional[Mapping[str, ComponentClass]] = None
                  ) -> RenderedBoard:
    """Clean nominal render: every component at its designed pose, no
    nuisance variation. Deterministic per seed."""
    library = library or default_class_library()
    plan = DefectPlan(serial="golden")
    img = _render(design, plan, ppi, seed, library, nuisance=None)
    return RenderedBoard("golden", img, plan, float(ppi), seed)


def render_board(design: BoardDesign, plan: DefectPlan, ppi: float, seed: int,
                 library: Optional[Mapping[str, ComponentClass]] = None,
                 nuisance: NuisanceProfile = STANDARD_NUISANCE) -> RenderedBoard:
    """Render a sample board with its defect plan applied plus board-wide
    nuisance variation (illumination gain, sub-pixel jitter, sensor noise,
    placement tolerance) drawn from the seed."""
    library = library or default_class_library()
    img = _render(design, plan, ppi, seed, library, nuisance=nuisance)
    return RenderedBoard(plan.serial, img, plan, float(ppi), seed)


def _site_patch(cls: ComponentClass, rotation_deg: float, ppi: float,
                margin_frac: float, substrate_rgb, with_body: bool) -> np.ndarray:
    px_per_mm = ppi / MM_PER_INCH
    w_mm, h_mm = cls.nominal_size_mm
    hw, hh = rotated_half_extent((w_mm, h_mm), rotation_deg)
    cw = max(4, int(round(2 * hw * px_per_mm * (1 + 2 * margin_frac))))
    ch = max(4, int(round(2 * hh * px_per_mm * (1 + 2 * margin_frac))))
    base = substrate_rgb if substrate_rgb is not None else SUBSTRATE_COLOR
    # matched speckle statistics: live substrate spreads over several
    # histogram bins, and a flat fill would not, skewing color distances
    rng = np.random.default_rng(1729)
    noise = rng.integers(-SUBSTRATE_NOISE, SUBSTRATE_NOISE + 1,
                         size=(ch, cw, 3), dtype=np.int16)
    img = np.clip(np.asarray(base, dtype=np.int16)[None, None, :] + noise,
                  0, 255).astype(np.uint8)
    comp = ComponentInstance(
        refdes="PROTO", class_id=cls.id,
        center_mm=(cw / 2 / px_per_mm, ch / 2 / px_per_mm),
        rotation_deg=rotation_deg % 360.0, size_mm=cls.nominal_size_mm)
    _draw_pads(img, comp, cls, px_per_mm, PAD_COLOR)
    if with_body:
        colors = {"body": tuple(cls.appearance.body_color),
                  "cap": tuple(cls.appearance.cap_color),
                  "mark": tuple(cls.appearance.mark_color)}
        _draw_body(img, cls, cw / 2.0, ch / 2.0, w_mm * px_per_mm,
                   h_mm * px_per_mm, rotation_deg, colors)
    return img


def render_prototype(cls: ComponentClass, rotation_deg: float, ppi: float,
                     margin_frac: float = 0.25) -> np.ndarray:
    """Canonical noise-free patch of one component on bare substrate, pads
    included, sized like an inspection crop (bounding box plus margin).
    Used as the class prototype for labeling and the wrong-part head."""
    return _site_patch(cls, rotation_deg, ppi, margin_frac, None, True)


def render_vacant(cls: ComponentClass, rotation_deg: float, ppi: float,
                  margin_frac: float = 0.25,
                  substrate_rgb=None) -> np.ndarray:
    """The same site with the body absent: bare pad footprint on substrate.
    This is what a Missing defect exposes, so it anchors the presence head's
    empty-site reference."""
    return _site_patch(cls, rotation_deg, ppi, margin_frac, substrate_rgb, False)


# ---------------------------------------------------------------------------
# defect injection

def inject_defects(design: BoardDesign, rate: float, seed: int,
                   serial: str = "",
                   library: Optional[Mapping[str, ComponentClass]] = None,
                   types: Optional[Sequence[DefectType]] = None
                   ) -> DefectPlan:
    """Draw a defect plan: each component independently defective with
    probability ``rate``, the defect type uniform over ``types`` (default
    all four; ReversedPolarity redrawn for non-polarized classes)."""
    if not (0.0 <= rate <= 1.0):
        raise RenderError(f"rate {rate} outside [0, 1]")
    library = library or default_class_library()
    rng = np.random.default_rng(seed)
    types = list(types) if types is not None else list(DefectType)
    entries = []
    for comp in design.components:
        cls = library[comp.class_id]
        if rng.uniform() >= rate:
            continue
        while True:
            defect = types[int(rng.integers(0, len(types)))]
            if defect is not DefectType.REVERSED_POLARITY or cls.polarized:
                break
        params: dict[str, object] = {}
        if defect is DefectType.SKEWED:
            params = _sample_skew(comp, rng)
        elif defect is DefectType.WRONG_COMPONENT:
            params = {"substitute_class": _pick_substitute(comp, cls, library, rng)}
        entries.append(DefectEntry(comp.refdes, defect, params))
    return DefectPlan(serial=serial, entries=tuple(entries))


def _sample_skew(comp: ComponentInstance, rng: np.random.Generator) -> dict:
    w, h = comp.size_mm
    aspect = max(w, h) / min(w, h)
    modes = ("angle", "offset", "both") if aspect >= ELONGATED_ASPECT else ("offset", "both")
    mode = modes[int(rng.integers(0, len(modes)))]
    angle = 0.0
    offset = 0.0
    direction = 0.0
    if mode in ("angle", "both"):
        angle = float(rng.uniform(*SKEW_ANGLE_RANGE)) * (1 if rng.uniform() < 0.5 else -1)
    if mode in ("offset", "both"):
        offset = float(rng.uniform(*SKEW_OFFSET_RANGE))
        direction = float(rng.uniform(0, 360))
    return {"angle_deg": angle, "offset_frac": offset, "offset_dir_deg": direction}


def _pick_substitute(comp: ComponentInstance, cls: ComponentClass,
                     library: Mapping[str, ComponentClass],
                     rng: np.random.Generator) -> str:
    # wrong-part incidents are overwhelmingly feeder swaps, so substitutes
    # share the footprint scale; a grossly undersized part would expose the
    # pads and read as Missing, which is the verdict it deserves anyway
    diag = math.hypot(*comp.size_mm)
    candidates = []
    for cand in sorted(library.values(), key=lambda c: c.id):
        if cand.family == cls.family:
            continue
        ratio = math.hypot(*cand.nominal_size_mm) / diag
        if 0.75 <= ratio <= 1.35:
            candidates.append(cand.id)
    if not candidates:
        others = [c for c in sorted(library.values(), key=lambda c: c.id)
                  if c.family != cls.family]
        candidates = [min(others, key=lambda c: abs(math.hypot(*c.nominal_size_mm) - diag)).id]
    return candidates[int(rng.integers(0, len(candidates)))]


# ---------------------------------------------------------------------------
# corpus generation

@dataclass(frozen=True)
class CorpusManifest:
    design_id: str
    ppi: float
    seed: int
    boards: tuple[dict, ...]  # {serial, seed, plan}
    nuisance: Mapping[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "design_id": self.design_id,
            "ppi": self.ppi,
            "seed": self.seed,
            "nuisance": dict(self.nuisance),
            "boards": list(self.boards),
        }

    @staticmethod
    def from_dict(doc: Mapping) -> "CorpusManifest":
        return CorpusManifest(doc["design_id"], float(doc["ppi"]), int(doc["seed"]),
                              tuple(doc["boards"]), dict(doc.get("nuisance", {})))

    def plans(self) -> list[DefectPlan]:
        return [DefectPlan.from_dict(b["plan"]) for b in self.boards]


def manifest_json(manifest: CorpusManifest) -> str:
    return json.dumps(manifest.to_dict(), indent=2, sort_keys=True)


def load_manifest(path: str | Path) -> CorpusManifest:
    return CorpusManifest.from_dict(json.loads(Path(path).read_text()))


def gen_corpus(design: BoardDesign, n_boards: int, rate: float, seed: int,
               ppi: float, out_dir: str | Path,
               library: Optional[Mapping[str, ComponentClass]] = None,
               nuisance: NuisanceProfile = STANDARD_NUISANCE,
               plans: Optional[Sequence[DefectPlan]] = None,
               types: Optional[Sequence[DefectType]] = None) -> CorpusManifest:
    """Render a corpus of sample boards plus its ground-truth manifest.

    Writes ``boards/<serial>.png`` per board, a clean ``golden.png``, the
    design document, and ``manifest.json``. Passing explicit ``plans``
    overrides random injection (used by fixtures that need handpicked
    defects). Regenerating with the same arguments reproduces every byte.
    """
    if n_boards < 1:
        raise RenderError("n_boards must be >= 1")
    library = library or default_class_library()
    out = Path(out_dir)
    boards_dir = out / "boards"
    boards_dir.mkdir(parents=True, exist_ok=True)

    seed_rng = np.random.default_rng([seed, 10])
    board_seeds = seed_rng.integers(0, 2**31 - 1, size=n_boards)
    plan_seeds = seed_rng.integers(0, 2**31 - 1, size=n_boards)

    golden = render_golden(design, ppi, seed, library)
    save_png(out / "golden.png", golden.image)
    from .boardspec import save_board_design  # local import avoids cycle at module load
    save_board_design(design, out / "design.json")

    entries = []
    for i in range(n_boards):
        serial = f"{design.design_id}-{i:05d}"
        if plans is not None:
            plan = DefectPlan(serial=serial, entries=plans[i].entries)
        else:
            plan = inject_defects(design, rate, int(plan_seeds[i]), serial,
                                  library, types)
        board = render_board(design, plan, ppi, int(board_seeds[i]), library, nuisance)
        save_png(boards_dir / f"{serial}.png", board.image)
        entries.append({"serial": serial, "seed": int(board_seeds[i]),
                        "plan": plan.to_dict()})

    manifest = CorpusManifest(
        design_id=design.design_id, ppi=float(ppi), seed=seed,
        boards=tuple(entries),
        nuisance={
            "gain_pct": nuisance.gain_pct,
            "jitter_px": nuisance.jitter_px,
            "noise_sigma": nuisance.noise_sigma,
            "placement_angle_jitter_deg": nuisance.placement_angle_jitter_deg,
            "placement_offset_jitter_frac": nuisance.placement_offset_jitter_frac,
        },
    )
    (out / "manifest.json").write_text(manifest_json(manifest))
    return manifest
