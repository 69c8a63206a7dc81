"""Golden-board learning.

One defect-free board image plus its physical dimensions is everything the
platform gets. This module finds the populated component sites on that
image, labels each against the part-class library, and assembles the
per-component digital profiles the inspection engine consumes. No CAD
data, net lists, or fiducial coordinates are required.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional

import cv2
import numpy as np

from .boardspec import (
    ALL_DEFECT_TYPES,
    BoardDesign,
    ComponentClass,
    DefectType,
    AlternateReference,
    DigitalProfile,
    GoldenProfile,
    default_class_library,
)
from .config import DEFAULT_CONFIG, DetectionConfig, EngineConfig
from .imageio import load_png, save_png
from .inspector import features
from .synthgen import render_prototype, render_vacant


class LearnError(Exception):
    """Golden image unusable: too small, inconsistent dimensions, nothing
    detected, or sites that cannot be matched to a design."""


@dataclass(frozen=True)
class DetectedBox:
    bbox: tuple[int, int, int, int]  # x, y, w, h
    area_px: int


def _circular_hue_dist(h: np.ndarray, ref: float) -> np.ndarray:
    d = np.abs(h - ref)
    return np.minimum(d, 180.0 - d)


def detect_components(image: np.ndarray, ppi: float,
                      cfg: DetectionConfig = DetectionConfig()) -> list[DetectedBox]:
    """Find populated sites as statistical outliers against a substrate
    model fitted on the image border, no geometry priors.

    Boxes come back in reading order (top-to-bottom, left-to-right).
    """
    h, w = image.shape[:2]
    if min(h, w) < cfg.min_image_side_px:
        raise LearnError(f"image {w}x{h} below minimum side "
                         f"{cfg.min_image_side_px}px")
    hsv = cv2.cvtColor(image, cv2.COLOR_RGB2HSV)
    hue = hsv[..., 0].astype(np.float64)
    sat = hsv[..., 1].astype(np.float64)
    val = hsv[..., 2].astype(np.float64)

    b = max(1, int(round(cfg.border_frac * min(h, w))))
    border = np.zeros((h, w), dtype=bool)
    border[:b] = border[-b:] = True
    border[:, :b] = border[:, -b:] = True

    med_h = float(np.median(hue[border]))
    mad_h = float(np.median(_circular_hue_dist(hue[border], med_h)))
    med_v = float(np.median(val[border]))
    mad_v = float(np.median(np.abs(val[border] - med_v)))

    # hue outliers only count where saturation is meaningful; gray pixels
    # carry no stable hue and are caught by the value term instead
    dh = _circular_hue_dist(hue, med_h)
    fg = ((sat >= 40) & (dh > cfg.mad_k * max(mad_h, cfg.mad_floor_hue))) | (
        np.abs(val - med_v) > cfg.mad_k * max(mad_v, cfg.mad_floor_value))

    frac = float(fg.mean())
    if frac > cfg.max_foreground_frac:
        raise LearnError(f"foreground covers {frac:.0%} of the frame; "
                         "substrate model is not credible")

    k = cfg.open_kernel_px
    opened = cv2.morphologyEx(fg.astype(np.uint8), cv2.MORPH_OPEN,
                              np.ones((k, k), np.uint8))
    n, _, stats, _ = cv2.connectedComponentsWithStats(opened, connectivity=8)
    px_per_mm = ppi / 25.4
    min_area = max(4.0, (cfg.min_component_area_mm * px_per_mm) ** 2)
    boxes = []
    for i in range(1, n):
        x, y, bw, bh, area = (int(stats[i, j]) for j in range(5))
        if area >= min_area:
            boxes.append(DetectedBox((x, y, bw, bh), area))

    boxes = _merge_overlapping(boxes, cfg.merge_iou)
    boxes.sort(key=lambda d: (d.bbox[1], d.bbox[0]))
    return boxes


def _iou(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    ax0, ay0, aw, ah = a
    bx0, by0, bw, bh = b
    ix0 = max(ax0, bx0)
    iy0 = max(ay0, by0)
    ix1 = min(ax0 + aw, bx0 + bw)
    iy1 = min(ay0 + ah, by0 + bh)
    iw = max(0, ix1 - ix0)
    ih = max(0, iy1 - iy0)
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def _merge_overlapping(boxes: list[DetectedBox], iou_thresh: float) -> list[DetectedBox]:
    out = list(boxes)
    merged = True
    while merged:
        merged = False
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                if _iou(out[i].bbox, out[j].bbox) > iou_thresh:
                    x0 = min(out[i].bbox[0], out[j].bbox[0])
                    y0 = min(out[i].bbox[1], out[j].bbox[1])
                    x1 = max(out[i].bbox[0] + out[i].bbox[2],
                             out[j].bbox[0] + out[j].bbox[2])
                    y1 = max(out[i].bbox[1] + out[i].bbox[3],
                             out[j].bbox[1] + out[j].bbox[3])
                    area = out[i].area_px + out[j].area_px
                    keep = DetectedBox((x0, y0, x1 - x0, y1 - y0), area)
                    out = [d for k, d in enumerate(out) if k not in (i, j)]
                    out.append(keep)
                    merged = True
                    break
            if merged:
                break
    return out


# ---------------------------------------------------------------------------
# class labeling

_PROTO_CANVAS_MARGIN = 0.6  # extra substrate so the re-crop sees a clean ring


@dataclass(frozen=True)
class ClassPrototype:
    class_id: str
    rotation: int
    embedding: np.ndarray
    crop_box: tuple[int, int, int, int]  # within the prototype canvas


def class_prototypes(library: Mapping[str, ComponentClass], ppi: float,
                     config: EngineConfig = DEFAULT_CONFIG
                     ) -> dict[str, dict[int, ClassPrototype]]:
    """Canonical-render prototypes for every class at the four cardinal
    rotations: {class_id: {rotation: ClassPrototype}}.

    Each render is re-cropped through the same foreground-bbox-plus-margin
    path used for live crops, so prototype and crop framing agree.
    """
    out: dict[str, dict[int, ClassPrototype]] = {}
    margin = config.detection.crop_margin_frac
    for cls_id in sorted(library):
        cls = library[cls_id]
        out[cls_id] = {}
        for rot in (0, 90, 180, 270):
            patch = render_prototype(cls, float(rot), ppi,
                                     margin_frac=_PROTO_CANVAS_MARGIN)
            mask = features.foreground_mask(patch, config.detection)
            ys, xs = np.nonzero(mask)
            if xs.size == 0:
                bbox = (0, 0, patch.shape[1], patch.shape[0])
            else:
                bbox = (int(xs.min()), int(ys.min()),
                        int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))
            box = features.crop_box(bbox, margin, patch.shape)
            crop = np.ascontiguousarray(features.cut(patch, box))
            out[cls_id][rot] = ClassPrototype(
                class_id=cls_id, rotation=rot,
                embedding=features.embed(crop, config.embedding),
                crop_box=box)
    return out


def classify_crop(crop: np.ndarray,
                  prototypes: dict[str, dict[int, ClassPrototype]],
                  config: EngineConfig = DEFAULT_CONFIG) -> tuple[str, float, int]:
    """Nearest-prototype label with a softened-inverse-distance confidence,
    plus the best-matching cardinal rotation.

    Confidence decays with the best match distance; below the reject floor
    the crop is labeled "Other" rather than guessed.
    """
    emb = features.embed(crop, config.embedding)
    per_class = []
    for cls_id, by_rot in prototypes.items():
        d, rot = min((features.distance(emb, p.embedding), rot)
                     for rot, p in by_rot.items())
        per_class.append((d, cls_id, rot))
    per_class.sort()
    if not per_class:
        return "Other", 0.0, 0
    d1, label, rot = per_class[0]
    conf = float(np.exp(-((d1 / config.classify_conf_scale) ** 2)))
    if conf < config.classify_reject_floor:
        return "Other", conf, rot
    return label, conf, rot


# ---------------------------------------------------------------------------
# learning

def _ring_median(crop: np.ndarray) -> np.ndarray:
    h, w = crop.shape[:2]
    ring = max(1, int(round(min(h, w) * 0.08)))
    border = np.concatenate([
        crop[:ring].reshape(-1, 3), crop[-ring:].reshape(-1, 3),
        crop[:, :ring].reshape(-1, 3), crop[:, -ring:].reshape(-1, 3),
    ])
    return np.median(border, axis=0).astype(np.uint8)


def _empty_site_embedding(crop: np.ndarray, label: str, rotation: int,
                          library: Mapping[str, ComponentClass], ppi: float,
                          prototypes: dict[str, dict[int, ClassPrototype]],
                          config: EngineConfig) -> np.ndarray:
    """Embedding of this site as it would appear vacant.

    A Missing part exposes the full pad footprint, so the vacant model is
    the labeled class's pad-only render on the locally measured substrate
    color. Unlabeled sites fall back to a bare substrate patch."""
    med = _ring_median(crop)
    if label in library:
        patch = render_vacant(library[label], float(rotation), ppi,
                              margin_frac=_PROTO_CANVAS_MARGIN,
                              substrate_rgb=tuple(int(v) for v in med))
        box = prototypes[label][rotation].crop_box
        vacant = np.ascontiguousarray(features.cut(patch, box))
    else:
        vacant = np.full_like(crop, med)
    return features.embed(vacant, config.embedding)


def learn_golden(image: np.ndarray, width_in: float, height_in: float,
                 design_id: str = "golden",
                 config: EngineConfig = DEFAULT_CONFIG,
                 library: Optional[Mapping[str, ComponentClass]] = None,
                 image_ref: str = "golden.png") -> GoldenProfile:
    """Build a GoldenProfile from one defect-free image and the board's
    physical dimensions. Raises LearnError when the image cannot support
    a credible profile.
    """
    t0 = time.perf_counter()
    if width_in <= 0 or height_in <= 0:
        raise LearnError("board dimensions must be positive")
    library = library or default_class_library()
    h, w = image.shape[:2]
    ppi_x = w / width_in
    ppi_y = h / height_in
    if abs(ppi_x - ppi_y) > 0.02 * max(ppi_x, ppi_y):
        raise LearnError(
            f"non-square pixels: {ppi_x:.1f} ppi horizontal vs "
            f"{ppi_y:.1f} vertical; check the entered dimensions")
    ppi = (ppi_x + ppi_y) / 2.0

    boxes = detect_components(image, ppi, config.detection)
    if not boxes:
        raise LearnError("no components detected on the golden image")

    prototypes = class_prototypes(library, ppi, config)
    margin = config.detection.crop_margin_frac
    profiles: dict[str, DigitalProfile] = {}
    for i, det in enumerate(boxes):
        refdes = f"P{i + 1:03d}"
        box = features.crop_box(det.bbox, margin, image.shape)
        crop = np.ascontiguousarray(features.cut(image, box))
        label, _conf, rotation = classify_crop(crop, prototypes, config)
        emb = features.embed(crop, config.embedding)
        empty_emb = _empty_site_embedding(crop, label, rotation, library,
                                          ppi, prototypes, config)
        geom = features.mask_geometry(
            features.body_weights(crop, config.detection))
        profiles[refdes] = DigitalProfile(
            refdes=refdes,
            class_label=label,
            bbox_px=det.bbox,
            reference_crop=crop,
            reference_embedding=emb,
            empty_site_embedding=empty_emb,
            reference_angle_deg=geom.angle_deg,
        )

    learn_ms = (time.perf_counter() - t0) * 1000.0
    return GoldenProfile(
        design_id=design_id,
        image_ref=image_ref,
        pixels_per_inch=float(ppi),
        profiles=profiles,
        created_at=_utc_now(),
        learn_ms=learn_ms,
    )


def _utc_now() -> str:
    import datetime
    return datetime.datetime.now(datetime.timezone.utc).isoformat(
        timespec="milliseconds")


def assign_refdes(profile: GoldenProfile, design: BoardDesign) -> GoldenProfile:
    """Rename auto-numbered sites to the design's reference designators by
    best box overlap. Requires a clean one-to-one matching."""
    px_per_mm = profile.pixels_per_inch / 25.4
    design_boxes = {}
    for comp in design.components:
        x0, y0, x1, y1 = comp.bbox_mm
        design_boxes[comp.refdes] = (
            int(round(x0 * px_per_mm)), int(round(y0 * px_per_mm)),
            int(round((x1 - x0) * px_per_mm)), int(round((y1 - y0) * px_per_mm)))

    pairs = []
    for site in profile.profiles.values():
        for refdes, dbox in design_boxes.items():
            iou = _iou(site.bbox_px, dbox)
            if iou >= 0.3:
                pairs.append((iou, site.refdes, refdes))
    pairs.sort(reverse=True)
    site_to_design: dict[str, str] = {}
    used: set[str] = set()
    for _iou_v, site_ref, design_ref in pairs:
        if site_ref in site_to_design or design_ref in used:
            continue
        site_to_design[site_ref] = design_ref
        used.add(design_ref)

    unmatched_sites = sorted(set(profile.profiles) - set(site_to_design))
    unmatched_design = sorted(set(design_boxes) - used)
    if unmatched_sites or unmatched_design:
        raise LearnError(
            f"cannot align detected sites to design {design.design_id}: "
            f"unmatched sites {unmatched_sites}, "
            f"unmatched design components {unmatched_design}")

    renamed = {}
    for site_ref, design_ref in site_to_design.items():
        renamed[design_ref] = replace(profile.profiles[site_ref],
                                      refdes=design_ref)
    return GoldenProfile(
        design_id=design.design_id, image_ref=profile.image_ref,
        pixels_per_inch=profile.pixels_per_inch, profiles=renamed,
        created_at=profile.created_at, learn_ms=profile.learn_ms,
        applied_batches=profile.applied_batches)


# ---------------------------------------------------------------------------
# persistence

def save_profile(profile: GoldenProfile, golden_image: np.ndarray,
                 out_dir: str | Path) -> Path:
    """Write profile.json plus the golden image and all reference crops.
    Embeddings are serialized as JSON float lists, which round-trip
    exactly; crops go to lossless PNG."""
    out = Path(out_dir)
    crops = out / "crops"
    crops.mkdir(parents=True, exist_ok=True)
    save_png(out / "golden.png", golden_image)

    doc: dict = {
        "design_id": profile.design_id,
        "image_ref": "golden.png",
        "pixels_per_inch": profile.pixels_per_inch,
        "created_at": profile.created_at,
        "learn_ms": profile.learn_ms,
        "applied_batches": list(profile.applied_batches),
        "profiles": {},
    }
    for refdes, p in sorted(profile.profiles.items()):
        save_png(crops / f"{refdes}.png", p.reference_crop)
        alts = []
        for k, alt in enumerate(p.alternates):
            save_png(crops / f"{refdes}.alt{k}.png", alt.crop)
            alts.append({"crop_ref": f"crops/{refdes}.alt{k}.png",
                         "embedding": [float(v) for v in alt.embedding]})
        doc["profiles"][refdes] = {
            "class_label": p.class_label,
            "bbox_px": list(p.bbox_px),
            "crop_ref": f"crops/{refdes}.png",
            "reference_embedding": [float(v) for v in p.reference_embedding],
            "empty_site_embedding": [float(v) for v in p.empty_site_embedding],
            "reference_angle_deg": p.reference_angle_deg,
            "alternates": alts,
            "sensitivity": {t.value: p.sensitivity[t] for t in ALL_DEFECT_TYPES},
        }
    (out / "profile.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    return out / "profile.json"


def load_profile(profile_dir: str | Path) -> tuple[GoldenProfile, np.ndarray]:
    base = Path(profile_dir)
    doc = json.loads((base / "profile.json").read_text())
    golden = load_png(base / doc["image_ref"])
    profiles = {}
    for refdes, pd in doc["profiles"].items():
        crop = load_png(base / pd["crop_ref"])
        alts = tuple(
            AlternateReference(crop=load_png(base / a["crop_ref"]),
                               embedding=np.array(a["embedding"], dtype=np.float64))
            for a in pd["alternates"])
        profiles[refdes] = DigitalProfile(
            refdes=refdes,
            class_label=pd["class_label"],
            bbox_px=tuple(int(v) for v in pd["bbox_px"]),
            reference_crop=crop,
            reference_embedding=np.array(pd["reference_embedding"], dtype=np.float64),
            empty_site_embedding=np.array(pd["empty_site_embedding"], dtype=np.float64),
            reference_angle_deg=float(pd["reference_angle_deg"]),
            alternates=alts,
            sensitivity={DefectType(k): float(v)
                         for k, v in pd["sensitivity"].items()},
        )
    profile = GoldenProfile(
        design_id=doc["design_id"], image_ref=doc["image_ref"],
        pixels_per_inch=float(doc["pixels_per_inch"]), profiles=profiles,
        created_at=doc["created_at"], learn_ms=float(doc["learn_ms"]),
        applied_batches=tuple(doc["applied_batches"]))
    return profile, golden
