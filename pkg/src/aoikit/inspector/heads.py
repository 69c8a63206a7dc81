"""The four defect heads.

Each head maps one precomputed crop embedding (plus, for skew, the crop's
foreground geometry) to a raw score; a component is flagged on a task when
its score exceeds base threshold * per-component sensitivity. Higher
sensitivity therefore means a laxer gate; operator FalseAlarm feedback
raises it, MissedDefect feedback lowers it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..boardspec import ALL_DEFECT_TYPES, DefectType, DigitalProfile
from ..config import HeadThresholds
from . import features

# Verdict priority when several heads fire on one component.
PRIORITY = (DefectType.MISSING, DefectType.WRONG_COMPONENT,
            DefectType.REVERSED_POLARITY, DefectType.SKEWED)


@dataclass(frozen=True)
class SiteRefs:
    """Everything a head needs about one component site, precomputed once
    when the engine is built so inspection embeds only the live crop."""

    profile: DigitalProfile
    ref_embeddings: tuple[np.ndarray, ...]  # primary first, then alternates
    empty_embedding: np.ndarray
    flip_embedding: np.ndarray | None       # None for non-polarized parts
    # 180-degree flip of the primary reference; part of the accepted-identity
    # set for the wrong-component head (a reversed correct part is still the
    # correct part, and the polarity head owns the orientation call)
    identity_flip: np.ndarray | None
    # flip crop recentered so its body pose equals the reference body pose
    flip_crop: np.ndarray
    # reference crop with the body painted out; background for re-posed
    # body composites, and what a vacated site should look like
    empty_crop: np.ndarray
    body_support: np.ndarray   # bool, reference body incl. antialiased skirt
    flip_support: np.ndarray
    other_embeddings: tuple[np.ndarray, ...]
    ref_centroid: tuple[float, float]
    ref_angle_deg: float
    ref_anisotropy: float
    ref_area: float
    diag_px: float


def missing_score(emb: np.ndarray, site: SiteRefs) -> float:
    d_ref = features.distance(emb, site.ref_embeddings[0])
    d_empty = features.distance(emb, site.empty_embedding)
    return d_ref - d_empty


def wrong_component_score(emb: np.ndarray, site: SiteRefs,
                          cfg: HeadThresholds,
                          extra_identity: tuple[np.ndarray, ...] = ()
                          ) -> tuple[float, int]:
    """Score plus the index of the nearest accepted reference (0 = primary,
    k>0 = alternate k). ``extra_identity`` carries orientation/pose variants
    of the accepted part (flip, pose-matched reference): they lower d_ref
    but never claim the matched-reference label."""
    dists = [features.distance(emb, r) for r in site.ref_embeddings]
    best = int(np.argmin(dists))
    d_ref = dists[best]
    if site.identity_flip is not None:
        d_ref = min(d_ref, features.distance(emb, site.identity_flip))
    for extra in extra_identity:
        d_ref = min(d_ref, features.distance(emb, extra))
    if site.other_embeddings:
        d_other = min(features.distance(emb, o) for o in site.other_embeddings)
    else:
        d_other = 2.0
    return d_ref - cfg.wrong_margin_ratio * d_other, best


def polarity_score(emb: np.ndarray, site: SiteRefs,
                   posed_ref: np.ndarray | None = None,
                   posed_flip: np.ndarray | None = None) -> float:
    """Positive when the crop matches the flipped reference better. When the
    live body pose deviates, each model also competes re-posed to that
    measurement, but the nominal models stay in the running: the measured
    pose on a small body is itself noisy, and dropping the did-not-move
    hypothesis lets a lucky re-posed flip outscore a clean part."""
    if site.flip_embedding is None:
        return 0.0
    d_ref = min(features.distance(emb, r) for r in site.ref_embeddings)
    d_flip = features.distance(emb, site.flip_embedding)
    if posed_ref is not None:
        d_ref = min(d_ref, features.distance(emb, posed_ref))
    if posed_flip is not None:
        d_flip = min(d_flip, features.distance(emb, posed_flip))
    return d_ref - d_flip


def skew_terms(crop_geom: features.MaskGeometry, site: SiteRefs,
               cfg: HeadThresholds) -> tuple[float, float]:
    """Offset and angle evidence, each normalized so 1.0 is the flag
    threshold. Both zero when no credible body is present (the presence
    head owns that case); the angle term is zero for bodies too isotropic
    to carry a principal axis."""
    if crop_geom.area < max(8.0, 0.15 * site.ref_area):
        return 0.0, 0.0
    cx, cy = crop_geom.centroid
    rx, ry = site.ref_centroid
    offset = math.hypot(cx - rx, cy - ry) / max(site.diag_px, 1.0)
    angle_term = 0.0
    # both measurements must carry a stable principal axis; a near-square
    # body's axis swings tens of degrees on pixel noise alone
    if (site.ref_anisotropy >= cfg.skew_anisotropy_floor
            and crop_geom.anisotropy >= cfg.skew_anisotropy_floor):
        dev = features.angle_difference_deg(crop_geom.angle_deg,
                                            site.ref_angle_deg)
        angle_term = dev / cfg.skew_angle_deg
    return offset / cfg.skew_offset_frac, angle_term


def skew_score(crop_geom: features.MaskGeometry, site: SiteRefs,
               cfg: HeadThresholds) -> float:
    """Normalized so 1.0 is the flag threshold: max of offset/limit and
    (for elongated parts) angle-deviation/limit."""
    return max(skew_terms(crop_geom, site, cfg))


def confidence(margin: float) -> float:
    """Monotone squash of a score-to-threshold margin into (0, 1)."""
    return 1.0 - math.exp(-8.0 * max(0.0, margin))
