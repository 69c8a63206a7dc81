"""Board inspection: registration, crop extraction, and the four heads
run per component against the learned digital profiles.
"""

from __future__ import annotations

import datetime
import math
import time
import uuid
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from ..boardspec import (
    ALL_DEFECT_TYPES,
    ComponentClass,
    DefectType,
    DigitalProfile,
    GoldenProfile,
    default_class_library,
)
from ..config import DEFAULT_CONFIG, EngineConfig
from . import features, heads
from .registration import RegistrationFailure, Transform, apply_transform, register


@dataclass(frozen=True)
class BoardMeta:
    serial: str
    design_id: str = ""
    work_order: str = ""
    line_id: str = ""


@dataclass(frozen=True)
class ComponentVerdict:
    refdes: str
    defect: Optional[DefectType]  # None = pass
    confidence: float
    scores: Mapping[DefectType, float]
    thresholds: Mapping[DefectType, float]
    matched_reference: str  # "primary" or "alternate:<k>"

    def to_dict(self) -> dict:
        return {
            "refdes": self.refdes,
            "defect": self.defect.value if self.defect else None,
            "confidence": self.confidence,
            "scores": {t.value: s for t, s in self.scores.items()},
            "thresholds": {t.value: s for t, s in self.thresholds.items()},
            "matched_reference": self.matched_reference,
        }

    @staticmethod
    def from_dict(d: dict) -> "ComponentVerdict":
        return ComponentVerdict(
            refdes=d["refdes"],
            defect=DefectType(d["defect"]) if d["defect"] else None,
            confidence=float(d["confidence"]),
            scores={DefectType(k): float(v) for k, v in d["scores"].items()},
            thresholds={DefectType(k): float(v)
                        for k, v in d["thresholds"].items()},
            matched_reference=d["matched_reference"],
        )


@dataclass(frozen=True)
class InspectionRecord:
    record_id: str
    serial: str
    design_id: str
    work_order: str
    line_id: str
    timestamp: str  # ISO-8601 UTC
    model_version: str
    status: str  # "ok" | "needs_review"
    registration: dict
    verdicts: Mapping[str, ComponentVerdict]
    note: str = ""
    cycle_ms: float = 0.0
    image_ref: str = ""

    @property
    def defective(self) -> bool:
        return any(v.defect is not None for v in self.verdicts.values())

    @property
    def defect_count(self) -> int:
        return sum(1 for v in self.verdicts.values() if v.defect is not None)

    def summary(self) -> dict:
        return {
            "record_id": self.record_id,
            "serial": self.serial,
            "design_id": self.design_id,
            "work_order": self.work_order,
            "line_id": self.line_id,
            "timestamp": self.timestamp,
            "model_version": self.model_version,
            "status": self.status,
            "defective": self.defective,
            "defect_count": self.defect_count,
            "defects": {r: v.defect.value for r, v in self.verdicts.items()
                        if v.defect is not None},
            "cycle_ms": self.cycle_ms,
            "image_ref": self.image_ref,
        }

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "serial": self.serial,
            "design_id": self.design_id,
            "work_order": self.work_order,
            "line_id": self.line_id,
            "timestamp": self.timestamp,
            "model_version": self.model_version,
            "status": self.status,
            "registration": dict(self.registration),
            "verdicts": {r: v.to_dict() for r, v in self.verdicts.items()},
            "note": self.note,
            "cycle_ms": self.cycle_ms,
            "image_ref": self.image_ref,
        }

    @staticmethod
    def from_dict(d: dict) -> "InspectionRecord":
        return InspectionRecord(
            record_id=d["record_id"], serial=d["serial"],
            design_id=d["design_id"], work_order=d["work_order"],
            line_id=d["line_id"], timestamp=d["timestamp"],
            model_version=d["model_version"], status=d["status"],
            registration=dict(d["registration"]),
            verdicts={r: ComponentVerdict.from_dict(v)
                      for r, v in d["verdicts"].items()},
            note=d.get("note", ""),
            cycle_ms=float(d.get("cycle_ms", 0.0)),
            image_ref=d.get("image_ref", ""),
        )


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(
        timespec="milliseconds")


class InspectionEngine:
    """Holds the golden image plus per-site caches so that inspecting a
    board costs one registration and one embedding per component."""

    def __init__(self, profile: GoldenProfile, golden_image: np.ndarray,
                 config: EngineConfig = DEFAULT_CONFIG,
                 library: Optional[Mapping[str, ComponentClass]] = None):
        # imported here, not at module top: goldenlearn pulls in
        # inspector.features, so a top-level import would be circular
        from ..goldenlearn import class_prototypes

        self.profile = profile
        self.golden = golden_image
        self.config = config
        self.library = library or default_class_library()
        self.model_version = config.version_string()
        self._prototypes = class_prototypes(self.library,
                                            profile.pixels_per_inch, config)
        self._sites: dict[str, heads.SiteRefs] = {}
        for p in profile.profiles.values():
            self._sites[p.refdes] = self._build_site(p)

    # site construction -----------------------------------------------------

    def _build_site(self, p: DigitalProfile) -> heads.SiteRefs:
        cfg = self.config
        refs = (np.asarray(p.reference_embedding),
                *(np.asarray(a.embedding) for a in p.alternates))
        cls = self.library.get(p.class_label)
        ref_weights = features.body_weights(p.reference_crop, cfg.detection)
        geom = features.mask_geometry(ref_weights)

        # flip model: rotate the reference crop 180 degrees, then shift so
        # the flipped body sits exactly where the reference body sits; the
        # crop frame is rarely symmetric about the body, and an off-center
        # flip model would penalize genuinely reversed parts
        flip_crop = np.ascontiguousarray(np.rot90(p.reference_crop, 2))
        fgeom = features.mask_geometry(
            features.body_weights(flip_crop, cfg.detection))
        dx = geom.centroid[0] - fgeom.centroid[0]
        dy = geom.centroid[1] - fgeom.centroid[1]
        if math.hypot(dx, dy) > 0.25:
            flip_crop = features.normalize_pose(
                flip_crop, fgeom.centroid, 0.0, dx, dy)
        flip = features.embed(flip_crop, cfg.embedding)
        polarized = cls is not None and cls.polarized
        body_support = ref_weights > 0
        flip_support = features.body_weights(flip_crop, cfg.detection) > 0
        empty_crop = features.erase_body(p.reference_crop, body_support)

        others = []
        for cls_id, by_rot in self._prototypes.items():
            if cls_id == p.class_label:
                continue
            others.extend(proto.embedding for proto in by_rot.values())
        x, y, w, h = p.bbox_px
        return heads.SiteRefs(
            profile=p,
            ref_embeddings=refs,
            empty_embedding=np.asarray(p.empty_site_embedding),
            flip_embedding=flip if polarized else None,
            identity_flip=flip,
            flip_crop=flip_crop,
            empty_crop=empty_crop,
            body_support=body_support,
            flip_support=flip_support,
            other_embeddings=tuple(others),
            ref_centroid=geom.centroid,
            ref_angle_deg=geom.angle_deg,
            ref_anisotropy=geom.anisotropy,
            ref_area=float(geom.area),
            diag_px=math.hypot(w, h),
        )

    def update_profile(self, profile: GoldenProfile) -> None:
        """Adopt an adapted/extended profile set (feedback application)."""
        self.profile = profile
        for p in profile.profiles.values():
            cached = self._sites.get(p.refdes)
            if cached is None or cached.profile is not p:
                self._sites[p.refdes] = self._build_site(p)

    # inspection ------------------------------------------------------------

    def register(self, image: np.ndarray) -> Transform:
        return register(self.golden, image, self.config.registration)

    def _posed_models(self, emb: np.ndarray, geom: features.MaskGeometry,
                      site: heads.SiteRefs
                      ) -> tuple[tuple[np.ndarray, ...],
                                 Optional[np.ndarray], Optional[np.ndarray],
                                 Optional[np.ndarray]]:
        """Reference and flip models warped to the measured live body pose.

        A displaced part should match its own reference as placed, so the
        posed embeddings join the accepted-identity set and carry the
        polarity comparison; pads stay board-anchored in both images, which
        warping the live crop could not achieve. For bodies too isotropic
        to yield a principal angle, a small rotation fan stands in for the
        unmeasurable tilt. Returns ``(identity_extras, posed_ref, pol_ref,
        posed_flip)``, all empty/None when the pose is near nominal or the
        body mass is not credible; ``posed_ref`` is the best achievable
        reference fit, ``pol_ref``/``posed_flip`` the paired models for
        the polarity comparison.

        The polarity pair comes from the fan only, never from the pattern
        search: the walk optimizes raw appearance fit, and a model free to
        walk will chase the other model's part, washing out the
        orientation margin in both directions.
        """
        if geom.area < max(8.0, 0.3 * site.ref_area):
            return (), None, None, None
        thr = self.config.thresholds
        angle_known = (site.ref_anisotropy >= thr.skew_anisotropy_floor
                       and geom.anisotropy >= thr.skew_anisotropy_floor)
        d_ang = 0.0
        if angle_known:
            d_ang = features.angle_signed_difference_deg(
                site.ref_angle_deg, geom.angle_deg)
        dx = geom.centroid[0] - site.ref_centroid[0]
        dy = geom.centroid[1] - site.ref_centroid[1]
        if abs(d_ang) < 1.0 and math.hypot(dx, dy) < 0.9:
            return (), None, None, None

        ecfg = self.config.embedding
        ref_crop = site.profile.reference_crop

        def posed(crop: np.ndarray, support: np.ndarray, ang: float,
                  px: float, py: float) -> np.ndarray:
            return features.embed(
                features.pose_composite(crop, support, site.empty_crop,
                                        site.ref_centroid, ang, px, py),
                ecfg)

        # the measured pose carries roughly a pixel and a degree of
        # uncertainty on small or clipped bodies, so the identity test
        # tolerates a jitter fan around it; reference and flip each keep
        # their own best fit so the polarity contest stays symmetric
        fan = [(d_ang, dx, dy)]
        angle_steps = (-1.5, 1.5) if abs(d_ang) < 6.0 else (-5.0, -1.5, 1.5, 5.0)
        for da in angle_steps:
            fan.append((d_ang + da, dx, dy))
        for dj in (-0.75, 0.75):
            fan.append((d_ang, dx + dj, dy))
            fan.append((d_ang, dx, dy + dj))
        if not angle_known and math.hypot(dx, dy) >= 1.5:
            # no measurable axis: stand in a rotation fan for the tilt
            for k in range(1, 7):
                fan.append((4.0 * k, dx, dy))
                fan.append((-4.0 * k, dx, dy))

        ref_fan = [(features.distance(emb, e), p, e)
                   for p, e in ((p, posed(ref_crop, site.body_support, *p))
                                for p in fan)]
        extras = [e for _, _, e in ref_fan]
        d0, pose, posed_ref = min(ref_fan, key=lambda c: c[0])
        pol_ref = posed_ref
        if d0 >= 0.06:
            # pattern search from the best fan seed: the measured centroid
            # can sit a few pixels off on parts whose body slides over
            # their own pads, and a fixed fan cannot absorb that; a clean
            # jittered part already fits some fan pose, so only a poor fit
            # is worth the walk
            for step_px, step_deg in ((2.0, 4.0), (1.0, 2.0), (0.5, 1.0)):
                improved = True
                while improved:
                    improved = False
                    a0, x0, y0 = pose
                    for p in ((a0 + step_deg, x0, y0),
                              (a0 - step_deg, x0, y0),
                              (a0, x0 + step_px, y0),
                              (a0, x0 - step_px, y0),
                              (a0, x0, y0 + step_px),
                              (a0, x0, y0 - step_px)):
                        e = posed(ref_crop, site.body_support, *p)
                        d = features.distance(emb, e)
                        extras.append(e)
                        if d < d0:
                            d0, pose, posed_ref = d, p, e
                            improved = True

        posed_flip = None
        if site.flip_embedding is not None:
            flip_fan = [(features.distance(emb, e), e)
                        for e in (posed(site.flip_crop, site.flip_support,
                                        *p) for p in fan)]
            extras.extend(e for _, e in flip_fan)
            # the flip competes with its own best fan fit, but never with
            # a walked pose: the walk optimizes appearance and would let
            # either model chase the other's part
            posed_flip = min(flip_fan, key=lambda c: c[0])[1]
        return tuple(extras), posed_ref, pol_ref, posed_flip

    def inspect_component(self, crop: np.ndarray, profile: DigitalProfile,
                          wide: Optional[np.ndarray] = None,
                          wide_origin: tuple[int, int] = (0, 0)
                          ) -> ComponentVerdict:
        site = self._sites.get(profile.refdes)
        if site is None or site.profile is not profile:
            site = self._build_site(profile)
            self._sites[profile.refdes] = site
        cfg = self.config.thresholds

        # geometry first: the skew decision uses the live pose, and the
        # appearance heads also compare against reference models re-posed
        # to that measurement, so a displaced-but-correct part is judged on
        # identity, not on where it sits
        weights = features.body_weights(crop, self.config.detection)
        geom = features.mask_geometry(weights)
        if (wide is not None and geom.area >= 8
                and features.edge_truncated(weights)):
            refined = features.window_geometry(
                weights, wide, wide_origin, self.config.detection)
            if refined is not None:
                geom = refined
        emb = features.embed(crop, self.config.embedding)
        extras, posed_ref, pol_ref, posed_flip = self._posed_models(
            emb, geom, site)

        wrong, best_ref = heads.wrong_component_score(emb, site, cfg, extras)
        offset_term, angle_term = heads.skew_terms(geom, site, cfg)
        skew = max(offset_term, angle_term)
        if angle_term > offset_term and posed_ref is not None:
            # believe a measured rotation only if the appearance agrees:
            # the reference re-posed to it must fit better than nominal
            d_nom = min(features.distance(emb, r)
                        for r in site.ref_embeddings)
            d_posed = features.distance(emb, posed_ref)
            if d_posed > d_nom - cfg.pose_verify_margin:
                skew = offset_term
        scores = {
            DefectType.MISSING: heads.missing_score(emb, site),
            DefectType.WRONG_COMPONENT: wrong,
            DefectType.REVERSED_POLARITY: heads.polarity_score(
                emb, site, pol_ref, posed_flip),
            DefectType.SKEWED: skew,
        }
        thresholds = {t: cfg.base(t) * profile.sensitivity[t]
                      for t in ALL_DEFECT_TYPES}

        # a site either holds a credible body mass or it does not: vacant
        # sites can only be Missing, populated sites can be anything else
        populated = geom.area >= cfg.presence_area_frac * site.ref_area
        if populated:
            applicable = [t for t in heads.PRIORITY
                          if t is not DefectType.MISSING
                          and not (t is DefectType.REVERSED_POLARITY
                                   and site.flip_embedding is None)]
        else:
            applicable = [DefectType.MISSING]
        defect = None
        for task in applicable:
            if scores[task] > thresholds[task]:
                defect = task
                break

        if defect is not None:
            margin = scores[defect] - thresholds[defect]
        else:
            margin = min(thresholds[t] - scores[t] for t in applicable)
        # the record carries only the heads that actually ran here, so a
        # stored verdict can be replayed against any candidate thresholds
        return ComponentVerdict(
            refdes=profile.refdes,
            defect=defect,
            confidence=heads.confidence(margin),
            scores={t: scores[t] for t in applicable},
            thresholds={t: thresholds[t] for t in applicable},
            matched_reference="primary" if best_ref == 0
                              else f"alternate:{best_ref}",
        )

    def inspect_board(self, image: np.ndarray, meta: BoardMeta,
                      timestamp: Optional[str] = None,
                      image_ref: str = "") -> InspectionRecord:
        t0 = time.perf_counter()
        base = {
            "record_id": str(uuid.uuid4()),
            "serial": meta.serial,
            "design_id": meta.design_id or self.profile.design_id,
            "work_order": meta.work_order,
            "line_id": meta.line_id,
            "timestamp": timestamp or _utc_now(),
            "model_version": self.model_version,
            "image_ref": image_ref,
        }
        try:
            t = self.register(image)
        except RegistrationFailure as e:
            return InspectionRecord(
                status="needs_review",
                registration={"ncc": e.ncc, "error": str(e)},
                verdicts={},
                note="registration failed; board routed to operator review",
                cycle_ms=(time.perf_counter() - t0) * 1000.0,
                **base)

        aligned = apply_transform(image, t)
        det = self.config.detection
        verdicts = {}
        for p in self.profile.ordered_profiles():
            box = features.crop_box(p.bbox_px, det.crop_margin_frac,
                                    aligned.shape)
            wbox = features.crop_box(p.bbox_px, det.geometry_margin_frac,
                                     aligned.shape)
            crop = np.ascontiguousarray(features.cut(aligned, box))
            wide = np.ascontiguousarray(features.cut(aligned, wbox))
            verdicts[p.refdes] = self.inspect_component(
                crop, p, wide, (box[0] - wbox[0], box[1] - wbox[1]))
        return InspectionRecord(
            status="ok",
            registration={"dx_px": t.dx_px, "dy_px": t.dy_px,
                          "angle_deg": t.angle_deg, "ncc": t.ncc},
            verdicts=verdicts,
            cycle_ms=(time.perf_counter() - t0) * 1000.0,
            **base)
