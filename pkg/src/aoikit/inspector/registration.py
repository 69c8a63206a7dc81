"""Board-to-golden registration by normalized cross-correlation.

Coarse search runs on 1/8-scale grayscale over a +/-16 px (coarse-pixel)
translation window and a small set of rotation candidates; the winner is
refined at full scale. Translations are found with TM_CCOEFF_NORMED over
a replicate-padded reference so the full frame contributes to the score.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from ..config import RegistrationConfig


class RegistrationFailure(Exception):
    """Best correlation below the acceptance floor; sample does not match
    the golden reference (wrong design, empty conveyor, gross defect)."""

    def __init__(self, ncc: float, message: str | None = None):
        self.ncc = ncc
        super().__init__(message or f"registration failed: best NCC {ncc:.3f}")


@dataclass(frozen=True)
class Transform:
    """Rigid alignment applied to a sample to lay it over the golden
    image: rotate by angle_deg about the image center, then translate."""

    dx_px: float
    dy_px: float
    angle_deg: float
    ncc: float

    def matrix(self, shape: tuple[int, ...]) -> np.ndarray:
        h, w = shape[:2]
        m = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), self.angle_deg, 1.0)
        m[0, 2] += self.dx_px
        m[1, 2] += self.dy_px
        return m


def apply_transform(image: np.ndarray, t: Transform) -> np.ndarray:
    h, w = image.shape[:2]
    return cv2.warpAffine(image, t.matrix(image.shape), (w, h),
                          flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE)


def _gray(image: np.ndarray) -> np.ndarray:
    if image.ndim == 3:
        return (0.299 * image[..., 0] + 0.587 * image[..., 1]
                + 0.114 * image[..., 2]).astype(np.float32)
    return image.astype(np.float32)


def _rotate(gray: np.ndarray, angle_deg: float) -> np.ndarray:
    if angle_deg == 0.0:
        return gray
    h, w = gray.shape
    m = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), angle_deg, 1.0)
    return cv2.warpAffine(gray, m, (w, h), flags=cv2.INTER_LINEAR,
                          borderMode=cv2.BORDER_REPLICATE)


def _parabolic_offset(n_minus: float, n_zero: float, n_plus: float) -> float:
    """Sub-sample offset of a parabola fitted through three equally spaced
    correlation samples with the middle one maximal. Clamped to half a step."""
    den = n_minus - 2.0 * n_zero + n_plus
    if den >= -1e-9:
        return 0.0
    return float(np.clip((n_minus - n_plus) / (2.0 * den), -0.5, 0.5))


def _search_translation(ref: np.ndarray, mov: np.ndarray, radius: int,
                        around: tuple[int, int] = (0, 0)) -> tuple[float, float, float]:
    """Best translation of mov onto ref within `radius` of `around`, by NCC
    with parabolic subpixel interpolation at the peak. Returns (dx, dy, ncc)."""
    ax, ay = around
    pad = radius + max(abs(ax), abs(ay))
    padded = cv2.copyMakeBorder(ref, pad, pad, pad, pad, cv2.BORDER_REPLICATE)
    th, tw = mov.shape
    y0 = pad + ay - radius
    x0 = pad + ax - radius
    window = padded[y0:y0 + th + 2 * radius, x0:x0 + tw + 2 * radius]
    res = cv2.matchTemplate(window, mov, cv2.TM_CCOEFF_NORMED)
    _, best, _, loc = cv2.minMaxLoc(res)
    lx, ly = loc
    fx, fy = float(lx), float(ly)
    if 0 < lx < res.shape[1] - 1:
        fx += _parabolic_offset(res[ly, lx - 1], res[ly, lx], res[ly, lx + 1])
    if 0 < ly < res.shape[0] - 1:
        fy += _parabolic_offset(res[ly - 1, lx], res[ly, lx], res[ly + 1, lx])
    return ax - radius + fx, ay - radius + fy, float(best)


def register(golden: np.ndarray, sample: np.ndarray,
             cfg: RegistrationConfig = RegistrationConfig()) -> Transform:
    if golden.shape[:2] != sample.shape[:2]:
        raise RegistrationFailure(
            0.0, f"frame size mismatch: golden {golden.shape[:2]} vs "
                 f"sample {sample.shape[:2]}")
    g = _gray(golden)
    s = _gray(sample)
    # a flat frame (dead camera, no board) defeats NCC normalization and
    # scores 1.0 against anything; reject before correlating
    if float(s.std()) < 1.0 or float(g.std()) < 1.0:
        raise RegistrationFailure(0.0, "blank frame: no structure to align")
    scale = cfg.coarse_scale
    small = (max(1, g.shape[1] // scale), max(1, g.shape[0] // scale))
    g8 = cv2.resize(g, small, interpolation=cv2.INTER_AREA)
    s8 = cv2.resize(s, small, interpolation=cv2.INTER_AREA)

    n_steps = int(round(cfg.rotation_range_deg / cfg.rotation_step_deg))
    angles = [i * cfg.rotation_step_deg for i in range(-n_steps, n_steps + 1)]

    by_angle = {}  # angle -> (ncc, dx8, dy8)
    for angle in angles:
        rot = _rotate(s8, angle)
        dx, dy, ncc = _search_translation(g8, rot, cfg.coarse_range_px)
        by_angle[angle] = (ncc, dx, dy)

    # the eighth-scale image cannot discriminate neighboring rotation steps
    # (a half-degree moves its edges a fraction of a coarse pixel), so the
    # winner and its step-neighbors are re-scored at full scale
    coarse_best = max(by_angle, key=lambda a: by_angle[a][0])
    idx = angles.index(coarse_best)
    candidates = angles[max(0, idx - 2):idx + 3]
    full = {}
    for angle in candidates:
        _, dx8, dy8 = by_angle[angle]
        anchor = (int(round(dx8 * scale)), int(round(dy8 * scale)))
        rot_full = _rotate(s, angle)
        full[angle] = _search_translation(
            g, rot_full, cfg.refine_range_px, around=anchor)

    angle = max(full, key=lambda a: full[a][2])
    dx, dy, ncc = full[angle]
    # quantized rotation leaves up to step/2 of residual tilt, which at the
    # board edge is more misalignment than a small part can absorb; fit a
    # parabola through the neighboring full-scale scores to recover it
    lo = angle - cfg.rotation_step_deg
    hi = angle + cfg.rotation_step_deg
    if lo in full and hi in full:
        sub = cfg.rotation_step_deg * _parabolic_offset(
            full[lo][2], ncc, full[hi][2])
        if abs(sub) > 1e-6:
            angle += sub
            rot_full = _rotate(s, angle)
            dx, dy, ncc = _search_translation(
                g, rot_full, cfg.refine_range_px,
                around=(int(round(dx)), int(round(dy))))

    if ncc < cfg.ncc_floor:
        raise RegistrationFailure(ncc)
    return Transform(dx_px=float(dx), dy_px=float(dy),
                     angle_deg=float(angle), ncc=ncc)
