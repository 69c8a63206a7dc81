"""Hand-crafted appearance embedding and mask geometry.

The embedding is a fixed 1080-dim vector: a 32x32 grayscale intensity
patch (1024), three 16-bin per-channel color histograms (48), and an
8-bin gradient-orientation histogram (8). Each block is L2-normalized
and weighted 0.5 / 0.3 / 0.2 before concatenation, so plain cosine
distance over the full vector is the block-weighted similarity.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from ..config import DetectionConfig, EmbeddingConfig

# Embeddings are plain float64 vectors; nothing downstream needs a wrapper.
FeatureVector = np.ndarray


def _l2(block: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(block))
    if n == 0.0:
        return block
    return block / n


def embed(crop: np.ndarray, cfg: EmbeddingConfig = EmbeddingConfig()) -> FeatureVector:
    if crop.ndim != 3 or crop.shape[2] != 3:
        raise ValueError(f"expected HxWx3 crop, got shape {crop.shape}")
    if crop.shape[0] < 2 or crop.shape[1] < 2:
        raise ValueError(f"crop too small to embed: {crop.shape}")
    side = cfg.patch_side
    gray = (0.299 * crop[..., 0] + 0.587 * crop[..., 1]
            + 0.114 * crop[..., 2]).astype(np.float32)
    patch = cv2.resize(gray, (side, side), interpolation=cv2.INTER_LINEAR)
    patch64 = patch.astype(np.float64) / 255.0

    # mean-centered so featureless (bare-substrate) patches carry no
    # structural signal and illumination gain mostly cancels
    flat = patch64.reshape(-1)
    intensity = _l2(flat - flat.mean())

    hists = []
    for ch in range(3):
        h, _ = np.histogram(crop[..., ch], bins=cfg.color_bins, range=(0, 256))
        hists.append(h)
    color = _l2(np.concatenate(hists).astype(np.float64))

    gy, gx = np.gradient(patch64)
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx)  # [-pi, pi)
    nb = cfg.gradient_bins
    idx = np.floor((ang + np.pi) / (2 * np.pi / nb)).astype(int) % nb
    grad = np.zeros(nb, dtype=np.float64)
    np.add.at(grad, idx.reshape(-1), mag.reshape(-1))
    grad = _l2(grad)

    wi, wc, wg = cfg.weights
    return np.concatenate([wi * intensity, wc * color, wg * grad])


def distance(a: FeatureVector, b: FeatureVector) -> float:
    """Cosine distance, in [0, 2]. Zero-norm inputs compare as maximally
    distant unless both are zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if np.array_equal(a, b):
        return 0.0
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 1.0
    cos = float(np.dot(a, b)) / (na * nb)
    return float(min(2.0, max(0.0, 1.0 - cos)))


def crop_box(bbox: tuple[int, int, int, int], margin_frac: float,
             image_shape: tuple[int, ...]) -> tuple[int, int, int, int]:
    """Expand an (x, y, w, h) box by margin_frac on each side, clamped to
    the image. Used both when learning reference crops and when cutting
    inspection crops, so the two line up."""
    x, y, w, h = bbox
    mx = int(round(w * margin_frac))
    my = int(round(h * margin_frac))
    x0 = min(max(0, x - mx), image_shape[1])
    y0 = min(max(0, y - my), image_shape[0])
    x1 = max(x0, min(image_shape[1], x + w + mx))
    y1 = max(y0, min(image_shape[0], y + h + my))
    return (x0, y0, x1 - x0, y1 - y0)


def cut(image: np.ndarray, box: tuple[int, int, int, int]) -> np.ndarray:
    x, y, w, h = box
    return image[y:y + h, x:x + w]


def substrate_median(crop: np.ndarray) -> np.ndarray:
    """Per-channel median of the crop's border ring: the bare-board model.
    The crop margin guarantees the ring is mostly bare substrate."""
    h, w = crop.shape[:2]
    ring = max(1, int(round(min(h, w) * 0.08)))
    border = np.concatenate([
        crop[:ring].reshape(-1, 3), crop[-ring:].reshape(-1, 3),
        crop[:, :ring].reshape(-1, 3), crop[:, -ring:].reshape(-1, 3),
    ])
    return np.median(border, axis=0)


def foreground_mask(crop: np.ndarray,
                    cfg: DetectionConfig = DetectionConfig()) -> np.ndarray:
    """Boolean mask of non-substrate pixels in a crop."""
    med = substrate_median(crop)
    diff = np.abs(crop.astype(np.int32) - med[None, None, :]).max(axis=2)
    mask = diff > 25
    if mask.any():
        opened = cv2.morphologyEx(mask.astype(np.uint8), cv2.MORPH_OPEN,
                                  np.ones((3, 3), np.uint8))
        mask = opened.astype(bool)
    return mask


def pad_mask(crop: np.ndarray,
             cfg: DetectionConfig = DetectionConfig()) -> np.ndarray:
    """Pixels with the solder-pad signature (warm hue, bright, saturated)."""
    hsv = cv2.cvtColor(crop, cv2.COLOR_RGB2HSV)
    hue = hsv[..., 0].astype(np.float64)
    dh = np.abs(hue - cfg.pad_hue_center)
    dh = np.minimum(dh, 180.0 - dh)
    return ((dh <= cfg.pad_hue_tol) & (hsv[..., 1] >= cfg.pad_sat_min)
            & (hsv[..., 2] >= cfg.pad_val_min))


def body_mask(crop: np.ndarray,
              cfg: DetectionConfig = DetectionConfig()) -> np.ndarray:
    """Foreground minus pad pixels: the component body itself. Pads sit at
    fixed positions whether or not the part moved, so geometry (centroid,
    principal angle) is measured on the body alone."""
    mask = foreground_mask(crop, cfg) & ~pad_mask(crop, cfg)
    if mask.any():
        opened = cv2.morphologyEx(mask.astype(np.uint8), cv2.MORPH_OPEN,
                                  np.ones((2, 2), np.uint8))
        mask = opened.astype(bool)
    return mask


def body_weights(crop: np.ndarray,
                 cfg: DetectionConfig = DetectionConfig()) -> np.ndarray:
    """Contrast-weighted body map for moment estimation.

    A binary mask quantizes the antialiased body boundary to whole pixels,
    which on a ten-pixel part tilts the principal axis by several degrees
    from one nuisance draw to the next. Weighting each pixel by its
    contrast lets boundary pixels contribute fractionally. Support is the
    body mask dilated by one pixel (the antialiased skirt) so pads and
    lone speckle stay out; weight saturates so bright markings do not
    dominate the shape.
    """
    med = substrate_median(crop)
    diff = np.abs(crop.astype(np.int32) - med[None, None, :]).max(axis=2)
    weights = np.clip(diff.astype(np.float64) - 12.0, 0.0, 50.0)
    support = cv2.dilate(body_mask(crop, cfg).astype(np.uint8),
                         np.ones((3, 3), np.uint8)).astype(bool)
    weights[~support] = 0.0
    weights[pad_mask(crop, cfg)] = 0.0
    return weights


def erase_body(crop: np.ndarray, support: np.ndarray,
               noise: int = 5, seed: int = 1729) -> np.ndarray:
    """Crop with the supported body region painted out as speckled
    substrate: the what-if-the-part-were-gone model, pads intact. The
    speckle matches live substrate statistics so color histograms spread
    over the same bins a real empty site would."""
    med = substrate_median(crop)
    rng = np.random.default_rng(seed)
    h, w = crop.shape[:2]
    fill = np.clip(med[None, None, :]
                   + rng.integers(-noise, noise + 1, size=(h, w, 3)),
                   0, 255).astype(np.uint8)
    grown = cv2.dilate(support.astype(np.uint8),
                       np.ones((3, 3), np.uint8)).astype(bool)
    out = crop.copy()
    out[grown] = fill[grown]
    return out


@dataclass(frozen=True)
class MaskGeometry:
    area: int
    centroid: tuple[float, float]  # (x, y) px
    angle_deg: float  # principal axis in [-90, 90)
    anisotropy: float  # 0 isotropic .. 1 line-like


def mask_geometry(mask: np.ndarray) -> MaskGeometry:
    """First and second moments of a boolean mask or a weight map. For
    float input the moments are weighted; area stays the pixel count of
    the support so population gates compare like with like."""
    if mask.dtype == bool:
        w = mask.astype(np.float64)
    else:
        w = np.asarray(mask, dtype=np.float64)
    total = float(w.sum())
    n = int(np.count_nonzero(w))
    if n == 0 or total <= 0.0:
        return MaskGeometry(0, (0.0, 0.0), 0.0, 0.0)
    ys, xs = np.nonzero(w)
    ww = w[ys, xs]
    mx = float(np.dot(xs, ww)) / total
    my = float(np.dot(ys, ww)) / total
    dx = xs - mx
    dy = ys - my
    mu20 = float(np.dot(dx * dx, ww)) / total
    mu02 = float(np.dot(dy * dy, ww)) / total
    mu11 = float(np.dot(dx * dy, ww)) / total
    spread = mu20 + mu02
    ecc = np.hypot(mu20 - mu02, 2 * mu11)
    anis = float(ecc / spread) if spread > 0 else 0.0
    angle = 0.5 * np.degrees(np.arctan2(2 * mu11, mu20 - mu02))
    if angle >= 90.0:
        angle -= 180.0
    return MaskGeometry(int(n), (mx, my), float(angle), anis)


def edge_truncated(weights: np.ndarray) -> bool:
    """True when the weight support reaches the crop border, i.e. the body
    likely continues outside the crop and its moments are biased. The two
    outermost rows count: an antialiased edge fades below the weight
    threshold before the border even when the body itself is cut."""
    support = weights > 0
    return bool(support[:2, :].any() or support[-2:, :].any()
                or support[:, :2].any() or support[:, -2:].any())


def window_geometry(crop_weights: np.ndarray, wide: np.ndarray,
                    origin: tuple[int, int],
                    cfg: DetectionConfig = DetectionConfig()
                    ) -> MaskGeometry | None:
    """Re-measure a border-clipped body inside a wider window.

    A part shoved far off its pads runs past the inspection crop, and the
    truncated mass drags the measured centroid back toward nominal. The
    wider window sees the whole body; only the connected components that
    overlap the crop's own support are kept, so a neighbouring part that
    strays into the window cannot vote. The returned centroid is in crop
    coordinates. None when nothing in the window connects to the crop.
    """
    ww = body_weights(wide, cfg)
    n_labels, labels = cv2.connectedComponents((ww > 0).astype(np.uint8))
    if n_labels <= 1:
        return None
    ox, oy = origin
    ch, cw = crop_weights.shape
    inner = labels[oy:oy + ch, ox:ox + cw]
    overlap = np.bincount(inner[crop_weights > 0], minlength=n_labels)
    overlap[0] = 0
    # a stray silkscreen fragment at the crop corner shares a component
    # with metres of board-edge silk out in the window; only labels that
    # carry a real share of the crop's own support may vote
    floor = max(4, int(0.10 * overlap.sum()))
    ids = np.nonzero(overlap >= floor)[0]
    if ids.size == 0:
        return None
    kept = np.where(np.isin(labels, ids), ww, 0.0)
    g = mask_geometry(kept)
    return MaskGeometry(g.area, (g.centroid[0] - ox, g.centroid[1] - oy),
                        g.angle_deg, g.anisotropy)


def angle_difference_deg(a: float, b: float) -> float:
    """Unsigned principal-axis difference; axes wrap at 180 degrees."""
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


def angle_signed_difference_deg(a: float, b: float) -> float:
    """Signed principal-axis difference a - b, wrapped into [-90, 90)."""
    return (a - b + 90.0) % 180.0 - 90.0


def normalize_pose(crop: np.ndarray, pivot: tuple[float, float],
                   d_angle_deg: float, dx: float, dy: float,
                   border: int = cv2.BORDER_REPLICATE) -> np.ndarray:
    """Warp a crop so its body lands on the reference pose: undo a measured
    rotation of d_angle about pivot, then translate by (dx, dy)."""
    h, w = crop.shape[:2]
    m = cv2.getRotationMatrix2D(pivot, d_angle_deg, 1.0)
    m[0, 2] += dx
    m[1, 2] += dy
    return cv2.warpAffine(crop, m, (w, h), flags=cv2.INTER_LINEAR,
                          borderMode=border)


def pose_composite(crop: np.ndarray, support: np.ndarray,
                   background: np.ndarray, pivot: tuple[float, float],
                   d_angle_deg: float, dx: float, dy: float) -> np.ndarray:
    """Move only the body: warp the supported region of ``crop`` to a new
    pose and composite it over ``background``. Solder pads never travel
    with a shoved part, so a whole-crop warp would displace them and the
    model would disagree with the live image everywhere except the body."""
    warped = normalize_pose(crop, pivot, d_angle_deg, dx, dy)
    wsup = normalize_pose(support.astype(np.uint8) * 255, pivot,
                          d_angle_deg, dx, dy,
                          border=cv2.BORDER_CONSTANT) > 127
    return np.where(wsup[..., None], warped, background)
