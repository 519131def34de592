"""Marker-center extraction: HSV threshold, 3x3 open/close, largest blob, moment ellipse."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import PixelPoint

MIN_AREA = 5
_SQUARE = np.ones((3, 3), dtype=bool)


class NoMarker(LookupError):
    pass


@dataclass(frozen=True)
class HsvThresholds:
    hue_lo: float = 200.0
    hue_hi: float = 260.0
    sat_lo: float = 0.5
    val_lo: float = 0.3

    def __post_init__(self):
        if not (0 <= self.sat_lo <= 1 and 0 <= self.val_lo <= 1):
            raise ValueError("saturation/value bounds must lie in [0, 1]")
        if not (0 <= self.hue_lo < 360 and 0 <= self.hue_hi < 360):
            raise ValueError("hue bounds must lie in [0, 360)")


@dataclass(frozen=True)
class MarkerDetection:
    center: PixelPoint
    axes: tuple[float, float]  # (major, minor) semi-axes in pixels
    area: int
    confidence: float


def rgb_to_hsv(img: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hue in degrees [0, 360), saturation and value in [0, 1]."""
    rgb = img.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    sat = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.zeros_like(mx)
    hue = np.where(mx == r, ((g - b) / safe) % 6.0, hue)
    hue = np.where(mx == g, (b - r) / safe + 2.0, hue)
    hue = np.where(mx == b, (r - g) / safe + 4.0, hue)
    hue = np.where(delta > 0, (hue * 60.0) % 360.0, 0.0)
    return hue, sat, mx


def _hsv_mask(img: np.ndarray, th: HsvThresholds) -> np.ndarray:
    """Raw threshold mask. HSV is only evaluated where saturation and value can pass."""
    img = np.asarray(img)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    mx = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    # conservative prefilter in integer space; the exact test below decides
    maybe = (mx > mn) & (mx >= np.floor(th.val_lo * 255.0 - 1e-6))
    mask = np.zeros(mx.shape, dtype=bool)
    if not maybe.any():
        return mask
    hue, sat, val = rgb_to_hsv(img[maybe])
    if th.hue_lo <= th.hue_hi:
        hue_ok = (hue >= th.hue_lo) & (hue <= th.hue_hi)
    else:  # interval wraps through 0
        hue_ok = (hue >= th.hue_lo) | (hue <= th.hue_hi)
    mask[maybe] = hue_ok & (sat >= th.sat_lo) & (val >= th.val_lo)
    return mask


def _filtered_crop(img: np.ndarray, th: HsvThresholds):
    """Morphologically filtered mask restricted to a padded box around the raw hits.

    Opening then closing with a 3x3 element reaches at most two pixels beyond
    the raw hits, so a 3-pixel margin gives exactly the full-frame result.
    Returns (crop, (row0, col0)) or (None, None) when nothing matched.
    """
    raw = _hsv_mask(img, th)
    rows = np.flatnonzero(raw.any(axis=1))
    if rows.size == 0:
        return None, None
    cols = np.flatnonzero(raw.any(axis=0))
    h, w = raw.shape
    r0, r1 = max(rows[0] - 3, 0), min(rows[-1] + 4, h)
    c0, c1 = max(cols[0] - 3, 0), min(cols[-1] + 4, w)
    crop = ndimage.binary_opening(raw[r0:r1, c0:c1], structure=_SQUARE, iterations=1)
    crop = ndimage.binary_closing(crop, structure=_SQUARE, iterations=1)
    return crop, (r0, c0)


def segment(img: np.ndarray, th: HsvThresholds = HsvThresholds()) -> np.ndarray:
    """HSV threshold mask followed by a 3x3 opening and a 3x3 closing."""
    mask = np.zeros(np.asarray(img).shape[:2], dtype=bool)
    crop, origin = _filtered_crop(img, th)
    if crop is not None:
        r0, c0 = origin
        mask[r0 : r0 + crop.shape[0], c0 : c0 + crop.shape[1]] = crop
    return mask


def fit_ellipse(rows: np.ndarray, cols: np.ndarray) -> tuple[PixelPoint, tuple[float, float]]:
    """Centroid and semi-axes from second-order central moments.

    Each pixel is a unit square, which adds 1/12 to each axis variance; for a
    filled disk of radius R the variance is R^2/4, so semi-axis = 2 sqrt(var).
    """
    u0, v0 = cols.mean(), rows.mean()
    du, dv = cols - u0, rows - v0
    cov = np.array([[np.mean(du * du), np.mean(du * dv)], [np.mean(du * dv), np.mean(dv * dv)]])
    cov += np.eye(2) / 12.0
    lam = np.linalg.eigvalsh(cov)
    major, minor = 2.0 * np.sqrt(lam[1]), 2.0 * np.sqrt(lam[0])
    return PixelPoint(float(u0), float(v0)), (float(major), float(minor))


def detect_marker(img: np.ndarray, th: HsvThresholds = HsvThresholds()) -> MarkerDetection:
    crop, origin = _filtered_crop(img, th)
    if crop is None:
        raise NoMarker("no marker-colored pixels survive segmentation")
    labels, n = ndimage.label(crop, structure=_SQUARE)
    if n == 0:
        raise NoMarker("no marker-colored pixels survive segmentation")
    areas = np.bincount(labels.ravel())[1:]
    best_area = areas.max()
    if best_area < MIN_AREA:
        raise NoMarker(f"largest component has {best_area} px, below {MIN_AREA}")

    candidates = np.flatnonzero(areas == best_area) + 1
    best = None
    for lab in candidates:
        rr, cc = np.nonzero(labels == lab)
        key = (rr.mean(), cc.mean())
        if best is None or key < best[0]:
            best = (key, rr, cc)
    _, rr, cc = best
    rr, cc = rr + origin[0], cc + origin[1]
    center, axes = fit_ellipse(rr, cc)
    conf = min(1.0, max(0.0, float(best_area) / (np.pi * axes[0] * axes[1])))
    return MarkerDetection(center, axes, int(best_area), conf)
