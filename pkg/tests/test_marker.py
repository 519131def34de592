import numpy as np
import pytest
from hypothesis import given, strategies as st

from slotgoal.geometry import PixelPoint
from slotgoal.marker import HsvThresholds, NoMarker, detect_marker, fit_ellipse, rgb_to_hsv, segment
from slotgoal.render import draw_sphere_marker


def _canvas(h=240, w=320, value=40):
    return np.full((h, w, 3), value, np.uint8)


def test_black_image_has_empty_mask():
    assert not segment(np.zeros((30, 30, 3), np.uint8)).any()


def test_singleton_removed_by_opening():
    img = _canvas()
    img[50, 60] = (0, 0, 255)
    assert not segment(img).any()
    with pytest.raises(NoMarker):
        detect_marker(img)


def test_mask_area_of_disk():
    img = draw_sphere_marker(_canvas(), PixelPoint(100, 150), 8)
    assert abs(segment(img).sum() - np.pi * 64) <= 0.15 * np.pi * 64


def test_detect_clean_disk():
    det = detect_marker(draw_sphere_marker(_canvas(), PixelPoint(100.0, 150.0), 8))
    assert abs(det.center.u - 100) <= 0.5 and abs(det.center.v - 150) <= 0.5
    assert det.axes[0] >= det.axes[1] > 0
    assert det.axes[0] == pytest.approx(8, abs=0.5)
    assert 0.9 <= det.confidence <= 1.0


def test_no_marker():
    with pytest.raises(NoMarker):
        detect_marker(_canvas())


def test_largest_component_wins():
    img = draw_sphere_marker(_canvas(), PixelPoint(60, 60), np.sqrt(200 / np.pi))
    img = draw_sphere_marker(img, PixelPoint(200, 150), np.sqrt(50 / np.pi))
    det = detect_marker(img)
    assert abs(det.center.u - 60) < 1 and abs(det.center.v - 60) < 1


def test_equal_area_tie_prefers_smaller_row_major_centroid():
    img = _canvas()
    img[100:106, 200:206] = (0, 0, 255)
    img[40:46, 250:256] = (0, 0, 255)
    det = detect_marker(img)
    assert det.center.v == pytest.approx(42.5)
    img2 = _canvas()
    img2[40:46, 250:256] = (0, 0, 255)
    img2[40:46, 20:26] = (0, 0, 255)
    assert detect_marker(img2).center.u == pytest.approx(22.5)


def test_small_blob_after_morphology_is_detected():
    img = _canvas()
    img[10:13, 10:13] = (0, 0, 255)
    det = detect_marker(img)
    assert det.area == 9 and det.center == PixelPoint(11.0, 11.0)


@given(st.integers(-40, 40), st.integers(-40, 40), st.floats(3, 15), st.floats(0, 1), st.floats(0, 1))
def test_translation_equivariance(du, dv, r, fu, fv):
    c = PixelPoint(150 + fu, 120 + fv)
    a = detect_marker(draw_sphere_marker(_canvas(), c, r)).center
    b = detect_marker(draw_sphere_marker(_canvas(), PixelPoint(c.u + du, c.v + dv), r)).center
    assert abs(b.u - a.u - du) <= 0.25 and abs(b.v - a.v - dv) <= 0.25


@given(st.floats(6, 15), st.floats(0, 2 * np.pi), st.floats(0.0, 0.3))
def test_partial_occlusion_moves_center_boundedly(r, angle, frac):
    c = PixelPoint(160.3, 120.7)
    img = draw_sphere_marker(_canvas(), c, r)
    marker = np.all(img == (0, 0, 255), axis=-1)
    total = marker.sum()
    # gray half-plane occluder advanced along `angle` until it covers `frac` of the disk
    jj, ii = np.meshgrid(np.arange(img.shape[1]), np.arange(img.shape[0]))
    proj = (jj - c.u) * np.cos(angle) + (ii - c.v) * np.sin(angle)
    vals = np.sort(proj[marker])[::-1]
    k = int(np.floor(frac * total))
    if k > 0:
        cut = vals[k - 1]
        img[(proj >= cut) & marker] = (90, 90, 90)
    det = detect_marker(img)
    assert np.hypot(det.center.u - c.u, det.center.v - c.v) <= 0.35 * r


def test_off_hue_markers():
    img = draw_sphere_marker(_canvas(), PixelPoint(80, 80), 7, color=(30, 60, 220))
    assert detect_marker(img).center.u == pytest.approx(80, abs=0.5)
    cyan_ish = draw_sphere_marker(_canvas(), PixelPoint(80, 80), 7, color=(0, 200, 200))
    with pytest.raises(NoMarker):
        detect_marker(cyan_ish)
    dark = draw_sphere_marker(_canvas(), PixelPoint(80, 80), 7, color=(0, 0, 50))
    with pytest.raises(NoMarker):
        detect_marker(dark)


def test_wrapping_hue_interval_detects_red():
    img = draw_sphere_marker(_canvas(), PixelPoint(50, 70), 6, color=(255, 0, 10))
    det = detect_marker(img, HsvThresholds(hue_lo=340, hue_hi=20))
    assert det.center.v == pytest.approx(70, abs=0.5)
    with pytest.raises(NoMarker):
        detect_marker(img)


def test_threshold_validation():
    with pytest.raises(ValueError):
        HsvThresholds(sat_lo=1.5)
    with pytest.raises(ValueError):
        HsvThresholds(hue_lo=360)


def test_hsv_matches_colorsys():
    import colorsys

    rng = np.random.default_rng(3)
    px = rng.integers(0, 256, (200, 3), dtype=np.uint8)
    h, s, v = rgb_to_hsv(px[None])
    for i, (r, g, b) in enumerate(px):
        hh, ss, vv = colorsys.rgb_to_hsv(r / 255, g / 255, b / 255)
        assert h[0, i] == pytest.approx((hh * 360) % 360, abs=1e-9)
        assert s[0, i] == pytest.approx(ss, abs=1e-12)
        assert v[0, i] == pytest.approx(vv, abs=1e-12)


def test_ellipse_of_axis_aligned_rectangle():
    rr, cc = np.mgrid[0:4, 0:10]
    center, (major, minor) = fit_ellipse(rr.ravel(), cc.ravel())
    assert (center.u, center.v) == (4.5, 1.5)
    # a uniform w-wide strip has variance w^2/12, so semi-axis 2*sqrt(var) = w/sqrt(3)
    assert major == pytest.approx(10 / np.sqrt(3)) and minor == pytest.approx(4 / np.sqrt(3))


def test_deterministic():
    img = draw_sphere_marker(_canvas(), PixelPoint(33.3, 44.4), 5.5)
    assert detect_marker(img) == detect_marker(img.copy())


def _reference_segment(img, th=HsvThresholds()):
    from scipy import ndimage

    h, s, v = rgb_to_hsv(img)
    m = (h >= th.hue_lo) & (h <= th.hue_hi) & (s >= th.sat_lo) & (v >= th.val_lo)
    sq = np.ones((3, 3), bool)
    return ndimage.binary_closing(ndimage.binary_opening(m, sq), sq)


def test_segment_matches_full_frame_reference():
    rng = np.random.default_rng(5)
    for _ in range(30):
        img = rng.integers(0, 256, (60, 80, 3), dtype=np.uint8)
        for _ in range(3):
            img = draw_sphere_marker(img, PixelPoint(*rng.uniform(-5, 85, 2)), rng.uniform(0, 9))
        assert np.array_equal(segment(img), _reference_segment(img))
