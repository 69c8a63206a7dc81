"""Golden-board learning from a single image plus physical dimensions:
detection completeness against the generator's ground truth, refdes
assignment, persistence, and the documented failure modes."""

import time

import numpy as np
import pytest

from aoikit.boardspec import default_class_library
from aoikit.goldenlearn import (
    LearnError,
    assign_refdes,
    learn_golden,
    load_profile,
    save_profile,
)
from aoikit.inspector import features
from aoikit.synthgen import nominal_bbox_px, render_golden
from conftest import PPI


def _iou(a, b):
    ax0, ay0, aw, ah = a
    bx0, by0, bw, bh = b
    x0 = max(ax0, bx0)
    y0 = max(ay0, by0)
    x1 = min(ax0 + aw, bx0 + bw)
    y1 = min(ay0 + ah, by0 + bh)
    inter = max(0, x1 - x0) * max(0, y1 - y0)
    union = aw * ah + bw * bh - inter
    return inter / union if union else 0.0


def test_every_component_found_with_tight_boxes(demo8_design, demo8_profile):
    lib = default_class_library()
    sites = demo8_profile.ordered_profiles()
    assert len(sites) == len(demo8_design.components)
    by_refdes = {p.refdes: p for p in sites}
    for comp in demo8_design.components:
        assert comp.refdes in by_refdes
        truth = nominal_bbox_px(comp, lib[comp.class_id], PPI)
        got = by_refdes[comp.refdes].bbox_px
        assert _iou(truth, got) >= 0.5, (comp.refdes, truth, got)


def test_class_labels_mostly_correct(demo8_design, demo8_profile):
    right = sum(
        1 for comp in demo8_design.components
        if demo8_profile.profiles[comp.refdes].class_label == comp.class_id)
    assert right >= 0.8 * len(demo8_design.components)


def test_reference_embeddings_match_their_crops(demo8_profile):
    for site in demo8_profile.ordered_profiles():
        again = features.embed(site.reference_crop)
        assert np.array_equal(site.reference_embedding, again)
        # the empty-site model must be meaningfully far from the reference
        d = features.distance(site.reference_embedding,
                              site.empty_site_embedding)
        assert d > 0.05, site.refdes


def test_learning_is_deterministic(demo8_design, demo8_golden):
    a = learn_golden(demo8_golden, 8.0, 8.0, design_id="demo-8x8")
    b = learn_golden(demo8_golden, 8.0, 8.0, design_id="demo-8x8")
    assert list(a.profiles) == list(b.profiles)
    for key in a.profiles:
        pa, pb = a.profiles[key], b.profiles[key]
        assert pa.bbox_px == pb.bbox_px
        assert pa.class_label == pb.class_label
        assert np.array_equal(pa.reference_embedding, pb.reference_embedding)
        assert pa.reference_angle_deg == pb.reference_angle_deg


def test_learning_is_fast_enough(demo8_golden):
    t0 = time.perf_counter()
    learn_golden(demo8_golden, 8.0, 8.0)
    assert time.perf_counter() - t0 < 10.0


def test_substrate_only_image_rejected():
    rng = np.random.default_rng(3)
    bare = np.clip(np.asarray((34, 64, 30))[None, None, :]
                   + rng.integers(-6, 7, size=(400, 400, 3)),
                   0, 255).astype(np.uint8)
    with pytest.raises(LearnError):
        learn_golden(bare, 8.0, 8.0)


def test_wrong_aspect_dimensions_rejected(demo8_golden):
    # a square image declared as 8x4 inches implies non-square pixels
    with pytest.raises(LearnError, match="non-square pixels"):
        learn_golden(demo8_golden, 8.0, 4.0)


def test_nonpositive_dimensions_rejected(demo8_golden):
    with pytest.raises(LearnError):
        learn_golden(demo8_golden, 0.0, 8.0)


def test_tiny_image_rejected():
    img = np.zeros((20, 20, 3), dtype=np.uint8)
    with pytest.raises(LearnError):
        learn_golden(img, 8.0, 8.0)


def test_assign_refdes_requires_matching_design(demo8_golden):
    from aoikit.demos import demo_6x6

    profile = learn_golden(demo8_golden, 8.0, 8.0)
    with pytest.raises(LearnError):
        assign_refdes(profile, demo_6x6())


def test_profile_round_trips_through_disk(demo8_profile, demo8_golden, tmp_path):
    save_profile(demo8_profile, demo8_golden, tmp_path / "prof")
    loaded, golden = load_profile(tmp_path / "prof")
    assert np.array_equal(golden, demo8_golden)
    assert loaded.design_id == demo8_profile.design_id
    assert loaded.pixels_per_inch == demo8_profile.pixels_per_inch
    assert set(loaded.profiles) == set(demo8_profile.profiles)
    for key, site in demo8_profile.profiles.items():
        got = loaded.profiles[key]
        assert got.bbox_px == tuple(site.bbox_px)
        assert got.class_label == site.class_label
        assert np.array_equal(got.reference_crop, site.reference_crop)
        assert np.allclose(got.reference_embedding, site.reference_embedding)
        assert got.sensitivity == site.sensitivity
        assert got.reference_angle_deg == pytest.approx(site.reference_angle_deg)


def test_random_designs_learn_completely():
    # fresh layouts the detector has never seen: precision and recall
    # both need to hold, not just on the two demo boards
    from aoikit.demos import random_design

    lib = default_class_library()
    total = found = 0
    for ds in range(4):
        design = random_design(f"rand-{ds}", seed=900 + ds)
        golden = render_golden(design, PPI, seed=11).image
        profile = assign_refdes(
            learn_golden(golden, design.width_in, design.height_in), design)
        assert len(profile.profiles) == len(design.components)
        for comp in design.components:
            truth = nominal_bbox_px(comp, lib[comp.class_id], PPI)
            got = profile.profiles[comp.refdes].bbox_px
            total += 1
            found += _iou(truth, got) >= 0.5
    assert found == total
