"""Shared fixtures: learned profiles and engines for the demo designs.

Learning and engine construction are deterministic, so session scope is
safe; tests that mutate profiles make their own copies.
"""

from __future__ import annotations

import pytest

from aoikit.config import DEFAULT_CONFIG
from aoikit.demos import demo_6x6, demo_8x8
from aoikit.goldenlearn import assign_refdes, learn_golden
from aoikit.inspector import InspectionEngine
from aoikit.synthgen import (
    STANDARD_NUISANCE,
    inject_defects,
    render_board,
    render_golden,
)

PPI = 50.0


@pytest.fixture(scope="session")
def demo8_design():
    return demo_8x8()


@pytest.fixture(scope="session")
def demo6_design():
    return demo_6x6()


@pytest.fixture(scope="session")
def demo8_golden(demo8_design):
    return render_golden(demo8_design, PPI, seed=7).image


@pytest.fixture(scope="session")
def demo6_golden(demo6_design):
    return render_golden(demo6_design, PPI, seed=7).image


@pytest.fixture(scope="session")
def demo8_profile(demo8_design, demo8_golden):
    profile = learn_golden(demo8_golden, demo8_design.width_in,
                           demo8_design.height_in, demo8_design.design_id,
                           DEFAULT_CONFIG)
    return assign_refdes(profile, demo8_design)


@pytest.fixture(scope="session")
def demo6_profile(demo6_design, demo6_golden):
    profile = learn_golden(demo6_golden, demo6_design.width_in,
                           demo6_design.height_in, demo6_design.design_id,
                           DEFAULT_CONFIG)
    return assign_refdes(profile, demo6_design)


@pytest.fixture(scope="session")
def demo8_engine(demo8_profile, demo8_golden):
    return InspectionEngine(demo8_profile, demo8_golden, DEFAULT_CONFIG)


@pytest.fixture(scope="session")
def demo6_engine(demo6_profile, demo6_golden):
    return InspectionEngine(demo6_profile, demo6_golden, DEFAULT_CONFIG)


def make_board(design, rate, plan_seed, render_seed, serial,
               nuisance=STANDARD_NUISANCE, types=None):
    """Render one sample board with its ground-truth plan."""
    plan = inject_defects(design, rate, plan_seed, serial, types=types)
    board = render_board(design, plan, PPI, seed=render_seed,
                         nuisance=nuisance)
    return plan, board.image
