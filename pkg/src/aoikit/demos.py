"""Built-in demo board designs and a random-design generator for tests
and the CLI. These are authored fixtures, not learned artifacts.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .boardspec import (
    BoardDesign,
    ComponentInstance,
    default_class_library,
    load_board_design,
)


def demo_8x8() -> BoardDesign:
    """8" x 8" demo board with 12 components covering every class."""
    lib = default_class_library()
    mk = lambda refdes, cls, x, y, rot: ComponentInstance(
        refdes, cls, (x, y), rot, lib[cls].nominal_size_mm)
    return BoardDesign(
        design_id="demo-8x8",
        name="Demo board 8x8",
        width_in=8.0,
        height_in=8.0,
        components=(
            mk("R1", "res2512", 40.0, 40.0, 0.0),
            mk("R2", "res2512", 90.0, 40.0, 90.0),
            mk("R3", "res2512", 140.0, 40.0, 0.0),
            mk("SH1", "shield_can", 178.0, 40.0, 0.0),
            mk("R4", "res2512", 40.0, 90.0, 0.0),
            mk("C1", "cap1210", 90.0, 90.0, 0.0),
            mk("C2", "cap1210", 140.0, 90.0, 90.0),
            mk("C3", "cap_elec", 40.0, 140.0, 0.0),
            mk("D1", "diode_smc", 90.0, 140.0, 0.0),
            mk("D2", "diode_smc", 140.0, 140.0, 90.0),
            mk("U1", "ic_qfp32", 70.0, 178.0, 0.0),
            mk("J1", "conn_hdr8", 130.0, 178.0, 0.0),
        ),
    )


def demo_6x6() -> BoardDesign:
    """6" x 6" demo board with 10 components; used as the second corpus
    design and as the wrong-design registration fixture."""
    lib = default_class_library()
    mk = lambda refdes, cls, x, y, rot: ComponentInstance(
        refdes, cls, (x, y), rot, lib[cls].nominal_size_mm)
    return BoardDesign(
        design_id="demo-6x6",
        name="Demo board 6x6",
        width_in=6.0,
        height_in=6.0,
        components=(
            mk("R1", "res2512", 30.0, 30.0, 0.0),
            mk("R2", "res2512", 75.0, 30.0, 90.0),
            mk("C1", "cap1210", 120.0, 30.0, 0.0),
            mk("D1", "diode_smc", 30.0, 75.0, 0.0),
            mk("U1", "ic_qfp32", 75.0, 75.0, 0.0),
            mk("C2", "cap_elec", 120.0, 75.0, 0.0),
            mk("R3", "res2512", 30.0, 120.0, 90.0),
            mk("J1", "conn_hdr8", 75.0, 120.0, 0.0),
            mk("SH1", "shield_can", 122.0, 120.0, 0.0),
            mk("D2", "diode_smc", 30.0, 140.0, 0.0),
        ),
    )


DEMO_DESIGNS = {"demo-8x8": demo_8x8, "demo-6x6": demo_6x6}


def resolve_design(name_or_path: str) -> BoardDesign:
    """Accept a builtin demo name or a path to a board-design document."""
    if name_or_path in DEMO_DESIGNS:
        return DEMO_DESIGNS[name_or_path]()
    return load_board_design(Path(name_or_path))


def random_design(design_id: str, seed: int,
                  max_components: int = 14) -> BoardDesign:
    """Random non-overlapping placement on a grid; used by the golden-
    learning accuracy suite. Deterministic per seed."""
    lib = default_class_library()
    rng = np.random.default_rng(seed)
    class_ids = sorted(lib)
    width_in = float(rng.integers(5, 10))
    height_in = float(rng.integers(5, 10))
    cell_mm = 30.0
    margin_mm = 20.0
    nx = int((width_in * 25.4 - 2 * margin_mm) // cell_mm) + 1
    ny = int((height_in * 25.4 - 2 * margin_mm) // cell_mm) + 1
    cells = [(margin_mm + i * cell_mm, margin_mm + j * cell_mm)
             for j in range(ny) for i in range(nx)]
    order = rng.permutation(len(cells))
    n = int(rng.integers(8, max_components + 1))
    n = min(n, len(cells))

    counts: dict[str, int] = {}
    comps = []
    for k in range(n):
        cx, cy = cells[order[k]]
        cls_id = class_ids[int(rng.integers(0, len(class_ids)))]
        cls = lib[cls_id]
        rot = float(rng.integers(0, 4) * 90)
        jx, jy = rng.uniform(-4, 4, size=2)
        counts[cls_id] = counts.get(cls_id, 0) + 1
        prefix = {"res2512": "R", "cap1210": "C", "cap1210b": "C", "cap_elec": "C",
                  "ic_qfp32": "U", "diode_smc": "D", "conn_hdr8": "J",
                  "shield_can": "SH"}.get(cls_id, "X")
        refdes = f"{prefix}{len(comps) + 1}"
        comps.append(ComponentInstance(refdes, cls_id, (cx + jx, cy + jy), rot,
                                       cls.nominal_size_mm))
    return BoardDesign(design_id=design_id, name=design_id,
                       width_in=width_in, height_in=height_in,
                       components=tuple(comps))
