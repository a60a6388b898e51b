from __future__ import annotations

import numpy as np
import pytest

from isozaki_kit.forward import align_bsd, assemble, make_bsd
from isozaki_kit.geometry import GridSpec, boundary_mesh, build_grid
from isozaki_kit.potential import PotentialSpec, sample

BUMP1 = PotentialSpec("gaussian-bump", amplitude=3.0, center=(0.4, 0.5), width=0.12)
BUMP2 = PotentialSpec("gaussian-bump", amplitude=2.0, center=(0.6, 0.55), width=0.1)


def unit_grid(n: int, d: int = 2):
    return build_grid(GridSpec(d=d, L=1.0, n=n))


@pytest.fixture(scope="session")
def bump_pair_31():
    """Two smooth bumps on the 31x31 unit-square grid with full spectra."""
    grid = unit_grid(31)
    q1, q2 = sample(BUMP1, grid), sample(BUMP2, grid)
    b1 = make_bsd(grid, q1)
    b2 = align_bsd(b1, make_bsd(grid, q2))
    return {
        "grid": grid,
        "mesh": boundary_mesh(grid),
        "q1": q1,
        "q2": q2,
        "op1": assemble(grid, q1),
        "op2": assemble(grid, q2),
        "bsd1": b1,
        "bsd2": b2,
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
