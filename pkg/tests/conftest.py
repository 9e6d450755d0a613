"""Shared builders for the heavier pipeline-style fixtures."""

import numpy as np
import pytest

from epsapprox.config import RegionParams
from epsapprox.dyadic import build_cube_system
from epsapprox.geometry import Hyperplane, Segment, Window, build_boundary
from epsapprox.whitney import build_regions, corona_provider, whitney_decompose


@pytest.fixture(scope="session")
def line_rc():
    """Half-plane region complex: window [-2,2], generations -3..3."""
    params = RegionParams(tau=0.05, c_w=0.25, C_w=4.0, C_d=4.0)
    E = build_boundary(
        Hyperplane(), resolution=1 / 64, window=Window((-2, -2), (2, 2))
    )
    S = build_cube_system(E, k_min=-3, k_max=3)
    W = whitney_decompose(
        E, Window((-2.0, -6.5), (2.0, 6.5)), min_side=params.c_w * 2.0**-3
    )
    corona = corona_provider(E, S, "trivial_graph", eta=0.25)
    return build_regions(S, W, corona, params)


@pytest.fixture(scope="session")
def segment_rc():
    """Bounded boundary: the segment [-1,1] on the x-axis.

    C_d kept small so the root Carleson box does not swallow the whole
    ambient window (a genuine outer region remains where phi = u).
    """
    params = RegionParams(tau=0.05, c_w=0.25, C_w=4.0, C_d=1.0)
    E = build_boundary(
        Segment(-1.0, 1.0), resolution=1 / 64, window=Window((-1, -1), (1, 1))
    )
    S = build_cube_system(E, k_min=-1, k_max=3)
    W = whitney_decompose(
        E, Window((-4.0, -3.5), (4.0, 3.5)), min_side=params.c_w * 2.0**-3
    )
    corona = corona_provider(E, S, "trivial_graph", eta=0.25)
    return build_regions(S, W, corona, params)


def certified_mask(rc, margin_frac=0.15):
    """Samples inside the window shrunk by a relative margin."""
    E = rc.S.E
    lo = np.asarray(E.window.lo)
    hi = np.asarray(E.window.hi)
    m = margin_frac * (hi - lo)
    return np.all((E.points >= lo + m) & (E.points <= hi - m), axis=1)
