"""Boundary geometry: sampling, distance, surface measure, ADR sweep."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epsapprox.geometry import (
    CantorSet,
    Hyperplane,
    LipschitzGraph,
    PointList,
    Window,
    box_distance,
    build_boundary,
    check_adr,
    descriptor_from_json,
    distance_to_boundary,
    surface_measure,
)

W2 = Window((-4.0, -4.0), (4.0, 4.0))


@pytest.fixture(scope="module")
def line():
    return build_boundary(Hyperplane(), resolution=0.01, window=W2)


@pytest.fixture(scope="module")
def kink():
    return build_boundary(
        LipschitzGraph("abs", 0.1), resolution=0.01, window=W2
    )


def two_lines(gap=1.0, resolution=0.01, half=4.0):
    n = int(round(2 * half / resolution)) + 1
    xs = np.linspace(-half, half, n)
    pts = np.concatenate(
        [np.column_stack([xs, np.zeros(n)]), np.column_stack([xs, np.full(n, gap)])]
    )
    w = np.full(2 * n, resolution)
    return build_boundary(
        PointList(points=tuple(map(tuple, pts)), weights=tuple(w)),
        resolution=resolution,
        window=Window((-half, -1.0), (half, gap + 1.0)),
    )


class TestBuildBoundary:
    def test_line_sample_count_and_weights(self, line):
        assert line.n_samples == 801
        assert np.allclose(line.weights, 0.01)

    def test_kink_weights_match_arclength_oracle(self, kink):
        # oracle: integral of sqrt(1+g'(x)^2) over each sample's owned segment
        # for g = 0.1|x| this is h*sqrt(1.01) away from the kink
        h = 0.01
        expected = h * np.sqrt(1.01)
        off_kink = np.abs(kink.points[:, 0]) > 2 * h
        inner = off_kink & (np.abs(np.abs(kink.points[:, 0]) - 4.0) > 2 * h)
        assert np.allclose(kink.weights[inner], expected, rtol=1e-10)

    def test_cantor_level2_corners(self):
        E = build_boundary(
            CantorSet(level=2), resolution=1 / 16, window=Window((0, 0), (1, 1))
        )
        assert E.n_samples == 16
        # level-2 corners live on the 1/16 lattice and include the extremes
        assert np.allclose(E.points * 16, np.round(E.points * 16))
        assert [0.0, 0.0] in E.points.tolist()
        assert [15 / 16, 15 / 16] in E.points.tolist()
        assert np.isclose(E.total_measure, 1.0)

    def test_lipschitz_budget_rejected(self):
        with pytest.raises(ValueError, match="budget"):
            build_boundary(LipschitzGraph("linear", 0.9), 0.01, W2, lip_budget=0.5)

    def test_descriptor_json_roundtrip(self, kink):
        d = descriptor_from_json(kink.descriptor.to_json())
        assert d == kink.descriptor


class TestDistance:
    def test_line_above(self, line):
        assert distance_to_boundary((0.5, 0.7), line) == pytest.approx(0.7)

    def test_line_below(self, line):
        assert distance_to_boundary((3.0, -2.0), line) == pytest.approx(2.0)

    def test_tilted_line_closed_form(self):
        E = build_boundary(LipschitzGraph("linear", 0.1), 0.01, W2)
        assert distance_to_boundary((0.0, 1.0), E) == pytest.approx(
            1 / np.sqrt(1.01), rel=1e-12
        )

    def test_on_boundary_degenerate(self, line):
        with pytest.warns(UserWarning, match="boundary"):
            assert distance_to_boundary((0.25, 0.0), line) == 0.0

    def test_kink_distance_matches_resolution(self, kink):
        # nearest point to (0, 1) on g=0.1|x| is found numerically
        d = distance_to_boundary((0.0, 1.0), kink)
        assert d == pytest.approx(1 / np.sqrt(1.01), rel=1e-3)

    @settings(max_examples=100, deadline=None)
    @given(
        st.tuples(
            st.floats(-3, 3), st.floats(0.05, 3), st.floats(-3, 3), st.floats(0.05, 3)
        )
    )
    def test_distance_is_lipschitz(self, xyab):
        x, y, a, b = xyab
        E = _MODULE_LINE
        d1 = distance_to_boundary((x, y), E)
        d2 = distance_to_boundary((a, b), E)
        assert abs(d1 - d2) <= np.hypot(x - a, y - b) + 1e-12


_MODULE_LINE = build_boundary(Hyperplane(), resolution=0.01, window=W2)


class TestSurfaceMeasure:
    def test_line_unit_ball(self, line):
        assert surface_measure(line, (0.0, 0.0), 1.0) == pytest.approx(2.0, abs=0.02)

    def test_line_half_ball(self, line):
        assert surface_measure(line, (0.0, 0.0), 0.5) == pytest.approx(1.0, abs=0.02)

    def test_cantor_self_similarity(self):
        E = build_boundary(
            CantorSet(level=3), resolution=1 / 64, window=Window((0, 0), (1, 1))
        )
        diam = np.sqrt(2.0)
        for j in (1, 2):
            m = surface_measure(E, (0.0, 0.0), diam * 4.0**-j)
            assert m == pytest.approx(4.0**-j, rel=1e-12)

    def test_monotone_in_radius(self, kink):
        c = kink.points[137]
        ms = [surface_measure(kink, c, r) for r in np.linspace(0.05, 2.0, 17)]
        assert all(a <= b + 1e-15 for a, b in zip(ms, ms[1:]))

    def test_additive_over_disjoint_pieces(self, line):
        # balls 4 apart on the line are disjoint: masses add
        m1 = surface_measure(line, (-2.0, 0.0), 1.0)
        m2 = surface_measure(line, (2.0, 0.0), 1.0)
        both = m1 + m2
        full = surface_measure(line, (-2.0, 0.0), 1.0) + surface_measure(
            line, (2.0, 0.0), 1.0
        )
        assert both == pytest.approx(full)


class TestADR:
    def test_line_ratios_are_two(self, line):
        rep = check_adr(line, budget=2.0)
        assert rep.passed
        # every tested ratio is 2 up to the quadrature error 2*resolution/r
        for rs, ratios in zip(rep.tested_radii, rep.ratios):
            for r, ratio in zip(rs, ratios):
                assert abs(ratio - 2.0) <= 2 * line.resolution / r + 1e-12
        r_min = min(r for rs in rep.tested_radii for r in rs)
        tol = 2 * line.resolution / r_min
        assert rep.lower_constant == pytest.approx(2.0, abs=tol)
        assert rep.upper_constant == pytest.approx(2.0, abs=tol)

    def test_graph_slope01_constants(self, kink):
        # radii large against resolution so quadrature jitter <= 1/16
        rep = check_adr(kink, budget=2.5, r_min=0.32)
        assert rep.passed
        assert 1.9 <= rep.lower_constant <= rep.upper_constant <= 2.2

    def test_two_parallel_lines_ratio(self):
        E = two_lines(gap=1.0)
        # direct count oracle at r=2 centered on one line:
        # own line contributes 2r, the other 2*sqrt(r^2-1)
        r = 2.0
        m = surface_measure(E, (0.0, 0.0), r)
        oracle = 2 * r + 2 * np.sqrt(r * r - 1)
        assert m == pytest.approx(oracle, abs=0.05)
        assert m / r == pytest.approx(3.732, abs=0.05)
        rep4 = check_adr(E, budget=4.0, r_max=3.0)
        rep3 = check_adr(E, budget=3.0, r_max=3.0)
        assert rep4.passed
        assert not rep3.passed

    def test_budget_below_one_rejected(self, line):
        with pytest.raises(ValueError):
            check_adr(line, budget=0.5)


class TestBoxDistance:
    def test_box_touching_line(self, line):
        assert box_distance((-0.5, -0.5), (0.5, 0.5), line) == 0.0

    def test_box_above_line(self, line):
        assert box_distance((0.0, 1.0), (1.0, 2.0), line) == pytest.approx(1.0)

    def test_box_to_cloud(self):
        E = build_boundary(
            CantorSet(level=1), resolution=0.25, window=Window((0, 0), (1, 1))
        )
        # cloud corners at (0,0),(3/4,0),(0,3/4),(3/4,3/4)
        assert box_distance((2.0, 2.0), (3.0, 3.0), E) == pytest.approx(
            np.hypot(2 - 0.75, 2 - 0.75)
        )
