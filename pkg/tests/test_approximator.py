"""Approximant construction: cells, values, evaluation, TV, certification."""

import numpy as np
import pytest

from epsapprox.approximator import (
    build_global_approximant,
    build_local_approximant,
    eval_approximant,
    find_alpha0,
    nontangential_deviation,
    order_good_cubes,
    total_variation,
    verify_approximation,
)
from epsapprox.carleson import packing_constant
from epsapprox.functionals import FunctionalSuite
from epsapprox.harmonic import Constant, Coordinate, PoissonIndicator
from epsapprox.stopping import generation_cubes, oscillation_cubes

from conftest import certified_mask


def make_state(rc, u, eps, far=None):
    fs = FunctionalSuite(rc, u, far_ball_factor=far)
    numbers, _ = fs.cube_numbers()
    labels = oscillation_cubes(fs, eps, numbers)
    gf = generation_cubes(rc, eps, numbers, fs.u)
    return fs, numbers, labels, gf


@pytest.fixture(scope="module")
def state_t(line_rc):
    return make_state(line_rc, Coordinate(1), 0.5)


@pytest.fixture(scope="module")
def local_t(line_rc, state_t):
    fs, numbers, labels, gf = state_t
    return build_local_approximant(fs, gf, labels, line_rc.S.roots[0], 0.5)


class TestOrderedFamily:
    def test_constant_field_single_subregime(self, line_rc):
        # constant u: one subregime per (re-cohered) regime, whole regimes
        fs, numbers, labels, gf = make_state(line_rc, Constant(1.0), 0.3)
        root = line_rc.S.roots[0]
        fam = order_good_cubes(line_rc, gf, root)
        assert fam[0] == root
        assert set(fam) == {reg.max_cube for reg in line_rc.corona.regimes}
        for reg in line_rc.corona.regimes:
            assert gf.members[reg.max_cube] == reg.cubes

    def test_replay_of_maximal_selection(self, line_rc, state_t):
        fs, numbers, labels, gf = state_t
        S = line_rc.S
        root = S.roots[0]
        fam = order_good_cubes(line_rc, gf, root)
        # independent replay: repeatedly take the maximal-side good cube not
        # yet covered; its generation-forest subregime joins the cover
        good = set(q for q in S.descendants(root) if q in line_rc.corona.good)
        expect = []
        rem = set(good)
        while rem:
            q = min(rem, key=lambda i: (-S.side(i), i))
            top = gf.subregime_top[q]
            assert top == q
            expect.append(q)
            rem -= gf.members[q]
        assert fam == expect

    def test_sides_non_increasing(self, line_rc, state_t):
        fs, numbers, labels, gf = state_t
        fam = order_good_cubes(line_rc, gf, line_rc.S.roots[0])
        sides = [line_rc.S.side(q) for q in fam]
        assert sides == sorted(sides, reverse=True)


class TestPartition:
    def test_constant_field_single_a_cell(self, line_rc):
        fs, numbers, labels, gf = make_state(line_rc, Constant(2.0), 0.3)
        root = line_rc.S.roots[0]
        A = build_local_approximant(fs, gf, labels, root, 0.3)
        kinds = {c.kind for c in A.cells}
        # one A pair over the single subregime; demoted edge cubes appear as
        # (all-blue) V cells since u is constant
        assert {"A+", "A-"} <= kinds <= {"A+", "A-", "blue"}
        t_boxes = line_rc.carleson_box(root)
        assert sum(len(c.boxes) for c in A.cells) == len(t_boxes)

    def test_volume_bookkeeping_exact(self, line_rc, local_t):
        # integer dyadic volumes: cell volumes sum exactly to |T_{Q0}|
        A = local_t
        W = line_rc.W
        t_boxes = line_rc.carleson_box(A.q0)
        total = sum(W.boxes[b].size ** 2 for b in t_boxes)
        cells = sum(W.boxes[b].size ** 2 for c in A.cells for b in c.boxes)
        assert cells == total

    def test_cells_disjoint(self, local_t):
        seen = set()
        for c in local_t.cells:
            for b in c.boxes:
                assert b not in seen
                seen.add(b)

    def test_coverage_probes_land_in_one_cell(self, line_rc, local_t):
        W = line_rc.W
        rng = np.random.default_rng(8)
        t_boxes = sorted(line_rc.carleson_box(local_t.q0))
        lo = np.array([W.geom(b)[0] for b in t_boxes])
        hi = np.array([W.geom(b)[1] for b in t_boxes])
        for _ in range(300):
            b = t_boxes[rng.integers(len(t_boxes))]
            blo, bhi = W.geom(b)
            p = rng.uniform(blo + 1e-9, bhi - 1e-9)
            inside = np.where(np.all(p >= lo, axis=1) & np.all(p < hi, axis=1))[0]
            assert len(inside) == 1
            assert local_t.cell_of_box[t_boxes[inside[0]]] is not None

    def test_red_cells_carved_from_a_cells(self, line_rc, state_t, local_t):
        fs, numbers, labels, gf = state_t
        if not labels.cubes:
            pytest.skip("no red cubes at this eps")
        red_boxes = {b for c in local_t.cells if c.kind == "red" for b in c.boxes}
        a_boxes = {
            b
            for c in local_t.cells
            if c.kind in ("A+", "A-")
            for b in c.boxes
        }
        assert red_boxes and not (red_boxes & a_boxes)


class TestValues:
    def test_constant_field_phi_equals_u_exactly(self, line_rc):
        fs, numbers, labels, gf = make_state(line_rc, Constant(2.5), 0.3)
        A = build_local_approximant(fs, gf, labels, line_rc.S.roots[0], 0.3)
        assert all(c.value == 2.5 for c in A.cells if c.value is not None)
        assert len(A.jump_facets) == 0
        assert float(A.tv_box.sum()) == 0.0

    def test_a_cell_values_are_anchor_heights(self, line_rc, local_t):
        # u = t: the frozen constant of an A-cell is the height of Y_{Q_k}
        RC = line_rc
        for c in local_t.cells:
            if c.kind in ("A+", "A-"):
                y = RC.y_point(c.anchor, c.kind[1])
                assert c.value == pytest.approx(y[1], rel=1e-12)

    def test_blue_cell_value_is_largest_box_center(self, line_rc, state_t, local_t):
        fs = state_t[0]
        for c in local_t.cells:
            if c.kind == "blue":
                r = line_rc.region(c.anchor)
                found = False
                for ci, comp in enumerate(r.components):
                    if set(c.boxes) <= set(comp):
                        lo, hi = line_rc.W.geom(r.centers[ci])
                        x_i = (lo + hi) / 2
                        assert c.value == pytest.approx(x_i[1], rel=1e-12)
                        found = True
                assert found

    def test_per_cell_error_bounded_by_eps_number(self, line_rc, state_t, local_t):
        # blue cells: sup |u - phi| <= osc(component) <= eps*M(anchor), exact
        # by labeling; A cells carry the additional anchor drift <= eps*M
        fs, numbers, labels, gf = state_t
        mx, mn = fs.box_extrema()
        eps = 0.5
        for c in local_t.cells:
            if not c.boxes or c.value is None:
                continue
            dev = max(abs(mx[c.boxes].max() - c.value), abs(c.value - mn[c.boxes].min()))
            if c.kind == "blue":
                assert dev <= eps * numbers[c.anchor] * (1 + 1e-9)
            else:
                assert dev <= 2 * eps * numbers[c.anchor] * (1 + 1e-9)


class TestEval:
    def test_a_cell_rule(self, line_rc, local_t):
        c = next(c for c in local_t.cells if c.kind == "A+" and c.boxes)
        lo, hi = line_rc.W.geom(c.boxes[0])
        X = (lo + hi) / 2
        assert eval_approximant(local_t, X) == c.value

    def test_red_cell_rule_returns_u(self, line_rc, state_t, local_t):
        fs = state_t[0]
        reds = [c for c in local_t.cells if c.kind == "red" and c.boxes]
        if not reds:
            pytest.skip("no red cells")
        lo, hi = line_rc.W.geom(reds[0].boxes[0])
        X = (lo + hi) / 2
        assert eval_approximant(local_t, X) == float(fs.u.eval(X[None, :])[0])

    def test_facet_point_returns_u(self, line_rc, state_t, local_t):
        fs = state_t[0]
        b = local_t.cells[0].boxes[0]
        lo, hi = line_rc.W.geom(b)
        X = np.array([lo[0], (lo[1] + hi[1]) / 2])  # on the left face
        assert eval_approximant(local_t, X) == float(fs.u.eval(X[None, :])[0])

    def test_matches_slow_path(self, line_rc, local_t):
        W = line_rc.W
        rng = np.random.default_rng(9)
        t_boxes = sorted(line_rc.carleson_box(local_t.q0))
        for _ in range(200):
            b = t_boxes[rng.integers(len(t_boxes))]
            lo, hi = W.geom(b)
            X = rng.uniform(lo + 1e-9, hi - 1e-9)
            fast = eval_approximant(local_t, X)
            # slow path: scan all cells for the box containing X
            hit = [
                c
                for c in local_t.cells
                for bb in c.boxes
                if np.all(X >= W.geom(bb)[0]) and np.all(X < W.geom(bb)[1])
            ]
            assert len(hit) == 1
            c = hit[0]
            slow = (
                float(local_t.u.eval(X[None, :])[0]) if c.value is None else c.value
            )
            assert fast == slow


class TestTotalVariation:
    def test_single_jump_exact(self, line_rc, local_t):
        a, b, axis, area, mass = local_t.jump_facets[0]
        ca, cb = local_t.cell_of(a), local_t.cell_of(b)
        if ca.value is not None and cb.value is not None:
            assert mass == abs(ca.value - cb.value) * area

    def test_red_cell_contribution_is_volume(self, line_rc, state_t, local_t):
        # |grad t| = 1: the gradient part over a red cell equals its volume
        reds = [c for c in local_t.cells if c.kind == "red" and c.boxes]
        if not reds:
            pytest.skip("no red cells")
        W = line_rc.W
        tv = total_variation(local_t, set(reds[0].boxes))
        vol = sum(W.volume(b) for b in reds[0].boxes)
        assert tv["grad"] == pytest.approx(vol, rel=1e-12)

    def test_monotone_under_inclusion(self, line_rc, local_t):
        t_boxes = sorted(line_rc.carleson_box(local_t.q0))
        small = set(t_boxes[: len(t_boxes) // 2])
        big = set(t_boxes)
        assert total_variation(local_t, small)["total"] <= (
            total_variation(local_t, big)["total"] + 1e-12
        )

    def test_additive_over_separated_sets(self, line_rc, local_t):
        W = line_rc.W
        lo, hi = W.geom_arrays()
        left = {b for b in range(W.n_boxes) if hi[b][0] <= -0.5}
        right = {b for b in range(W.n_boxes) if lo[b][0] >= 0.5}
        tv_l = total_variation(local_t, left)["total"]
        tv_r = total_variation(local_t, right)["total"]
        tv_both = total_variation(local_t, left | right)["total"]
        assert tv_both == pytest.approx(tv_l + tv_r, rel=1e-12)


class TestGlobalModes:
    def test_bounded_outside_is_u_exactly(self, segment_rc):
        # the pole sits on the segment, so u is harmonic on its complement
        from epsapprox.harmonic import FundamentalPole

        fs, numbers, labels, gf = make_state(
            segment_rc, FundamentalPole((0.0, 0.0)), 0.3, far=4.0
        )
        A = build_global_approximant(fs, gf, labels, 0.3)
        assert A.mode == "bounded"
        t_root = segment_rc.carleson_box(segment_rc.S.roots[0])
        X = np.array([3.5, 2.5])
        assert segment_rc.W.locate(X) not in t_root
        assert eval_approximant(A, X) == float(fs.u.eval(X[None, :])[0])

    def test_ring_chain_spacing_and_disjointness(self, line_rc, state_t):
        fs, numbers, labels, gf = state_t
        A = build_global_approximant(fs, gf, labels, 0.5, gamma0=4.0)
        S = line_rc.S
        sides = [S.side(q) for q in A.rings]
        for a, b in zip(sides, sides[1:-1]):
            assert b >= 4.0 * a - 1e-12
        # rings tile: every covered box belongs to exactly one cell
        seen = set()
        for c in A.cells:
            for b in c.boxes:
                assert b not in seen
                seen.add(b)
        # and the union covers the root Carleson box
        assert seen == set(line_rc.carleson_box(S.roots[0]))

    def test_ring_ball_packing(self, line_rc, state_t):
        from epsapprox.dyadic import surface_ball

        fs, numbers, labels, gf = state_t
        A = build_global_approximant(fs, gf, labels, 0.5, gamma0=4.0)
        S = line_rc.S
        beta = 2.0
        masses = []
        for q in A.rings:
            _, r, members = surface_ball(S, q, beta)
            masses.append(S.E.weights[members].sum())
        # increasing balls: packing constant of the family is the worst
        # prefix-sum ratio; ~4/3 untruncated, slightly above 2 with the
        # window-truncated top ball
        worst = max(
            sum(masses[: i + 1]) / masses[i] for i in range(len(masses))
        )
        assert worst <= 3.0

    def test_window_too_small_for_rings(self, segment_rc):
        fs, numbers, labels, gf = make_state(segment_rc, Constant(1.0), 0.3)
        with pytest.raises(ValueError, match="ring"):
            build_global_approximant(fs, gf, labels, 0.3, mode="unbounded", gamma0=64.0)


class TestVerification:
    def test_constant_field_all_zero(self, line_rc):
        fs, numbers, labels, gf = make_state(line_rc, Constant(3.0), 0.2)
        A = build_global_approximant(fs, gf, labels, 0.2, gamma0=4.0)
        ndev = nontangential_deviation(fs, A)
        assert np.all(ndev == 0.0)
        rep = verify_approximation(
            fs, A, 0.2, 1.0, certified_mask(line_rc), c1_budget=4.0
        )
        assert rep["C1"] == 0.0 and rep["C1_pass"] and rep["C_local_pass"]
        assert rep["tv_total"] == 0.0

    def test_height_field_certifies(self, line_rc, state_t):
        fs, numbers, labels, gf = state_t
        A = build_global_approximant(fs, gf, labels, 0.5, gamma0=4.0)
        a0 = find_alpha0(fs, gf)
        rep = verify_approximation(fs, A, 0.5, a0, certified_mask(line_rc))
        assert rep["C1_pass"]
        assert rep["C2"] > 0
        for p, d in rep["lp"].items():
            assert d["C1p"] <= 4.0
            assert np.isfinite(d["C2p"])

    def test_alpha0_reported(self, line_rc, state_t):
        fs, numbers, labels, gf = state_t
        assert find_alpha0(fs, gf) >= 1.0


class TestRemarkLocality:
    def test_tv_over_carved_intersections(self, line_rc, state_t):
        # TV over (T_{Q'} cap T_{Q1}) \ T_{Q2} against the eps^{-2} integral
        # budget of either governing cube, on random triples
        fs, numbers, labels, gf = state_t
        eps = 0.5
        A = build_global_approximant(fs, gf, labels, eps, gamma0=4.0)
        S = line_rc.S
        from epsapprox.dyadic import surface_ball

        ns = fs.n_star(None)
        rng = np.random.default_rng(12)
        ids = [q for q in S.relevant_ids() if line_rc.region(q).good]
        worst = 0.0
        for _ in range(40):
            qp, q1, q2 = (ids[rng.integers(len(ids))] for _ in range(3))
            boxset = (
                line_rc.carleson_box(qp) & line_rc.carleson_box(q1)
            ) - line_rc.carleson_box(q2)
            if not boxset:
                continue
            tv = total_variation(A, boxset)["total"]
            budgets = []
            for q in (qp, q1):
                _, _, members = surface_ball(S, q, 4.0)
                budgets.append(
                    float((ns[members] * S.E.weights[members]).sum()) / eps**2
                )
            if min(budgets) > 0:
                worst = max(worst, tv / min(budgets))
        assert worst <= 64.0  # configured locality budget
