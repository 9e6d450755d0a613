"""Cone functionals on the region complex.

Per-box sup/quadrature grids are shared by every functional: grids cover the
triple-fattened box (the cones see slightly past their own boxes), while
quadratures run on the disjoint core boxes.  All sups are grid sups, hence
certified lower bounds; a refinement pass (half the grid step) bounds the
gap.  Inequalities consuming these sups are either tested with both sides on
the same grids or at two resolutions.
"""

from __future__ import annotations

import numpy as np

from .dyadic import CubeSystem
from .geometry import _distance
from .harmonic import HarmonicField
from .whitney import RegionComplex


class FunctionalSuite:
    """Shared evaluation state for one (boundary, regions, field) triple.

    The cone index lives here: per-sample ancestor chains (`chains`) realize
    the default cones, `aperture_neighbors` the widened ones; both resolve
    to region box sets of the complex.
    """

    def __init__(
        self,
        RC: RegionComplex,
        u: HarmonicField,
        sample_frac: float = 0.125,
        far_ball_factor: float | None = None,
    ):
        self.RC = RC
        self.S: CubeSystem = RC.S
        self.E = RC.S.E
        self.W = RC.W
        self.u = u
        self.sample_frac = sample_frac
        self.tau = RC.params.tau
        self._by_size: dict = {}
        for b in self.W.boxes:
            self._by_size.setdefault(b.size, []).append(b.id)
        self._fat = {}
        self._core = {}
        self._owner = None
        self._anc = None
        self._region_sup: dict | None = None
        self._comp_stats: dict | None = None
        self._nstar_cache: dict = {}
        self._numbers_cache: dict = {}
        self.chains = [self.S.chain(i) for i in range(self.E.n_samples)]
        self._neighbor_cache: dict = {}
        self.far_ball_factor = far_ball_factor
        self._grad_int = None
        self._grad2_int = None

    # -- grids --------------------------------------------------------------

    def _offsets(self, fat: bool) -> np.ndarray:
        pad = 1.5 * self.tau if fat else 0.0
        npts = int(np.ceil((1 + 2 * pad) / self.sample_frac)) + 1
        t = np.linspace(-pad, 1 + pad, npts)
        gx, gy = np.meshgrid(t, t, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])

    def fat_points(self, size: int):
        """(box ids, points array (nbox, npts, 2)) for one size group."""
        if size not in self._fat:
            ids = np.asarray(self._by_size[size])
            los = np.array([self.W.boxes[i].lo for i in ids], dtype=float)
            lo = self.W.base + self.W.unit * los
            side = self.W.unit * size
            off = self._offsets(fat=True) * side
            self._fat[size] = (ids, lo[:, None, :] + off[None, :, :])
        return self._fat[size]

    def core_midpoints(self, size: int):
        """(ids, midpoints (nbox, m, 2), cell volume) for quadrature."""
        if size not in self._core:
            ids = np.asarray(self._by_size[size])
            los = np.array([self.W.boxes[i].lo for i in ids], dtype=float)
            lo = self.W.base + self.W.unit * los
            side = self.W.unit * size
            m = max(2, int(np.ceil(1.0 / self.sample_frac)))
            t = (np.arange(m) + 0.5) / m
            gx, gy = np.meshgrid(t, t, indexing="ij")
            off = np.column_stack([gx.ravel(), gy.ravel()]) * side
            vol = (side / m) ** 2
            self._core[size] = (ids, lo[:, None, :] + off[None, :, :], vol)
        return self._core[size]

    def box_extrema(self):
        """Per box: (max u, min u) over the fat grid."""
        if self._comp_stats is None:
            mx = np.full(self.W.n_boxes, -np.inf)
            mn = np.full(self.W.n_boxes, np.inf)
            for size in self._by_size:
                ids, pts = self.fat_points(size)
                vals = self.u.eval(pts.reshape(-1, 2)).reshape(pts.shape[:2])
                mx[ids] = vals.max(axis=1)
                mn[ids] = vals.min(axis=1)
            self._comp_stats = (mx, mn)
        return self._comp_stats

    def owners(self):
        """Per box: owner box id of each fat-grid point (-1 if uncovered)."""
        if self._owner is None:
            owner = {}
            lo_all, hi_all = self.W.geom_arrays()
            for size in self._by_size:
                ids, pts = self.fat_points(size)
                out = np.full(pts.shape[:2], -1, dtype=int)
                for row, bid in enumerate(ids):
                    cands = [bid] + list(self.W.neighbors[bid])
                    P = pts[row]
                    found = np.full(len(P), -1, dtype=int)
                    for c in cands:
                        hit = np.all(P >= lo_all[c], axis=1) & np.all(
                            P < hi_all[c], axis=1
                        )
                        found = np.where((found < 0) & hit, c, found)
                    out[row] = found
                owner[size] = out
            self._owner = owner
        return self._owner

    # -- gradient quadratures -------------------------------------------------

    def grad_integrals(self):
        """Per box: (int |grad u|, int |grad u|^2 delta^{1-n}) on core grids."""
        if self._grad_int is None:
            g1 = np.zeros(self.W.n_boxes)
            g2 = np.zeros(self.W.n_boxes)
            n = self.E.n
            for size in self._by_size:
                ids, pts, vol = self.core_midpoints(size)
                flat = pts.reshape(-1, 2)
                gr = np.linalg.norm(self.u.grad(flat), axis=1).reshape(
                    pts.shape[:2]
                )
                g1[ids] = gr.sum(axis=1) * vol
                if n == 1:
                    g2[ids] = (gr**2).sum(axis=1) * vol
                else:
                    delta = _distance(flat, self.E).reshape(pts.shape[:2])
                    g2[ids] = (gr**2 * delta ** (1 - n)).sum(axis=1) * vol
            self._grad_int = g1
            self._grad2_int = g2
        return self._grad_int, self._grad2_int

    # -- cones and nontangential sups ----------------------------------------

    def region_sup(self) -> dict:
        """Per cube: sup |u| over the fattened region boxes."""
        if self._region_sup is None:
            mx, mn = self.box_extrema()
            sup = np.maximum(np.abs(mx), np.abs(mn))
            self._region_sup = {
                q: (float(sup[r.boxes].max()) if r.boxes else -np.inf)
                for q, r in self.RC.regions.items()
            }
        return self._region_sup

    def aperture_neighbors(self, alpha: float, qid: int) -> list:
        """Same-generation cubes P with alpha*Delta_Q meeting P.

        The surface ball is open (strict inequality), so alpha = 1 with
        centered cubes reproduces the default cones exactly.
        """
        key = (alpha, qid)
        if key not in self._neighbor_cache:
            S = self.S
            c = S.cube(qid)
            r = alpha * S.C1 * c.side
            out = []
            for p in S.relevant_at_gen(c.k):
                cp = S.cube(p)
                if np.linalg.norm(cp.z - c.z) > r + S.C1 * cp.side * 2:
                    continue
                d = np.linalg.norm(S.E.points[cp.sample_idx] - c.z, axis=1)
                if np.min(d) < r:
                    out.append(p)
            self._neighbor_cache[key] = out
        return self._neighbor_cache[key]

    def n_star(self, alpha: float | None = None) -> np.ndarray:
        """N_* u (default cones) or the alpha-aperture variant, per sample."""
        key = alpha
        if key in self._nstar_cache:
            return self._nstar_cache[key]
        sup = self.region_sup()
        out = np.zeros(self.E.n_samples)
        far = self._far_sup()
        for i, chain in enumerate(self.chains):
            best = far
            for q in chain:
                if alpha is None:
                    best = max(best, sup[q])
                else:
                    for p in self.aperture_neighbors(alpha, q):
                        best = max(best, sup[p])
            if best == -np.inf:
                raise ValueError(f"empty cone at sample {i} (window edge)")
            out[i] = best
        self._nstar_cache[key] = out
        return out

    def _far_sup(self) -> float:
        """sup |u| outside B(z0, C diam E) for bounded boundaries, else -inf."""
        if self.far_ball_factor is None or not self.E.bounded:
            return -np.inf
        z0 = self.E.points[0]
        R = self.far_ball_factor * self.E.diameter
        lo, hi = self.W.geom_arrays()
        mids = (lo + hi) / 2
        outside = np.linalg.norm(mids - z0, axis=1) > R
        if not outside.any():
            return -np.inf
        mx, mn = self.box_extrema()
        sup = np.maximum(np.abs(mx), np.abs(mn))
        return float(sup[outside].max())

    def cone_distance_constant(self, alpha: float, stride: int = 37) -> float:
        """Measured gamma with Gamma_alpha(x) inside {Y: |x-Y| <= gamma*delta(Y)}.

        Swept over strided samples and their cone boxes, using the certified
        lower bound dist(I,E) for delta on each box.
        """
        worst = 0.0
        lo, hi = self.W.geom_arrays()
        for i in range(0, self.E.n_samples, stride):
            x = self.E.points[i]
            for q in self.chains[i]:
                for p in self.aperture_neighbors(alpha, q):
                    for b in self.RC.regions[p].boxes:
                        far = max(
                            np.linalg.norm(lo[b] - x), np.linalg.norm(hi[b] - x)
                        )
                        pad = 1.5 * self.tau * (hi[b][0] - lo[b][0])
                        worst = max(
                            worst,
                            (far + pad) / max(self.W.boxes[b].dist, 1e-300),
                        )
        return worst

    def square_function(self) -> np.ndarray:
        """S u per sample: quadrature of |grad u|^2 delta^{1-n} over the cone."""
        _, g2 = self.grad_integrals()
        out = np.zeros(self.E.n_samples)
        for i, chain in enumerate(self.chains):
            seen: set = set()
            for q in chain:
                seen.update(self.RC.regions[q].boxes)
            out[i] = np.sqrt(sum(g2[b] for b in seen))
        return out

    def oscillations(self) -> dict:
        """(qid, comp index) -> grid oscillation of u over the component."""
        mx, mn = self.box_extrema()
        out = {}
        for q, r in self.RC.regions.items():
            for ci, comp in enumerate(r.components):
                out[(q, ci)] = float(mx[comp].max() - mn[comp].min())
        return out

    # -- cube numbers ---------------------------------------------------------

    def cube_numbers(self, alpha: float | None = None):
        """sup over ancestors R of Q of the average of N_* u over R.

        Returns (per-cube dict, per-sample array of the pointwise sup).
        """
        if alpha in self._numbers_cache:
            return self._numbers_cache[alpha]
        ns = self.n_star(alpha)
        avg = self.S.cube_averages(ns)
        val: dict = {}
        for q in sorted(self.S.relevant_ids(), key=lambda i: self.S.cube(i).k):
            p = self.S.cube(q).rparent
            val[q] = max(avg[q], val[p]) if p is not None else avg[q]
        point = np.zeros(self.E.n_samples)
        for i in range(self.E.n_samples):
            point[i] = val[int(self.S.sample_leaf[i])]
        self._numbers_cache[alpha] = (val, point)
        return val, point

    # -- Carleson functionals ---------------------------------------------------

    def anc_scatter(self, mass: np.ndarray) -> dict:
        """Per cube Q: total mass of boxes inside T_Q."""
        if self._anc is None:
            anc = {}
            for bid, owners in self.RC.box_owners.items():
                s: set = set()
                for q, _ in owners:
                    s.update(self.S.ancestors(q))
                anc[bid] = sorted(s)
            self._anc = anc
        out = {q: 0.0 for q in self.S.relevant_ids()}
        for bid, qs in self._anc.items():
            m = mass[bid]
            if m:
                for q in qs:
                    out[q] += m
        return out

    def carleson_dyadic(
        self, mass: np.ndarray, tower: bool | None = None
    ) -> np.ndarray:
        """C_dyadic: per sample, sup over containing cubes of T_Q-mass/l(Q)^n.

        For bounded boundaries the sup also runs over the ball tower
        B(z0, 2^k diam E), k = Lambda_0 .. Lambda_0+4, with Lambda_0 chosen
        so the first ball contains T_{root}.
        """
        n = self.E.n
        per_cube = self.anc_scatter(mass)
        out = np.zeros(self.E.n_samples)
        for i, chain in enumerate(self.chains):
            best = 0.0
            for q in chain:
                best = max(best, per_cube[q] / self.S.side(q) ** n)
            out[i] = best
        if tower is None:
            tower = self.E.bounded
        if tower:
            out = np.maximum(out, self._tower_sup(mass))
        return out

    def _tower_sup(self, mass: np.ndarray) -> float:
        z0 = self.E.points[0]
        lo, hi = self.W.geom_arrays()
        far = np.maximum(np.linalg.norm(lo - z0, axis=1), np.linalg.norm(hi - z0, axis=1))
        t_root = max(
            (far[b] for b in self.RC.carleson_box(self.S.roots[0])), default=0.0
        )
        d = self.E.diameter
        lam0 = max(0, int(np.ceil(np.log2(max(t_root, d) / d))))
        mids = (lo + hi) / 2
        dist_mid = np.linalg.norm(mids - z0, axis=1)
        best = 0.0
        for k in range(lam0, lam0 + 5):
            R = 2.0**k * d
            m = float(mass[dist_mid <= R].sum())
            best = max(best, m / R**self.E.n)
        return best

    def carleson_ball(
        self,
        mass: np.ndarray,
        sample_ids: np.ndarray,
        radii: np.ndarray | None = None,
    ) -> np.ndarray:
        """C: per listed sample, sup over r of r^{-n} * mass(B(x,r) \\ E).

        Box masses are binned at box centers (midpoint convention).
        """
        lo, hi = self.W.geom_arrays()
        mids = (lo + hi) / 2
        live = np.nonzero(mass)[0]
        if radii is None:
            radii = self._ball_radii()
        out = np.zeros(len(sample_ids))
        if len(live) == 0:
            return out
        m = mass[live]
        pos = mids[live]
        n = self.E.n
        for j, i in enumerate(sample_ids):
            d = np.linalg.norm(pos - self.E.points[i], axis=1)
            order = np.argsort(d, kind="stable")
            csum = np.cumsum(m[order])
            idx = np.searchsorted(d[order], radii, side="left")
            vals = np.where(idx > 0, csum[np.maximum(idx - 1, 0)], 0.0)
            out[j] = float(np.max(vals / radii**n))
        return out

    def _ball_radii(self) -> np.ndarray:
        rs = [
            self.S.C1 * 2.0 ** (-k) * self.S.scale
            for k in range(self.S.k_min, self.S.k_max + 1)
        ]
        span = self.W.window.span
        extra = np.geomspace(min(rs) / 2, 2 * span, 12)
        return np.unique(np.concatenate([rs, extra]))


# ---------------------------------------------------------------------------
# comparison estimates
# ---------------------------------------------------------------------------


def lp_norm(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    return float((weights * np.abs(values) ** p).sum() ** (1.0 / p))


def compare_levelsets(
    cball: np.ndarray,
    cdyadic: np.ndarray,
    weights: np.ndarray,
    p_grid=(1.5, 2.0, 4.0),
    a1_budget: float = 32.0,
    a2_budget: float = 8.0,
    n_lambda: int = 40,
):
    """Weak-type domination sigma{C > A1*l} <= A2*sigma{C_dyadic > l}.

    Scans A1 over powers of two and returns the smallest passing pair plus
    the numerically verified L^p domination constants A1*A2^{1/p}.
    """
    cmax, dmax = float(cball.max(initial=0.0)), float(cdyadic.max(initial=0.0))
    if cmax == 0.0:
        return {"A1": 1.0, "A2": 1.0, "pass": True, "lp": {p: 1.0 for p in p_grid}}
    if dmax == 0.0:
        return {"A1": np.inf, "A2": np.inf, "pass": False, "lp": {}}
    lam_grid = np.geomspace(dmax * 1e-4, dmax, n_lambda)
    a1 = 1.0
    while a1 <= a1_budget:
        if a1 * dmax >= cmax:
            a2_needed = 1.0
            ok = True
            for lam in lam_grid:
                num = float(weights[cball > a1 * lam].sum())
                den = float(weights[cdyadic > lam].sum())
                if num == 0.0:
                    continue
                if den == 0.0:
                    ok = False
                    break
                a2_needed = max(a2_needed, num / den)
            if ok and a2_needed <= a2_budget:
                lp = {}
                for p in p_grid:
                    nc = lp_norm(cball, weights, p)
                    nd = lp_norm(cdyadic, weights, p)
                    lp[p] = nc / nd if nd else np.inf
                    if nc > a1 * a2_needed ** (1.0 / p) * nd * (1 + 1e-9):
                        ok = False
                if ok:
                    return {
                        "A1": a1,
                        "A2": a2_needed,
                        "pass": True,
                        "lp": lp,
                    }
        a1 *= 2.0
    return {"A1": np.inf, "A2": np.inf, "pass": False, "lp": {}}


def compare_apertures(
    FS: FunctionalSuite, alpha: float, p: float, certified: np.ndarray | None = None
) -> float:
    """||N_*^alpha u||_p / ||N_* u||_p on the sample quadrature (1 if u = 0)."""
    w = FS.E.weights if certified is None else FS.E.weights[certified]
    na = FS.n_star(alpha)
    n0 = FS.n_star(None)
    if certified is not None:
        na, n0 = na[certified], n0[certified]
    denom = lp_norm(n0, w, p)
    if denom == 0.0:
        return 1.0
    return lp_norm(na, w, p) / denom
