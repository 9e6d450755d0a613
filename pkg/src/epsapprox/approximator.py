"""The piecewise approximant: cells, values, jumps, total variation.

The approximant is symbolic: every cell is a set of core Whitney boxes with
a value rule (a frozen constant, or u itself on red cells and outside the
working Carleson box).  Total variation is exact for the jump part (facet
areas are dyadic-exact) plus a quadrature of |grad u| over the cells where
the rule is u.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .functionals import FunctionalSuite, lp_norm
from .stopping import GenerationForest, OscillationLabels
from .whitney import RegionComplex


@dataclass
class Cell:
    idx: int
    kind: str  # 'A+', 'A-', 'blue', 'red', 'outer'
    anchor: int | None  # owning cube id (None for 'outer')
    value: float | None  # None => the rule is u itself
    boxes: list


@dataclass
class CellPartition:
    q0: int
    ordered_good: list  # the Q_k family, non-increasing side length
    v_enum: list  # enumeration of the large-oscillation/bad cubes
    cells: list
    cell_of_box: dict

    def volumes(self, W) -> dict:
        return {
            c.idx: sum(W.volume(b) for b in c.boxes) for c in self.cells
        }


@dataclass
class Approximant:
    RC: RegionComplex
    u: object
    eps: float
    mode: str  # 'local', 'bounded', 'unbounded'
    cells: list
    cell_of_box: dict
    jump_facets: list  # (a, b, axis, area, mass)
    tv_box: np.ndarray  # per-box binned TV measure (grad + half jumps)
    q0: int | None = None
    rings: list = field(default_factory=list)
    partition: object = None
    uncovered: int = 0

    def cell_of(self, bid: int) -> Cell | None:
        i = self.cell_of_box.get(bid)
        return None if i is None else self.cells[i]

    def to_json(self):
        return {
            "eps": self.eps,
            "mode": self.mode,
            "q0": self.q0,
            "rings": list(self.rings),
            "cells": [
                {
                    "idx": c.idx,
                    "kind": c.kind,
                    "anchor": c.anchor,
                    "value": c.value,
                    "boxes": list(c.boxes),
                }
                for c in self.cells
            ],
            "n_jump_facets": len(self.jump_facets),
        }


# ---------------------------------------------------------------------------
# ordered good cubes and cells
# ---------------------------------------------------------------------------


def order_good_cubes(RC: RegionComplex, GF: GenerationForest, q0: int) -> list:
    """Family {Q_k}: subregime tops covering the good cubes under q0,
    picked by maximal side length with id tie-break."""
    S = RC.S
    corona = RC.corona
    under = set(S.descendants(q0))
    good_under = {q for q in under if q in corona.good}
    if not good_under:
        return []
    family = []
    if q0 in corona.good:
        q1 = GF.subregime_top[q0]
    else:
        q1 = min(good_under, key=lambda q: (-S.side(q), q))
        if GF.subregime_top[q1] != q1:
            raise RuntimeError(
                f"maximal good subcube {q1} is not a generation cube"
            )
    family.append(q1)
    remaining = good_under - GF.members[q1]
    while remaining:
        qk = min(remaining, key=lambda q: (-S.side(q), q))
        if GF.subregime_top[qk] != qk:
            raise RuntimeError(f"family cube {qk} is not a generation cube")
        family.append(qk)
        remaining -= GF.members[qk]
    sides = [S.side(q) for q in family]
    assert all(a >= b - 1e-15 for a, b in zip(sides, sides[1:]))
    return family


def build_partition(
    RC: RegionComplex,
    GF: GenerationForest,
    labels: OscillationLabels,
    q0: int,
    family: list,
    values: dict,
) -> CellPartition:
    """Carve T_{q0} into V cells (oscillation/bad regions, precedence) and
    A cells (subregime sawtooth halves minus what is already taken)."""
    S = RC.S
    t_boxes = RC.carleson_box(q0)
    cells: list[Cell] = []
    cell_of: dict = {}

    def add_cell(kind, anchor, value, boxes):
        boxes = sorted(boxes)
        if not boxes:
            return
        c = Cell(idx=len(cells), kind=kind, anchor=anchor, value=value, boxes=boxes)
        cells.append(c)
        for b in boxes:
            if b in cell_of:
                raise RuntimeError(f"box {b} assigned to two cells")
            cell_of[b] = c.idx

    # V cells first (phi_1 has precedence over phi_0 on its closure)
    under = set(S.descendants(q0))
    v_enum = sorted(
        (q for q in under if q in RC.corona.bad or q in labels.cubes),
        key=lambda q: (-S.side(q), q),
    )
    taken: set = set()
    for qm in v_enum:
        r = RC.regions[qm]
        for ci, comp in enumerate(r.components):
            boxes = [b for b in comp if b in t_boxes and b not in taken]
            if not boxes:
                continue
            taken.update(boxes)
            if labels.is_red(qm, ci):
                add_cell("red", qm, None, boxes)
            else:
                lo, hi = RC.W.geom(r.centers[ci])
                x_i = (lo + hi) / 2.0
                add_cell("blue", qm, float(values["u"].eval(x_i[None, :])[0]), boxes)
    # A cells: subregime sawtooth halves minus everything taken so far
    for k, qk in enumerate(family):
        sub = GF.members[qk]
        plus: set = set()
        minus: set = set()
        for q in sub:
            r = RC.regions[q]
            for comp, lab in zip(r.components, r.labels):
                if lab == "+":
                    plus.update(comp)
                elif lab == "-":
                    minus.update(comp)
        add_cell(
            "A+", qk, values[(qk, "+")], [b for b in plus if b in t_boxes and b not in taken]
        )
        taken.update(plus & t_boxes)
        add_cell(
            "A-", qk, values[(qk, "-")], [b for b in minus if b in t_boxes and b not in taken]
        )
        taken.update(minus & t_boxes)
    missing = t_boxes - taken
    if missing:
        raise RuntimeError(
            f"partition does not cover T_q0: {len(missing)} boxes left"
        )
    return CellPartition(
        q0=q0, ordered_good=family, v_enum=v_enum, cells=cells, cell_of_box=cell_of
    )


# ---------------------------------------------------------------------------
# approximants
# ---------------------------------------------------------------------------


def build_local_approximant(
    FS: FunctionalSuite,
    GF: GenerationForest,
    labels: OscillationLabels,
    q0: int,
    eps: float,
) -> Approximant:
    """phi on T_{q0}: constants on A/blue cells, u on red cells."""
    RC = FS.RC
    family = order_good_cubes(RC, GF, q0)
    values: dict = {"u": FS.u}
    for qk in family:
        for sign in "+-":
            y = RC.y_point(qk, sign)
            values[(qk, sign)] = float(FS.u.eval(y[None, :])[0])
    part = build_partition(RC, GF, labels, q0, family, values)
    A = Approximant(
        RC=RC,
        u=FS.u,
        eps=eps,
        mode="local",
        cells=part.cells,
        cell_of_box=dict(part.cell_of_box),
        jump_facets=[],
        tv_box=np.zeros(RC.W.n_boxes),
        q0=q0,
        partition=part,
    )
    _assemble_jumps(FS, A)
    return A


def build_global_approximant(
    FS: FunctionalSuite,
    GF: GenerationForest,
    labels: OscillationLabels,
    eps: float,
    mode: str | None = None,
    gamma0: float = 4.0,
) -> Approximant:
    """Glue local approximants: bounded mode patches u outside T_{root};
    unbounded mode tiles rings W_k = T_{Q_k} \\ T_{Q_{k-1}} along a
    gamma0-spaced chain of cubes up to the root."""
    RC = FS.RC
    S = RC.S
    if mode is None:
        mode = "bounded" if S.E.bounded else "unbounded"
    root = S.roots[0]
    if mode == "bounded":
        local = build_local_approximant(FS, GF, labels, root, eps)
        cells = list(local.cells)
        cell_of = dict(local.cell_of_box)
        outer = sorted(set(range(RC.W.n_boxes)) - set(cell_of))
        c = Cell(idx=len(cells), kind="outer", anchor=None, value=None, boxes=outer)
        cells.append(c)
        for b in outer:
            cell_of[b] = c.idx
        A = Approximant(
            RC=RC,
            u=FS.u,
            eps=eps,
            mode="bounded",
            cells=cells,
            cell_of_box=cell_of,
            jump_facets=[],
            tv_box=np.zeros(RC.W.n_boxes),
            q0=root,
            partition=local.partition,
        )
        _assemble_jumps(FS, A)
        return A
    if mode != "unbounded":
        raise ValueError(f"unknown gluing mode {mode!r}")
    rings = _ring_chain(S, gamma0)
    if len(rings) < 2:
        raise ValueError(
            "window too small for >= 2 gamma0-spaced ring cubes; "
            "decrease gamma0 or extend the generation range"
        )
    locals_ = [build_local_approximant(FS, GF, labels, q, eps) for q in rings]
    cells: list[Cell] = []
    cell_of: dict = {}
    prev_t: frozenset = frozenset()
    for k, (q, loc) in enumerate(zip(rings, locals_)):
        remap: dict = {}
        t_k = RC.carleson_box(q)
        for b in sorted(t_k - prev_t):
            li = loc.cell_of_box.get(b)
            if li is None:
                continue
            if li not in remap:
                src = loc.cells[li]
                c = Cell(
                    idx=len(cells),
                    kind=src.kind,
                    anchor=src.anchor,
                    value=src.value,
                    boxes=[],
                )
                cells.append(c)
                remap[li] = c.idx
            cells[remap[li]].boxes.append(b)
            cell_of[b] = remap[li]
        prev_t = prev_t | t_k
    uncovered = RC.W.n_boxes - len(cell_of)
    A = Approximant(
        RC=RC,
        u=FS.u,
        eps=eps,
        mode="unbounded",
        cells=cells,
        cell_of_box=cell_of,
        jump_facets=[],
        tv_box=np.zeros(RC.W.n_boxes),
        q0=root,
        rings=rings,
        uncovered=uncovered,
    )
    _assemble_jumps(FS, A)
    return A


def _ring_chain(S, gamma0: float) -> list:
    """Ancestors of the central base cube with side spacing >= gamma0."""
    from .stopping import initial_chain

    chain = initial_chain(S)  # coarsest first
    chain = chain[::-1]
    out = [chain[0]]
    for q in chain[1:]:
        if S.side(q) >= gamma0 * S.side(out[-1]) - 1e-12:
            out.append(q)
    if out[-1] != chain[-1]:
        out.append(chain[-1])  # always end at the root
    return out


def _assemble_jumps(FS: FunctionalSuite, A: Approximant, quad_nodes: int = 9):
    """Facet jump table and the per-box binned TV measure."""
    RC, W, u = A.RC, A.RC.W, A.u
    g1, _ = FS.grad_integrals()
    tv = np.zeros(W.n_boxes)
    jumps = []
    for b in range(W.n_boxes):
        c = A.cell_of(b)
        if c is not None and c.value is None:  # red or outer: rule is u
            tv[b] += g1[b]
    for a, b, axis, area in W.facets:
        ca, cb = A.cell_of(a), A.cell_of(b)
        if ca is None or cb is None:
            continue  # outside the approximant's domain
        if ca.idx == cb.idx:
            continue
        va, vb = ca.value, cb.value
        if va is None and vb is None:
            continue  # u on both sides: no jump
        if va is not None and vb is not None:
            mass = abs(va - vb) * area
        else:
            const = va if va is not None else vb
            nodes = _facet_nodes(W, a, b, axis, quad_nodes)
            mass = float(np.mean(np.abs(u.eval(nodes) - const))) * area
        if mass > 0.0:
            jumps.append((a, b, axis, area, mass))
            tv[a] += mass / 2
            tv[b] += mass / 2
    A.jump_facets = jumps
    A.tv_box = tv


def _facet_nodes(W, a, b, axis, m):
    lo_a, hi_a = W.geom(a)
    lo_b, hi_b = W.geom(b)
    plane = hi_a[axis]
    perp = 1 - axis
    t0 = max(lo_a[perp], lo_b[perp])
    t1 = min(hi_a[perp], hi_b[perp])
    ts = t0 + (np.arange(m) + 0.5) / m * (t1 - t0)
    pts = np.empty((m, 2))
    pts[:, axis] = plane
    pts[:, perp] = ts
    return pts


# ---------------------------------------------------------------------------
# evaluation and total variation
# ---------------------------------------------------------------------------


def eval_approximant(A: Approximant, X) -> float:
    """phi(X): locate the core box, apply its cell rule; u on facets."""
    X = np.asarray(X, dtype=float)
    W = A.RC.W
    bid = W.locate(X)
    if bid is None:
        raise ValueError(f"point {X} is outside the box complex")
    cell = A.cell_of(bid)
    if cell is None:
        raise ValueError(f"point {X} is outside the approximant's cells")
    lo, hi = W.geom(bid)
    if np.any(X == lo) or np.any(X == hi):
        return float(A.u.eval(X[None, :])[0])
    if cell.value is None:
        return float(A.u.eval(X[None, :])[0])
    return cell.value


def total_variation(A: Approximant, boxset) -> dict:
    """TV of phi over the open interior of the box union.

    Jump part: facets with both sides in the set (exact areas).  Gradient
    part: quadrature of |grad u| over member boxes whose rule is u.
    """
    boxset = set(boxset)
    jump = 0.0
    for a, b, _, _, mass in A.jump_facets:
        if a in boxset and b in boxset:
            jump += mass
    grad = 0.0
    g1 = _grad_cache(A)
    for b in boxset:
        c = A.cell_of(b)
        if c is not None and c.value is None:
            grad += g1[b]
    return {"jump": jump, "grad": grad, "total": jump + grad}


def _grad_cache(A: Approximant) -> np.ndarray:
    if not hasattr(A, "_g1"):
        W = A.RC.W
        g1 = np.zeros(W.n_boxes)
        by_size: dict = {}
        for b in W.boxes:
            by_size.setdefault(b.size, []).append(b.id)
        for size, ids in by_size.items():
            ids = np.asarray(ids)
            los = np.array([W.boxes[i].lo for i in ids], dtype=float)
            lo = W.base + W.unit * los
            side = W.unit * size
            mgrid = 8
            t = (np.arange(mgrid) + 0.5) / mgrid
            gx, gy = np.meshgrid(t, t, indexing="ij")
            off = np.column_stack([gx.ravel(), gy.ravel()]) * side
            pts = (lo[:, None, :] + off[None, :, :]).reshape(-1, 2)
            gr = np.linalg.norm(A.u.grad(pts), axis=1).reshape(len(ids), -1)
            g1[ids] = gr.sum(axis=1) * (side / mgrid) ** 2
        A._g1 = g1
    return A._g1


# ---------------------------------------------------------------------------
# deviation sups and certification
# ---------------------------------------------------------------------------


def deviation_sups(FS: FunctionalSuite, A: Approximant) -> np.ndarray:
    """Per box: grid sup of |u - phi| over the fattened grid.

    phi is evaluated through the owning core box of each grid point, so the
    sup honestly sees across cell boundaries inside the fattened margin.
    """
    W = FS.W
    n = W.n_boxes
    val = np.full(n, np.nan)
    is_u = np.zeros(n, dtype=bool)
    covered = np.zeros(n, dtype=bool)
    for b in range(n):
        c = A.cell_of(b)
        if c is None:
            continue
        covered[b] = True
        if c.value is None:
            is_u[b] = True
        else:
            val[b] = c.value
    owners = FS.owners()
    out = np.zeros(n)
    for size in FS._by_size:
        ids, pts = FS.fat_points(size)
        flat = pts.reshape(-1, 2)
        uv = FS.u.eval(flat).reshape(pts.shape[:2])
        own = owners[size]
        ok = own >= 0
        own_safe = np.where(ok, own, 0)
        dev = np.abs(uv - val[own_safe])
        dev[is_u[own_safe]] = 0.0
        dev[~ok | ~covered[own_safe]] = 0.0
        out[ids] = dev.max(axis=1)
    return out


def nontangential_deviation(
    FS: FunctionalSuite, A: Approximant, restrict_to: frozenset | None = None
) -> np.ndarray:
    """N_*(u - phi) per sample (optionally 1_{T} restricted to a box set)."""
    dev = deviation_sups(FS, A)
    per_region: dict = {}
    for q, r in FS.RC.regions.items():
        boxes = r.boxes
        if restrict_to is not None:
            boxes = [b for b in boxes if b in restrict_to]
        per_region[q] = float(dev[boxes].max()) if boxes else 0.0
    out = np.zeros(FS.E.n_samples)
    for i, chain in enumerate(FS.chains):
        out[i] = max((per_region[q] for q in chain), default=0.0)
    return out


def find_alpha0(FS: FunctionalSuite, GF: GenerationForest) -> float:
    """Smallest aperture for which the anchor points X_P, Y_P of every
    generation cube P are inside Gamma_alpha(x) for all x in any cube Q
    with l(Q) <= l(P) whose Carleson box meets the subregime sawtooth."""
    S, RC = FS.S, FS.RC
    if FS._anc is None:
        FS.anc_scatter(np.zeros(FS.W.n_boxes))
    needed = 1.0
    for p in sorted(GF.all_cubes):
        reg = RC.regions.get(p)
        if reg is None or not reg.good:
            continue
        omega = RC.sawtooth(GF.members[p])
        qs: set = set()
        for b in omega:
            qs.update(FS._anc.get(b, ()))
        anchor_boxes = []
        for sign in "+-":
            r = RC.regions[p]
            anchor_boxes.append(r.centers[r.labels.index(sign)])
            pr = S.cube(p).rparent
            if pr is not None and RC.regions[pr].good:
                rp = RC.regions[pr]
                anchor_boxes.append(rp.centers[rp.labels.index(sign)])
        for q in sorted(qs):
            if S.side(q) > S.side(p):
                continue
            for b in anchor_boxes:
                needed = max(needed, _alpha_for(FS, q, b))
    return needed


def _alpha_for(FS: FunctionalSuite, q: int, bid: int) -> float:
    """Smallest alpha putting box bid's owner regions into Gamma_alpha(x), x in Q."""
    S = FS.S
    best = np.inf
    for p_own, _ in FS.RC.box_owners.get(bid, ()):
        k = S.cube(p_own).k
        anc = S.ancestor_at_gen(q, k)
        if anc is None:
            continue
        c = S.cube(anc)
        d = np.linalg.norm(S.E.points[S.cube(p_own).sample_idx] - c.z, axis=1)
        best = min(best, float(np.min(d)) / (S.C1 * c.side))
    return 1.0 if best == np.inf else max(1.0, best * (1 + 1e-9))


def verify_approximation(
    FS: FunctionalSuite,
    A: Approximant,
    eps: float,
    alpha0: float,
    certified: np.ndarray,
    p_grid=(1.5, 2.0, 4.0),
    c1_budget: float = 4.0,
    ball_stride: int = 8,
) -> dict:
    """The three certification sweeps for one approximant.

    (i) pointwise: N_*(u-phi) <= C1 * eps * M_dyadic(N_* u) at certified
        samples, plus the constant-free local form inside T_{q0};
    (ii) dyadic Carleson: C_dyadic(grad phi) <= C2 * eps^{-2} *
        M(M_dyadic(N_*^{alpha0} u));
    (iii) L^p roll-ups of both against ||N_* u||_p.
    Smallest passing constants are reported; `pass` keys compare C1 to its
    budget (C2 and the L^p constants are reported for cross-eps stability).
    """
    from .carleson import hl_maximal

    S, w = FS.S, FS.E.weights
    cert = np.asarray(certified, dtype=bool)
    _, m_point = FS.cube_numbers(None)
    ndev = nontangential_deviation(FS, A)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = ndev[cert] / (eps * m_point[cert])
    ratio = ratio[np.isfinite(ratio)]
    c1 = float(ratio.max()) if len(ratio) else 0.0
    # constant-free local form on T_{q0}
    t0 = A.RC.carleson_box(A.q0) if A.q0 is not None else frozenset()
    ndev_local = nontangential_deviation(FS, A, restrict_to=t0)
    in_q0 = np.zeros(FS.E.n_samples, dtype=bool)
    in_q0[S.cube(A.q0).sample_idx] = True
    sel = cert & in_q0
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = ndev_local[sel] / (eps * m_point[sel])
    lr = lr[np.isfinite(lr)]
    c_local = float(lr.max()) if len(lr) else 0.0

    # (ii) dyadic Carleson functional of the TV measure
    cd = FS.carleson_dyadic(A.tv_box)
    _, m_alpha = FS.cube_numbers(alpha0)
    mm = hl_maximal(S, m_alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = cd[cert] * eps**2 / mm[cert]
    r2 = r2[np.isfinite(r2)]
    c2 = float(r2.max()) if len(r2) else 0.0

    # (iii) L^p roll-ups
    ids = np.nonzero(cert)[0][::ball_stride]
    cball = FS.carleson_ball(A.tv_box, ids)
    ns = FS.n_star(None)
    lp = {}
    for p in p_grid:
        n_u = lp_norm(ns[cert], w[cert], p)
        c1p = lp_norm(ndev[cert], w[cert], p) / (eps * n_u) if n_u else 0.0
        n_u_sub = lp_norm(ns[ids], w[ids], p)
        c2p = (
            lp_norm(cball, w[ids], p) * eps**2 / n_u_sub if n_u_sub else 0.0
        )
        lp[p] = {"C1p": float(c1p), "C2p": float(c2p)}
    return {
        "eps": eps,
        "alpha0": alpha0,
        "C1": c1,
        "C1_pass": bool(c1 <= c1_budget),
        "C_local": c_local,
        "C_local_pass": bool(c_local <= 1.0 + 1e-9),
        "C2": c2,
        "lp": lp,
        "n_jump_facets": len(A.jump_facets),
        "tv_total": float(A.tv_box.sum()),
    }
