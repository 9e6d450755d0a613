"""Whitney decomposition, Whitney regions, corona provider, Carleson boxes.

Boxes live on an integer lattice (unit = the finest box side, offsets from
the window corner), so facet areas, volumes and cell bookkeeping downstream
are exact dyadic arithmetic.  Fattened copies (1+tau)I, (1+2tau)I, (1+3tau)I
are used only for connectivity and for sup/quadrature grids; the partition
and all total-variation accounting run on the disjoint core boxes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .carleson import packing_constant
from .config import RegionParams
from .dyadic import CubeSystem
from .geometry import (
    BoundarySet,
    Window,
    box_distance_many,
    descriptor_from_json,
)


@dataclass
class WhitneyBox:
    id: int
    lo: tuple  # ints, units of `unit`, relative to base
    size: int  # side in units; a power of two
    dist: float  # dist(I, E)

    def geom(self, base, unit):
        lo = base + unit * np.asarray(self.lo, dtype=float)
        return lo, lo + unit * self.size


@dataclass
class WhitneyComplex:
    E: BoundarySet
    window: Window
    unit: float
    base: np.ndarray
    boxes: list
    neighbors: list  # per box: sorted ids with closed-box contact
    facets: list  # (a, b, axis, area) with a.hi == b.lo on axis, overlap > 0
    _level_index: dict = field(default_factory=dict)

    def __post_init__(self):
        for b in self.boxes:
            key = (b.size, tuple(c // b.size for c in b.lo))
            self._level_index[key] = b.id

    @property
    def n_boxes(self) -> int:
        return len(self.boxes)

    def geom(self, bid: int):
        return self.boxes[bid].geom(self.base, self.unit)

    def geom_arrays(self):
        los = np.array([b.lo for b in self.boxes], dtype=float)
        sizes = np.array([b.size for b in self.boxes], dtype=float)
        lo = self.base + self.unit * los
        hi = lo + self.unit * sizes[:, None]
        return lo, hi

    def side(self, bid: int) -> float:
        return self.unit * self.boxes[bid].size

    def volume(self, bid: int) -> float:
        b = self.boxes[bid]
        return (self.unit * b.size) ** len(b.lo)

    def sizes_present(self) -> list:
        return sorted({b.size for b in self.boxes})

    def locate(self, p) -> int | None:
        """Id of the core box containing p (lo <= p < hi), else None."""
        p = np.asarray(p, dtype=float)
        rel = (p - self.base) / self.unit
        for size in self.sizes_present():
            cell = tuple(int(np.floor(c / size)) for c in rel)
            bid = self._level_index.get((size, cell))
            if bid is not None:
                lo, hi = self.geom(bid)
                if np.all(p >= lo) and np.all(p < hi):
                    return bid
        return None


def whitney_decompose(
    E: BoundarySet, window: Window, min_side: float
) -> WhitneyComplex:
    """Dyadic Whitney boxes of window \\ E: accept I iff dist(I,E) >= diam(I).

    The parent-rejection structure then gives dist <= 4 diam for every
    accepted box.  Boxes finer than min_side are dropped (a thin collar near
    E below the working resolution); boxes must meet the open window.
    """
    dim = window.dim
    span = max(h - l for l, h in zip(window.lo, window.hi))
    n_units = 2 ** int(np.ceil(np.log2(span / min_side)))
    unit = min_side
    # anchor the lattice to the global dyadic grid so boxes align across
    # root cells and the hyperplane {y=0} is a box boundary at every scale
    cell = unit * n_units
    base = cell * np.floor(np.asarray(window.lo, dtype=float) / cell)
    sq2 = np.sqrt(float(dim))

    boxes: list[WhitneyBox] = []
    stack = [
        (tuple(n_units * o for o in off), n_units) for off in _corner_offsets(dim)
    ]
    while stack:
        lo, size = stack.pop()
        glo = base + unit * np.asarray(lo, dtype=float)
        ghi = glo + unit * size
        if np.any(glo >= window.hi) or np.any(ghi <= window.lo):
            continue
        d = _box_dist(glo, ghi, E)
        diam = sq2 * unit * size
        if d >= diam:
            boxes.append(WhitneyBox(id=-1, lo=lo, size=size, dist=float(d)))
            continue
        if size == 1:
            continue
        half = size // 2
        for off in _corner_offsets(dim):
            child = tuple(c + half * o for c, o in zip(lo, off))
            stack.append((child, half))

    boxes.sort(key=lambda b: (b.size, b.lo))
    for i, b in enumerate(boxes):
        b.id = i
    neighbors, facets = _adjacency(boxes, unit)
    return WhitneyComplex(
        E=E,
        window=window,
        unit=unit,
        base=base,
        boxes=boxes,
        neighbors=neighbors,
        facets=facets,
    )


def _corner_offsets(dim):
    out = []
    for m in range(2**dim):
        out.append(tuple((m >> i) & 1 for i in range(dim)))
    return out


def _box_dist(glo, ghi, E: BoundarySet) -> float:
    return box_distance_many(glo[None, :], ghi[None, :], E)[0]


def _adjacency(boxes, unit):
    """Face sweep: contacts (incl. corner touch) and positive-area facets.

    Faces sharing a plane form two sequences of non-overlapping intervals
    (the boxes on either side tile), so a sorted two-pointer merge finds all
    contacts in linear time.
    """
    dim = len(boxes[0].lo) if boxes else 2
    if dim != 2:
        raise NotImplementedError("box adjacency implemented for the plane")
    neighbors = [set() for _ in boxes]
    facets = []
    for axis in range(dim):
        perp = 1 - axis
        plane: dict = {}
        for b in boxes:
            plane.setdefault(b.lo[axis] + b.size, ([], []))[0].append(b)
            plane.setdefault(b.lo[axis], ([], []))[1].append(b)
        for _, (plus, minus) in plane.items():
            if not plus or not minus:
                continue
            plus.sort(key=lambda b: b.lo[perp])
            minus.sort(key=lambda b: b.lo[perp])
            i = j = 0
            while i < len(plus) and j < len(minus):
                a, c = plus[i], minus[j]
                lo = max(a.lo[perp], c.lo[perp])
                hi = min(a.lo[perp] + a.size, c.lo[perp] + c.size)
                if hi > lo:
                    neighbors[a.id].add(c.id)
                    neighbors[c.id].add(a.id)
                    facets.append((a.id, c.id, axis, float((hi - lo) * unit)))
                if a.lo[perp] + a.size <= c.lo[perp] + c.size:
                    i += 1
                else:
                    j += 1
    # corner contacts (zero-overlap, incl. diagonal) via shared corner points
    corner_map: dict = {}
    for b in boxes:
        x0, y0 = b.lo
        s = b.size
        for corner in ((x0, y0), (x0 + s, y0), (x0, y0 + s), (x0 + s, y0 + s)):
            corner_map.setdefault(corner, []).append(b.id)
    for ids in corner_map.values():
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                neighbors[ids[i]].add(ids[j])
                neighbors[ids[j]].add(ids[i])
    facets.sort()
    return [sorted(s) for s in neighbors], facets


# ---------------------------------------------------------------------------
# corona decomposition
# ---------------------------------------------------------------------------


@dataclass
class Regime:
    idx: int
    cubes: set
    max_cube: int
    graph: object  # descriptor with graph_value()

    def side_of(self, pts: np.ndarray) -> np.ndarray:
        g = self.graph.graph_value(pts[:, 0])
        return np.sign(pts[:, -1] - g)


@dataclass
class CoronaDecomposition:
    good: set
    bad: set
    regimes: list
    regime_of: dict  # qid -> regime idx
    eta: float
    K: float
    packing_measured: float = 0.0
    property3_sup: float = 0.0
    demoted: set = field(default_factory=set)

    def regime(self, qid: int) -> Regime | None:
        i = self.regime_of.get(qid)
        return None if i is None else self.regimes[i]

    def to_json(self):
        return {
            "eta": self.eta,
            "K": self.K,
            "n_regimes": len(self.regimes),
            "n_bad": len(self.bad),
            "n_demoted": len(self.demoted),
            "packing_measured": self.packing_measured,
            "property3_sup": self.property3_sup,
        }


def corona_provider(
    E: BoundarySet,
    S: CubeSystem,
    mode: str = "trivial_graph",
    eta: float = 0.25,
    K: float = 4.0,
    path=None,
    packing_budget: float = 16.0,
) -> CoronaDecomposition:
    """Good/bad cube partition into coherent regimes with Lipschitz graphs.

    trivial_graph: E itself is the graph of every regime; all cubes good.
    annotated: decomposition read from JSON and validated against coherency,
    the packing budget, and the two-sided graph-approximation property.
    """
    if mode == "trivial_graph":
        lip = E.descriptor.lipschitz
        if E.descriptor.graph_value(0.0) is None:
            raise ValueError("trivial_graph corona requires a graph-like boundary")
        if lip > eta:
            raise ValueError(
                f"graph Lipschitz constant {lip} exceeds corona eta {eta}"
            )
        regimes = []
        regime_of = {}
        for i, root in enumerate(S.roots):
            cubes = set(S.descendants(root))
            regimes.append(
                Regime(idx=i, cubes=cubes, max_cube=root, graph=E.descriptor)
            )
            for q in cubes:
                regime_of[q] = i
        corona = CoronaDecomposition(
            good=set(S.relevant_ids()),
            bad=set(),
            regimes=regimes,
            regime_of=regime_of,
            eta=eta,
            K=K,
        )
    elif mode == "annotated":
        with open(path) as fh:
            spec = json.load(fh)
        corona = _validate_annotated(E, S, spec, eta, K)
    else:
        raise ValueError(f"unknown corona mode {mode!r}")

    corona.packing_measured = packing_constant(
        S, list(corona.bad) + [r.max_cube for r in corona.regimes]
    )
    if corona.packing_measured > packing_budget:
        raise ValueError(
            f"corona packing {corona.packing_measured:.3g} exceeds budget"
        )
    corona.property3_sup = _property3_sup(E, S, corona)
    return corona


def _validate_annotated(E, S, spec, eta, K) -> CoronaDecomposition:
    relevant = set(S.relevant_ids())
    bad = set(int(q) for q in spec.get("bad", []))
    regimes = []
    regime_of = {}
    seen = set(bad)
    for i, r in enumerate(spec["regimes"]):
        cubes = set(int(q) for q in r["cubes"])
        if cubes & seen:
            raise ValueError(f"regime {i} overlaps earlier cubes")
        seen |= cubes
        maxima = [q for q in cubes if S.cube(q).rparent not in cubes]
        if len(maxima) != 1:
            raise ValueError(f"regime {i} is not coherent: maxima {sorted(maxima)}")
        top = maxima[0]
        for q in cubes:
            # intermediate cubes present (semicoherence)
            p = S.cube(q).rparent
            while p is not None and p != top:
                if p not in cubes and S.contains(top, p):
                    raise ValueError(
                        f"regime {i} misses intermediate cube {p} over {q}"
                    )
                p = S.cube(p).rparent
            # children all-in or all-out (coherence)
            ch = S.cube(q).rchildren
            inside = [c for c in ch if c in cubes]
            if inside and len(inside) != len(ch):
                raise ValueError(
                    f"regime {i} violates coherency at cube {q}: "
                    f"children split {sorted(inside)} vs {sorted(ch)}"
                )
        graph = descriptor_from_json(r["graph"]) if "graph" in r else E.descriptor
        regimes.append(Regime(idx=i, cubes=cubes, max_cube=top, graph=graph))
        for q in cubes:
            regime_of[q] = i
    if seen != relevant:
        missing = sorted(relevant - seen)[:5]
        raise ValueError(f"decomposition does not cover relevant cubes: {missing}...")
    corona = CoronaDecomposition(
        good=relevant - bad,
        bad=bad,
        regimes=regimes,
        regime_of=regime_of,
        eta=eta,
        K=K,
    )
    sup = _property3_sup(E, S, corona, reject=True)
    corona.property3_sup = sup
    return corona


def _property3_sup(E, S, corona, reject: bool = False) -> float:
    """sup over regime cubes of the two one-sided graph distances / (eta l(Q)).

    Exhaustive when validating an annotated decomposition (a violation must
    name its cube); sampled (<= 64 cubes per regime) for the trivial
    provider, whose distances vanish by construction.
    """
    worst = 0.0
    for reg in corona.regimes:
        pl = reg.graph.polyline(E.window, E.resolution / 2)
        if pl is None:
            pl = E.points
        cubes = sorted(reg.cubes)
        if not reject:
            cubes = cubes[:: max(1, len(cubes) // 64)]
        for q in cubes:
            c = S.cube(q)
            r = corona.K * c.side
            d = np.linalg.norm(E.points - c.z, axis=1)
            near = E.points[d <= r]
            a = _sup_dist(near, pl) if len(near) else 0.0
            dg = np.linalg.norm(pl - c.z, axis=1)
            on_ball = pl[dg <= r]
            b = _sup_dist(on_ball, E.points) if len(on_ball) else 0.0
            val = (a + b) / (corona.eta * c.side)
            worst = max(worst, val)
            if reject and val >= 1.0:
                raise ValueError(
                    f"regime {reg.idx} violates the graph-approximation "
                    f"property at cube {q}: (sup_dist {a + b:.4g}) >= "
                    f"eta*l(Q) = {corona.eta * c.side:.4g}"
                )
    return worst


def _sup_dist(pts: np.ndarray, targets: np.ndarray) -> float:
    worst = 0.0
    for p in pts[:: max(1, len(pts) // 64)]:
        worst = max(worst, float(np.min(np.linalg.norm(targets - p, axis=1))))
    return worst


# ---------------------------------------------------------------------------
# Whitney regions
# ---------------------------------------------------------------------------


@dataclass
class WhitneyRegion:
    qid: int
    boxes: list  # all member box ids, sorted
    components: list  # list of sorted box-id lists
    labels: list  # per component: '+', '-', or 'i<k>'
    centers: list  # per component: box id of the largest box (the X point)
    good: bool


@dataclass
class RegionComplex:
    S: CubeSystem
    W: WhitneyComplex
    corona: CoronaDecomposition
    params: RegionParams
    regions: dict  # qid -> WhitneyRegion
    box_owners: dict  # box id -> list of (qid, comp index)
    stats: dict

    def region(self, qid: int) -> WhitneyRegion:
        return self.regions[qid]

    def component(self, qid: int, label: str) -> list:
        r = self.regions[qid]
        return r.components[r.labels.index(label)]

    def x_point(self, qid: int, sign: str) -> np.ndarray:
        """X_Q^{sign}: center of the largest box of the signed component."""
        r = self.regions[qid]
        bid = r.centers[r.labels.index(sign)]
        lo, hi = self.W.geom(bid)
        return (lo + hi) / 2.0

    def y_point(self, qid: int, sign: str) -> np.ndarray:
        """Y_Q^{sign} = X of the parent (or of Q itself at a regime top)."""
        reg = self.corona.regime(qid)
        p = self.S.cube(qid).rparent
        if reg is not None and qid == reg.max_cube or p is None:
            return self.x_point(qid, sign)
        return self.x_point(p, sign)

    def carleson_box(self, qid: int) -> frozenset:
        """T_Q: member boxes over the relevant descendants of Q."""
        out = set()
        for q in self.S.descendants(qid):
            r = self.regions.get(q)
            if r is not None:
                out.update(r.boxes)
        return frozenset(out)

    def sawtooth(self, ids) -> frozenset:
        out = set()
        for q in ids:
            r = self.regions.get(q)
            if r is not None:
                out.update(r.boxes)
        return frozenset(out)

    def sawtooth_halves(self, ids):
        """(+ half, - half) of a sawtooth over good cubes."""
        plus, minus = set(), set()
        for q in ids:
            r = self.regions.get(q)
            if r is None or not r.good:
                raise ValueError(f"cube {q} has no signed region")
            for comp, lab in zip(r.components, r.labels):
                (plus if lab == "+" else minus).update(comp)
        return frozenset(plus), frozenset(minus)

    def box_anc_cubes(self, bid: int) -> list:
        """Cubes Q with box bid inside T_Q (ancestors of the owners)."""
        out = set()
        for q, _ in self.box_owners.get(bid, ()):
            out.update(self.S.ancestors(q))
        return sorted(out)


def build_regions(
    S: CubeSystem,
    W: WhitneyComplex,
    corona: CoronaDecomposition,
    params: RegionParams,
) -> RegionComplex:
    """Allocate Whitney boxes to cubes and split regions into components.

    Membership rule: I in W_Q iff c_w <= l(I)/l(Q) <= C_w and
    dist(I, bbox(Q)) <= C_d*l(Q).  Components by closed-box contact of the
    members.  Good cubes must split into exactly two components of uniform
    sign against the regime graph; defective ones are demoted to the bad set
    and the regimes are re-cohered.
    """
    lo_all, hi_all = W.geom_arrays()
    by_size: dict = {}
    for i, b in enumerate(W.boxes):
        by_size.setdefault(b.size, []).append(i)
    # per size group: ids sorted by geometric lo-x for windowed slicing
    size_index = {}
    for size, ids in by_size.items():
        ids = np.asarray(ids)
        order = np.argsort(lo_all[ids, 0], kind="stable")
        ids = ids[order]
        size_index[size] = (ids, lo_all[ids, 0])

    regions: dict = {}
    demoted = set()
    for q in sorted(S.relevant_ids()):
        c = S.cube(q)
        pts = S.E.points[c.sample_idx]
        qlo = pts.min(axis=0)
        qhi = pts.max(axis=0)
        members = []
        for size, (ids, lox) in size_index.items():
            side = size * W.unit
            ratio = side / c.side
            if ratio < params.c_w * (1 - 1e-9) or ratio > params.C_w * (1 + 1e-9):
                continue
            reach = params.C_d * c.side * (1 + 1e-9)
            a = np.searchsorted(lox, qlo[0] - reach - side)
            b = np.searchsorted(lox, qhi[0] + reach, side="right")
            ids_w = ids[a:b]
            # distance from box to the sample bbox of Q
            gap_lo = np.maximum(qlo[None, :] - hi_all[ids_w], 0.0)
            gap_hi = np.maximum(lo_all[ids_w] - qhi[None, :], 0.0)
            gap = np.sqrt(((gap_lo + gap_hi) ** 2).sum(axis=1))
            keep = ids_w[gap <= reach]
            members.extend(int(i) for i in keep)
        members.sort()
        comps = _components(members, W.neighbors)
        reg = corona.regime(q)
        good = q in corona.good
        p = c.rparent
        scale_defect = (
            p is not None
            and S.side(p) > params.max_parent_ratio * c.side * (1 + 1e-9)
        )
        labels, centers, ok = _label_components(W, comps, reg, good)
        if good and (not ok or scale_defect):
            demoted.add(q)
            good = False
            labels, centers, _ = _label_components(W, comps, None, False)
        regions[q] = WhitneyRegion(
            qid=q,
            boxes=members,
            components=comps,
            labels=labels,
            centers=centers,
            good=good,
        )

    corona2 = _recohere(S, corona, demoted)
    box_owners: dict = {}
    for q, r in regions.items():
        for ci, comp in enumerate(r.components):
            for bid in comp:
                box_owners.setdefault(bid, []).append((q, ci))
    for v in box_owners.values():
        v.sort()
    stats = _region_stats(S, W, regions, params)
    stats["demoted"] = sorted(demoted)
    return RegionComplex(
        S=S,
        W=W,
        corona=corona2,
        params=params,
        regions=regions,
        box_owners=box_owners,
        stats=stats,
    )


def _components(members, neighbors):
    member_set = set(members)
    seen = set()
    comps = []
    for b in members:
        if b in seen:
            continue
        comp = []
        stack = [b]
        seen.add(b)
        while stack:
            x = stack.pop()
            comp.append(x)
            for y in neighbors[x]:
                if y in member_set and y not in seen:
                    seen.add(y)
                    stack.append(y)
        comps.append(sorted(comp))
    comps.sort()
    return comps


def _label_components(W: WhitneyComplex, comps, reg, good):
    """Label components by graph side (good) or index (bad); find X boxes."""
    centers = []
    for comp in comps:
        best = max(comp, key=lambda b: (W.boxes[b].size, -b))
        centers.append(best)
    if not good or reg is None:
        return [f"i{k}" for k in range(len(comps))], centers, False
    if len(comps) != 2:
        return [f"i{k}" for k in range(len(comps))], centers, False
    labels = []
    for comp in comps:
        mids = np.array([(np.add(*W.geom(b))) / 2.0 for b in comp])
        side = reg.side_of(mids)
        if np.all(side > 0):
            labels.append("+")
        elif np.all(side < 0):
            labels.append("-")
        else:
            return [f"i{k}" for k in range(len(comps))], centers, False
    if set(labels) != {"+", "-"}:
        return [f"i{k}" for k in range(len(comps))], centers, False
    return labels, centers, True


def _recohere(S: CubeSystem, corona: CoronaDecomposition, demoted) -> CoronaDecomposition:
    """Demote cubes and split regimes so coherency survives."""
    if not demoted and not corona.demoted:
        return corona
    good = corona.good - demoted
    bad = corona.bad | demoted
    regimes: list = []
    regime_of: dict = {}
    order = sorted(S.relevant_ids(), key=lambda q: S.cube(q).k)
    for q in order:
        if q not in good:
            continue
        p = S.cube(q).rparent
        old = corona.regime_of.get(q)
        joins = (
            p is not None
            and p in regime_of
            and corona.regime_of.get(p) == old
            and all(ch in good for ch in S.cube(p).rchildren)
        )
        if joins:
            i = regime_of[p]
            regimes[i].cubes.add(q)
            regime_of[q] = i
        else:
            graph = corona.regimes[old].graph if old is not None else None
            reg = Regime(idx=len(regimes), cubes={q}, max_cube=q, graph=graph)
            regimes.append(reg)
            regime_of[q] = reg.idx
    return CoronaDecomposition(
        good=good,
        bad=bad,
        regimes=regimes,
        regime_of=regime_of,
        eta=corona.eta,
        K=corona.K,
        packing_measured=packing_constant(
            S, sorted(bad) + [r.max_cube for r in regimes]
        ),
        property3_sup=corona.property3_sup,
        demoted=set(demoted) | corona.demoted,
    )


def _region_stats(S, W, regions, params: RegionParams) -> dict:
    """Measured comparability constants of the region complex."""
    dim = W.window.dim
    vol_ratio_lo, vol_ratio_hi = np.inf, 0.0
    delta_lo, delta_hi = np.inf, 0.0
    overlap_num = 0.0
    covered: set = set()
    n_comp_max = 0
    for q, r in regions.items():
        if not r.boxes:
            continue
        c = S.cube(q)
        vol = sum(W.volume(b) for b in r.boxes)
        ratio = vol / c.side**dim
        vol_ratio_lo = min(vol_ratio_lo, ratio)
        vol_ratio_hi = max(vol_ratio_hi, ratio)
        overlap_num += vol
        covered.update(r.boxes)
        n_comp_max = max(n_comp_max, len(r.components))
        for b in r.boxes[:: max(1, len(r.boxes) // 8)]:
            lo, hi = W.geom(b)
            d = W.boxes[b].dist
            mid_delta = d + 0.0  # dist(I,E) ~ delta at the box within a diam
            delta_lo = min(delta_lo, mid_delta / c.side)
            delta_hi = max(delta_hi, (d + np.sqrt(dim) * W.side(b)) / c.side)
    union_vol = sum(W.volume(b) for b in covered)
    return {
        "volume_ratio_range": (float(vol_ratio_lo), float(vol_ratio_hi)),
        "delta_over_side_range": (float(delta_lo), float(delta_hi)),
        "bounded_overlap": float(overlap_num / union_vol) if union_vol else 0.0,
        "max_components": n_comp_max,
        "n_boxes_covered": len(covered),
    }
