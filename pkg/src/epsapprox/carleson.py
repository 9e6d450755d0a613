"""Packing constants, sparse witnesses, maximal operators, discrete embedding.

The sparse witness is produced by an exact max-flow (Dinic) on the bipartite
graph (cubes) x (samples): source -> cube with capacity lambda*sigma(Q),
cube -> member sample with unbounded capacity, sample -> sink with capacity
equal to its quadrature weight.  Feasibility of the flow at lambda = 1/Lambda
is the constructive face of the sparse <=> Carleson equivalence; witnesses
are fractional (sample weights may be split between cubes).
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .dyadic import CubeSystem


@dataclass(frozen=True)
class CubeCollection:
    """A set of relevant cube ids in a host system."""

    ids: frozenset

    def __post_init__(self):
        object.__setattr__(self, "ids", frozenset(int(i) for i in self.ids))

    def __iter__(self):
        return iter(sorted(self.ids))

    def __len__(self):
        return len(self.ids)

    def to_json(self):
        return sorted(self.ids)


def _as_ids(collection) -> list:
    if isinstance(collection, CubeCollection):
        return sorted(collection.ids)
    return sorted(set(int(i) for i in collection))


# ---------------------------------------------------------------------------
# packing
# ---------------------------------------------------------------------------


def subtree_sums(S: CubeSystem, collection) -> dict:
    """Per relevant cube Q0: sum of sigma(Q) over collection cubes inside Q0."""
    ids = set(_as_ids(collection))
    sums: dict = {}
    order = sorted(S.relevant_ids(), key=lambda q: -S.cube(q).k)
    for q in order:
        s = S.sigma(q) if q in ids else 0.0
        for ch in S.cube(q).rchildren:
            s += sums[ch]
        sums[q] = s
    return sums


def packing_constant(S: CubeSystem, collection, within: int | None = None) -> float:
    """max over Q0 of sum_{Q in collection, Q inside Q0} sigma(Q) / sigma(Q0).

    `within` restricts both the collection and the candidate Q0 to a subtree.
    Returns 0.0 for an empty collection.
    """
    ids = _as_ids(collection)
    if within is not None:
        inside = set(S.descendants(within))
        ids = [q for q in ids if q in inside]
        candidates = inside
    else:
        candidates = None
    if not ids:
        return 0.0
    sums = subtree_sums(S, ids)
    best = 0.0
    for q, s in sums.items():
        if candidates is not None and q not in candidates:
            continue
        sig = S.sigma(q)
        if sig <= 0:
            warnings.warn(f"cube {q} has zero measure; skipped", stacklevel=2)
            continue
        best = max(best, s / sig)
    return best


# ---------------------------------------------------------------------------
# max-flow (Dinic) and sparse witnesses
# ---------------------------------------------------------------------------


class _Dinic:
    def __init__(self, n: int):
        self.n = n
        self.to: list = []
        self.cap: list = []
        self.head: list = [[] for _ in range(n)]

    def add(self, u: int, v: int, c: float) -> int:
        e = len(self.to)
        self.to += [v, u]
        self.cap += [c, 0.0]
        self.head[u].append(e)
        self.head[v].append(e + 1)
        return e

    def maxflow(self, s: int, t: int, eps: float) -> float:
        flow = 0.0
        while True:
            level = [-1] * self.n
            level[s] = 0
            dq = deque([s])
            while dq:
                u = dq.popleft()
                for e in self.head[u]:
                    v = self.to[e]
                    if self.cap[e] > eps and level[v] < 0:
                        level[v] = level[u] + 1
                        dq.append(v)
            if level[t] < 0:
                return flow
            it = [0] * self.n

            def dfs(u: int, f: float) -> float:
                if u == t:
                    return f
                while it[u] < len(self.head[u]):
                    e = self.head[u][it[u]]
                    v = self.to[e]
                    if self.cap[e] > eps and level[v] == level[u] + 1:
                        d = dfs(v, min(f, self.cap[e]))
                        if d > eps:
                            self.cap[e] -= d
                            self.cap[e ^ 1] += d
                            return d
                    it[u] += 1
                return 0.0

            while True:
                f = dfs(s, float("inf"))
                if f <= eps:
                    break
                flow += f

    def source_side(self, s: int, eps: float) -> set:
        """Nodes reachable from s in the residual graph (a min cut)."""
        seen = {s}
        dq = deque([s])
        while dq:
            u = dq.popleft()
            for e in self.head[u]:
                v = self.to[e]
                if self.cap[e] > eps and v not in seen:
                    seen.add(v)
                    dq.append(v)
        return seen


@dataclass
class SparseWitness:
    lam: float
    assignments: dict  # qid -> list of (sample index, mass)
    feasible: bool = True

    def mass(self, qid: int) -> float:
        return sum(m for _, m in self.assignments[qid])

    def to_json(self):
        return {
            "lambda": self.lam,
            "feasible": True,
            "assignments": {
                str(q): [[int(i), m] for i, m in v]
                for q, v in self.assignments.items()
            },
        }


@dataclass
class InfeasibleCut:
    lam: float
    cut_cubes: list  # subfamily whose demand exceeds the mass of its union
    demand: float
    capacity: float
    feasible: bool = False

    def to_json(self):
        return {
            "lambda": self.lam,
            "feasible": False,
            "cut_cubes": self.cut_cubes,
            "demand": self.demand,
            "capacity": self.capacity,
        }


def sparse_witness(S: CubeSystem, collection, lam: float):
    """Disjoint major subsets E_Q with sigma(E_Q) >= lam*sigma(Q), or a cut.

    Decided exactly by max-flow; witnesses are fractional in the sample
    weights.  Infeasibility returns the violating subfamily from the min cut.
    """
    if not (0 < lam <= 1):
        raise ValueError("lambda must be in (0, 1]")
    ids = _as_ids(collection)
    if not ids:
        return SparseWitness(lam=lam, assignments={})
    samples = sorted(set(int(i) for q in ids for i in S.cube(q).sample_idx))
    samp_node = {s: 1 + len(ids) + j for j, s in enumerate(samples)}
    src = 0
    sink = 1 + len(ids) + len(samples)
    net = _Dinic(sink + 1)
    w = S.E.weights
    demand = 0.0
    src_edges = []
    mid_edges: dict = {}
    for a, q in enumerate(ids):
        d = lam * S.sigma(q)
        demand += d
        src_edges.append(net.add(src, 1 + a, d))
        mid_edges[q] = [
            (net.add(1 + a, samp_node[int(i)], float("inf")), int(i))
            for i in S.cube(q).sample_idx
        ]
    for s in samples:
        net.add(samp_node[s], sink, float(w[s]))
    eps = 1e-12 * max(demand, 1.0)
    flow = net.maxflow(src, sink, eps)
    if flow >= demand - 1e-9 * max(demand, 1.0):
        assignments = {}
        for q in ids:
            rows = []
            for e, i in mid_edges[q]:
                used = net.cap[e ^ 1]  # flow pushed = reverse capacity
                if used > eps:
                    rows.append((i, float(used)))
            assignments[q] = rows
        return SparseWitness(lam=lam, assignments=assignments)
    side = net.source_side(src, eps)
    cut = [q for a, q in enumerate(ids) if (1 + a) in side]
    members = set()
    for q in cut:
        members.update(int(i) for i in S.cube(q).sample_idx)
    return InfeasibleCut(
        lam=lam,
        cut_cubes=cut,
        demand=float(sum(lam * S.sigma(q) for q in cut)),
        capacity=float(sum(w[i] for i in members)),
    )


# ---------------------------------------------------------------------------
# maximal operators
# ---------------------------------------------------------------------------


def dyadic_maximal(S: CubeSystem, f: np.ndarray) -> np.ndarray:
    """M_dyadic f: per sample, sup of |f| cube averages along its chain."""
    f = np.abs(np.asarray(f, dtype=float))
    avg = S.cube_averages(f)
    best: dict = {}
    out = np.zeros(S.E.n_samples)
    order = sorted(S.relevant_ids(), key=lambda q: S.cube(q).k)
    for q in order:
        p = S.cube(q).rparent
        best[q] = max(avg[q], best[p]) if p is not None else avg[q]
    for q in order:
        if not S.cube(q).rchildren:
            out[S.cube(q).sample_idx] = best[q]
    return out


def default_radii(S: CubeSystem, extra: int = 8) -> np.ndarray:
    """Log radius grid aligned with C1*l(Q) over the generation range."""
    rs = [S.C1 * 2.0 ** (-k) * S.scale for k in range(S.k_min, S.k_max + 1)]
    lo, hi = min(rs), max(rs)
    grid = np.geomspace(lo / 2, hi * 2, extra)
    return np.unique(np.concatenate([rs, grid]))


def hl_maximal(
    S: CubeSystem,
    f: np.ndarray,
    radii: np.ndarray | None = None,
    centers_stride: int = 1,
) -> np.ndarray:
    """Hardy-Littlewood maximal function over a radius/center grid.

    A lower bound of the true M f; the grid includes the surface-ball radii
    C1*l(Q) so cube averages are always dominated up to the ball/cube mass
    ratio.
    """
    E = S.E
    f = np.abs(np.asarray(f, dtype=float))
    if radii is None:
        radii = default_radii(S)
    pts, w = E.points, E.weights
    fw = f * w
    out = np.zeros(E.n_samples)
    centers = pts[::centers_stride]
    for c in centers:
        d = np.linalg.norm(pts - c, axis=1)
        order = np.argsort(d, kind="stable")
        dw = np.cumsum(w[order])
        dfw = np.cumsum(fw[order])
        pos = np.searchsorted(d[order], np.asarray(radii), side="left")
        for j, r in enumerate(radii):
            k = pos[j]
            if k == 0:
                continue
            avg = dfw[k - 1] / dw[k - 1]
            inside = d < r
            out[inside] = np.maximum(out[inside], avg)
    return out


# ---------------------------------------------------------------------------
# discrete Carleson embedding
# ---------------------------------------------------------------------------


def carleson_embedding_check(S: CubeSystem, f: np.ndarray, collection, q0: int):
    """lhs = sum над collection inside Q0 of int_Q f; rhs = Lambda*int_{Q0} M_dyadic f.

    Returns (lhs, rhs, holds).  A violation indicates an implementation bug:
    the inequality is unconditional.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("f must be nonnegative")
    ids = [q for q in _as_ids(collection) if S.contains(q0, q)]
    w = S.E.weights
    lhs = 0.0
    for q in ids:
        m = S.cube(q).sample_idx
        lhs += float(np.dot(f[m], w[m]))
    lam = packing_constant(S, ids, within=q0)
    md = dyadic_maximal(S, f)
    m0 = S.cube(q0).sample_idx
    rhs = lam * float(np.dot(md[m0], w[m0]))
    holds = lhs <= rhs * (1 + 1e-12) + 1e-15
    return lhs, rhs, holds
