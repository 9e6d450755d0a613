"""Stopping-time cube families and their packing certification.

Three constructions drive the approximant:

* principal cubes: stop where the cube numbers sup_{R >= Q} avg_R(N_* u)
  more than double relative to the governing stopping ancestor;
* large-oscillation cubes: components where u oscillates more than
  eps times the cube number, labeled red (else blue);
* generation cubes: per corona regime, stop when the regime is exited or
  the value of u at the region anchor points drifts more than eps times
  the cube number.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .carleson import packing_constant
from .dyadic import CubeSystem
from .functionals import FunctionalSuite
from .whitney import CoronaDecomposition, RegionComplex


# ---------------------------------------------------------------------------
# principal cubes
# ---------------------------------------------------------------------------


@dataclass
class PrincipalFamily:
    cubes: set
    initial: list  # the increasing chain I
    projection: dict  # qid -> smallest family cube containing it
    stop_parent: dict  # family cube -> the cube it stopped against
    depth: dict  # family cube -> chain length to the initial collection

    def to_json(self):
        return {
            "cubes": sorted(self.cubes),
            "initial": list(self.initial),
            "max_depth": max(self.depth.values(), default=0),
        }


def initial_chain(S: CubeSystem) -> list:
    """Ancestor chain of the central base cube, coarsest first.

    For bounded boundaries this is just the relevant root.
    """
    if S.E.bounded:
        return [S.roots[0]]
    center = np.asarray(
        [(l + h) / 2 for l, h in zip(S.E.window.lo, S.E.window.hi)]
    )
    i = int(np.argmin(np.linalg.norm(S.E.points - center, axis=1)))
    return S.chain(i)


def principal_cubes(S: CubeSystem, numbers: dict, chain: list) -> PrincipalFamily:
    """Iterated maximal-stopping family for the doubling condition.

    numbers: per-cube value of sup over ancestors of the N_* u average.
    chain: increasing initial collection (finest first in tree order is not
    required; it is sorted internally).
    """
    chain = sorted(chain, key=lambda q: S.cube(q).k)
    if not chain:
        raise ValueError("initial collection is empty")
    fam = set(chain)
    proj: dict = {}
    stop_parent: dict = {}
    depth = {q: 0 for q in chain}

    def project_all():
        for q in sorted(S.relevant_ids(), key=lambda i: S.cube(i).k):
            if q in fam:
                proj[q] = q
            else:
                p = S.cube(q).rparent
                proj[q] = proj[p] if p is not None else None

    project_all()
    changed = True
    while changed:
        changed = False
        # maximal violators only: scan top-down; anything below a violator
        # added this round is blocked until the next round re-projects it
        blocked: set = set()
        added = []
        for q in sorted(S.relevant_ids(), key=lambda i: S.cube(i).k):
            p = S.cube(q).rparent
            if p in blocked:
                blocked.add(q)
                continue
            if q in fam or proj[q] is None:
                continue
            anchor = proj[q]
            if numbers[q] > 2 * numbers[anchor]:
                added.append((q, anchor))
                blocked.add(q)
        for q, anchor in added:
            fam.add(q)
            stop_parent[q] = anchor
            depth[q] = depth[anchor] + 1
            changed = True
        if changed:
            project_all()
    if None in proj.values():
        raise ValueError("initial chain does not cover the forest roots")
    return PrincipalFamily(
        cubes=fam,
        initial=list(chain),
        projection=proj,
        stop_parent=stop_parent,
        depth=depth,
    )


def verify_principal_packing(
    S: CubeSystem, fam: PrincipalFamily, numbers: dict, budget_factor: float = 4.0
) -> dict:
    """Packing of the family against factor * Lambda(initial chain).

    Also checks the per-level geometric decay: the depth-k cubes below any
    family cube carry at most sigma(Q)/2^k (exact in the discrete system),
    and the doubling control numbers[Q] <= 2*numbers[projection(Q)].
    """
    lam_chain = packing_constant(S, fam.initial)
    lam = packing_constant(S, sorted(fam.cubes))
    level_ok = True
    for q in fam.cubes:
        below = [
            r
            for r in fam.cubes
            if r != q and fam.depth[r] > fam.depth[q] and S.contains(q, r)
        ]
        by_level: dict = {}
        for r in below:
            by_level.setdefault(fam.depth[r] - fam.depth[q], 0.0)
            by_level[fam.depth[r] - fam.depth[q]] += S.sigma(r)
        for k, s in by_level.items():
            if s > S.sigma(q) / 2**k * (1 + 1e-9):
                level_ok = False
    doubling_ok = all(
        numbers[q] <= 2 * numbers[fam.projection[q]] * (1 + 1e-12)
        for q in S.relevant_ids()
        if q not in fam.cubes
    )
    passed = lam <= budget_factor * lam_chain and level_ok and doubling_ok
    return {
        "Lambda": lam,
        "Lambda_initial": lam_chain,
        "level_decay_ok": level_ok,
        "doubling_ok": doubling_ok,
        "pass": bool(passed),
    }


# ---------------------------------------------------------------------------
# oscillation cubes
# ---------------------------------------------------------------------------


@dataclass
class OscillationLabels:
    eps: float
    osc: dict  # (qid, comp idx) -> oscillation of u
    red: set  # (qid, comp idx) with large oscillation
    cubes: set  # qids with some red component (the collection R)

    def is_red(self, qid: int, ci: int) -> bool:
        return (qid, ci) in self.red

    def to_json(self):
        return {"eps": self.eps, "n_red_cubes": len(self.cubes)}


def oscillation_cubes(
    FS: FunctionalSuite, eps: float, numbers: dict
) -> OscillationLabels:
    """Label region components red/blue by osc u > eps * cube number."""
    if not 0 < eps < 1:
        raise ValueError("eps must be in (0,1)")
    osc = FS.oscillations()
    red = set()
    cubes = set()
    for (q, ci), v in osc.items():
        if v > eps * numbers[q]:
            red.add((q, ci))
            cubes.add(q)
    return OscillationLabels(eps=eps, osc=osc, red=red, cubes=cubes)


# ---------------------------------------------------------------------------
# generation cubes
# ---------------------------------------------------------------------------


@dataclass
class GenerationForest:
    eps: float
    generations: dict  # regime idx -> list of sets G_0, G_1, ...
    all_cubes: set  # G*: union over regimes and generations
    subregime_top: dict  # qid in a regime -> generation cube anchoring it
    members: dict = field(default_factory=dict)  # gen cube -> its subregime

    def subregime(self, gen_cube: int) -> set:
        return self.members[gen_cube]

    def to_json(self):
        return {
            "eps": self.eps,
            "n_generation_cubes": len(self.all_cubes),
            "max_generations": max(
                (len(g) for g in self.generations.values()), default=0
            ),
        }


def generation_cubes(
    RC: RegionComplex, eps: float, numbers: dict, u
) -> GenerationForest:
    """Per-regime breadth-first stopping on regime exit or anchor drift.

    Stopping at Q: (1) Q outside the regime, or (2)/(3) the value of u at
    Y_Q^{+/-} drifts from the current generation cube's anchor by more than
    eps * numbers[Q].  Cubes without anchor points (demoted) stop via (1).
    """
    S = RC.S
    corona = RC.corona
    generations: dict = {}
    subregime_top: dict = {}
    members: dict = {}
    all_cubes: set = set()

    def anchor_vals(q):
        out = {}
        for sign in "+-":
            out[sign] = float(u.eval(RC.y_point(q, sign)[None, :])[0])
        return out

    for reg in corona.regimes:
        gens = [{reg.max_cube}]
        all_cubes.add(reg.max_cube)
        frontier = [reg.max_cube]
        while frontier:
            next_gen: set = set()
            for top in frontier:
                ref = anchor_vals(top)
                sub = {top}
                stack = list(S.cube(top).rchildren)
                while stack:
                    q = stack.pop()
                    stopped = False
                    if q not in reg.cubes:
                        stopped = True  # condition (1); also demoted cubes
                    else:
                        vals = anchor_vals(q)
                        drift = max(
                            abs(vals["+"] - ref["+"]), abs(vals["-"] - ref["-"])
                        )
                        if drift > eps * numbers[q]:
                            stopped = True  # conditions (2)/(3)
                    if stopped:
                        if q in reg.cubes:
                            next_gen.add(q)  # stop cube inside the regime
                        continue
                    sub.add(q)
                    stack.extend(S.cube(q).rchildren)
                members[top] = sub
                for q in sub:
                    subregime_top[q] = top
            if next_gen:
                gens.append(next_gen)
                all_cubes.update(next_gen)
            frontier = sorted(next_gen)
        generations[reg.idx] = gens
    return GenerationForest(
        eps=eps,
        generations=generations,
        all_cubes=all_cubes,
        subregime_top=subregime_top,
        members=members,
    )


# ---------------------------------------------------------------------------
# eps^{-2} packing verification
# ---------------------------------------------------------------------------


def oscillation_square_domination(FS: FunctionalSuite, signs=("+", "-")) -> float:
    """Measured C in (osc_{U_Q^s} u)^2 <= C l(Q)^{-n} int_{U_Q^s} |grad u|^2 delta.

    Quadrature on both sides over the good cubes; the right side integrates
    over the component's core boxes with delta = dist(box, E).
    """
    from .geometry import _distance

    S = FS.S
    n = FS.E.n
    mx, mn = FS.box_extrema()
    _, g2 = FS.grad_integrals()  # per box: int |grad u|^2 delta^{1-n}
    worst = 0.0
    for q, r in FS.RC.regions.items():
        if not r.good:
            continue
        for sign in signs:
            comp = r.components[r.labels.index(sign)]
            osc = float(mx[comp].max() - mn[comp].min())
            if osc == 0.0:
                continue
            integral = 0.0
            for b in comp:
                lo, hi = FS.W.geom(b)
                mids = (lo + hi) / 2.0
                delta = float(_distance(mids[None, :], FS.E)[0])
                # rescale the delta^{1-n} weight to delta via the box center
                integral += g2[b] * delta**n
            if integral > 0:
                worst = max(worst, osc**2 * S.side(q) ** n / integral)
    return worst


def verify_eps_packing(
    S: CubeSystem, collection, eps: float, budget: float = 64.0
) -> dict:
    """Lambda = packing constant; pass iff Lambda <= budget / eps^2."""
    lam = packing_constant(S, collection)
    return {
        "eps": eps,
        "Lambda": lam,
        "bound": budget / eps**2,
        "pass": bool(lam <= budget / eps**2),
    }


def eps_scaling_chart(results: list) -> dict:
    """log Lambda vs log(1/eps) slopes across an eps grid."""
    pts = sorted((r["eps"], r["Lambda"]) for r in results if r["Lambda"] > 0)
    slopes = []
    for (e1, l1), (e2, l2) in zip(pts, pts[1:]):
        slopes.append(float(np.log(l2 / l1) / np.log(e1 / e2)))
    return {"points": pts, "slopes": slopes, "max_slope": max(slopes, default=0.0)}
