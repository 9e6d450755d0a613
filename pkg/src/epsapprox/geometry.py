"""Boundary sets: analytic descriptors plus quadrature sample clouds.

A boundary set E is represented doubly: an analytic descriptor (used for
exact or near-exact distance queries) and a finite sample cloud with
per-sample quadrature weights (used for every surface integral).  All
surface measures are weight sums; the weight of a sample is the local
arclength/area element times the sample spacing.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

GEOM_TOL = 1e-9


@dataclass(frozen=True)
class Window:
    """Axis-aligned ambient box; `lo`/`hi` are per-axis bounds."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def span(self) -> float:
        return max(h - l for l, h in zip(self.lo, self.hi))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def shrink(self, margin: float) -> "Window":
        return Window(
            tuple(l + margin for l in self.lo), tuple(h - margin for h in self.hi)
        )

    def to_json(self):
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @staticmethod
    def from_json(obj) -> "Window":
        return Window(tuple(obj["lo"]), tuple(obj["hi"]))


# ---------------------------------------------------------------------------
# descriptors
# ---------------------------------------------------------------------------


class Descriptor:
    """Analytic boundary description. Subclasses fill in sampling/distance."""

    kind = "abstract"
    lipschitz = 0.0

    def sample(self, window: Window, resolution: float):
        raise NotImplementedError

    def graph_value(self, x):
        """Height of the graph over parameter x; None if not graph-like."""
        return None

    def polyline(self, window: Window, step: float):
        """Dense polyline approximation of E inside the window (graph-like)."""
        return None

    def diameter(self, window: Window) -> float:
        return float("inf")

    def to_json(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Hyperplane(Descriptor):
    """The hyperplane {x_{d} = 0} in R^{d+1}; for d=1 the x-axis in R^2."""

    kind: str = field(default="hyperplane", init=False)

    lipschitz = 0.0

    def graph_value(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def sample(self, window: Window, resolution: float):
        lo, hi = window.lo[0], window.hi[0]
        n = int(round((hi - lo) / resolution)) + 1
        xs = np.linspace(lo, hi, n)
        pts = np.column_stack([xs, np.zeros_like(xs)])
        w = np.full(n, resolution)
        return pts, w, xs

    def polyline(self, window: Window, step: float):
        lo, hi = window.lo[0], window.hi[0]
        n = max(2, int(np.ceil((hi - lo) / step)) + 1)
        xs = np.linspace(lo, hi, n)
        return np.column_stack([xs, np.zeros_like(xs)])

    def to_json(self):
        return {"type": "hyperplane", "params": {}}


_PROFILES = {
    "linear": (lambda x, s: s * x, lambda s: abs(s)),
    "abs": (lambda x, s: s * np.abs(x), lambda s: abs(s)),
    "sin": (lambda x, s: s * np.sin(x), lambda s: abs(s)),
}


@dataclass(frozen=True)
class LipschitzGraph(Descriptor):
    """Graph {(x, g(x))} for a named slope profile with constant `slope`."""

    profile: str
    slope: float
    kind: str = field(default="lipschitz_graph", init=False)

    def __post_init__(self):
        if self.profile not in _PROFILES:
            raise ValueError(f"unknown graph profile {self.profile!r}")

    @property
    def lipschitz(self) -> float:
        return _PROFILES[self.profile][1](self.slope)

    def graph_value(self, x):
        return _PROFILES[self.profile][0](np.asarray(x, dtype=float), self.slope)

    def sample(self, window: Window, resolution: float):
        lo, hi = window.lo[0], window.hi[0]
        n = int(round((hi - lo) / resolution)) + 1
        xs = np.linspace(lo, hi, n)
        pts = np.column_stack([xs, self.graph_value(xs)])
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)  # secant lengths
        h = (hi - lo) / (n - 1)
        s = np.empty(n)
        s[1:-1] = (seg[:-1] + seg[1:]) / (2 * h)
        s[0] = seg[0] / h
        s[-1] = seg[-1] / h
        return pts, h * s, xs

    def polyline(self, window: Window, step: float):
        lo, hi = window.lo[0], window.hi[0]
        n = max(2, int(np.ceil((hi - lo) / step)) + 1)
        xs = np.linspace(lo, hi, n)
        return np.column_stack([xs, self.graph_value(xs)])

    def to_json(self):
        return {
            "type": "lipschitz_graph",
            "params": {"profile": self.profile, "slope": self.slope},
        }


@dataclass(frozen=True)
class Segment(Descriptor):
    """Bounded piece [a,b] of the x-axis: the bounded graph-like catalog item."""

    a: float
    b: float
    kind: str = field(default="segment", init=False)

    lipschitz = 0.0

    def graph_value(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def sample(self, window: Window, resolution: float):
        # midpoint sampling: each sample owns [x - h/2, x + h/2] inside
        # [a,b], so the weights sum to the exact length
        lo = max(self.a, window.lo[0])
        hi = min(self.b, window.hi[0])
        n = int(round((hi - lo) / resolution))
        xs = lo + (np.arange(n) + 0.5) * resolution
        pts = np.column_stack([xs, np.zeros_like(xs)])
        return pts, np.full(n, resolution), xs

    def polyline(self, window: Window, step: float):
        n = max(2, int(np.ceil((self.b - self.a) / step)) + 1)
        xs = np.linspace(self.a, self.b, n)
        return np.column_stack([xs, np.zeros_like(xs)])

    def diameter(self, window: Window) -> float:
        return float(self.b - self.a)

    def to_json(self):
        return {"type": "segment", "params": {"a": self.a, "b": self.b}}


@dataclass(frozen=True)
class CantorSet(Descriptor):
    """Four-corner Cantor construction at a finite level on the unit square.

    Level k keeps 4^k squares of side 4^{-k}; the sample cloud is the
    lower-left corner of each square, total weight 1 split self-similarly.
    """

    level: int
    kind: str = field(default="cantor_set", init=False)

    def corners(self) -> np.ndarray:
        pts = np.zeros((1, 2))
        offsets = np.array([[0.0, 0.0], [0.75, 0.0], [0.0, 0.75], [0.75, 0.75]])
        for _ in range(self.level):
            pts = (pts[:, None, :] / 4.0 + offsets[None, :, :]).reshape(-1, 2)
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        return pts[order]

    def sample(self, window: Window, resolution: float):
        pts = self.corners()
        w = np.full(len(pts), 1.0 / len(pts))
        return pts, w, None

    def diameter(self, window: Window) -> float:
        return float(np.sqrt(2.0))

    def to_json(self):
        return {"type": "cantor_set", "params": {"level": self.level}}


@dataclass(frozen=True)
class PointList(Descriptor):
    """Explicit sample cloud with quadrature weights; no analytic surface."""

    points: tuple
    weights: tuple
    kind: str = field(default="point_list", init=False)

    def sample(self, window: Window, resolution: float):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        return pts, w, None

    def diameter(self, window: Window) -> float:
        pts = np.asarray(self.points, dtype=float)
        d = 0.0
        for i in range(len(pts)):
            d = max(d, float(np.max(np.linalg.norm(pts - pts[i], axis=1))))
        return d

    def to_json(self):
        return {
            "type": "point_list",
            "params": {
                "points": [list(p) for p in self.points],
                "weights": list(self.weights),
            },
        }


def descriptor_from_json(obj) -> Descriptor:
    t = obj["type"]
    p = obj.get("params", {})
    if t == "hyperplane":
        return Hyperplane()
    if t == "lipschitz_graph":
        return LipschitzGraph(profile=p["profile"], slope=p["slope"])
    if t == "segment":
        return Segment(a=p["a"], b=p["b"])
    if t == "cantor_set":
        return CantorSet(level=p["level"])
    if t == "point_list":
        return PointList(
            points=tuple(tuple(q) for q in p["points"]),
            weights=tuple(p["weights"]),
        )
    raise ValueError(f"unknown boundary descriptor type {t!r}")


# ---------------------------------------------------------------------------
# boundary set
# ---------------------------------------------------------------------------


@dataclass
class BoundarySet:
    """Discretized boundary: sample cloud + weights + analytic descriptor."""

    descriptor: Descriptor
    window: Window
    resolution: float
    points: np.ndarray
    weights: np.ndarray
    params: np.ndarray | None
    geom_tol: float = GEOM_TOL
    _polyline: np.ndarray | None = None

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        """Boundary dimension n (codimension one)."""
        return self.ambient_dim - 1

    @property
    def n_samples(self) -> int:
        return len(self.points)

    @property
    def total_measure(self) -> float:
        return float(self.weights.sum())

    @property
    def diameter(self) -> float:
        return self.descriptor.diameter(self.window)

    @property
    def bounded(self) -> bool:
        return np.isfinite(self.diameter)

    def polyline(self) -> np.ndarray | None:
        if self._polyline is None:
            pl = self.descriptor.polyline(self.window, self.resolution / 4.0)
            object.__setattr__(self, "_polyline", pl)
        return self._polyline

    def graph_side(self, pts: np.ndarray) -> np.ndarray:
        """Sign of (last coordinate - graph height); +1 above, -1 below."""
        g = self.descriptor.graph_value(pts[:, 0])
        if g is None:
            raise ValueError("boundary is not graph-like")
        return np.sign(pts[:, -1] - g)

    def export_csv(self, path):
        cols = [self.points[:, i] for i in range(self.ambient_dim)] + [self.weights]
        header = ",".join(f"x{i}" for i in range(self.ambient_dim)) + ",weight"
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="")

    def to_json(self):
        return {
            "type": self.descriptor.to_json()["type"],
            "params": self.descriptor.to_json()["params"],
            "window": self.window.to_json(),
            "resolution": self.resolution,
        }

    @staticmethod
    def from_json(obj) -> "BoundarySet":
        return build_boundary(
            descriptor_from_json(obj),
            resolution=obj["resolution"],
            window=Window.from_json(obj["window"]),
        )


def build_boundary(
    descriptor: Descriptor,
    resolution: float,
    window: Window,
    lip_budget: float = 0.5,
) -> BoundarySet:
    """Sample a descriptor into a BoundarySet.

    Graph descriptors with Lipschitz constant >= `lip_budget` are rejected:
    the trivial corona provider downstream would be invalid for them.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if descriptor.lipschitz >= lip_budget:
        raise ValueError(
            f"Lipschitz constant {descriptor.lipschitz} exceeds budget {lip_budget}"
        )
    pts, w, params = descriptor.sample(window, resolution)
    if np.any(w <= 0):
        raise ValueError("quadrature weights must be positive")
    return BoundarySet(
        descriptor=descriptor,
        window=window,
        resolution=resolution,
        points=np.asarray(pts, dtype=float),
        weights=np.asarray(w, dtype=float),
        params=params if params is None else np.asarray(params, dtype=float),
    )


def load_boundary(path) -> BoundarySet:
    with open(path) as fh:
        return BoundarySet.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# distance queries
# ---------------------------------------------------------------------------


def distance_to_boundary(X, E: BoundarySet) -> float:
    """dist(X, E): analytic when the descriptor allows, else to the cloud.

    Returns exactly 0.0 (with a warning) for degenerate queries on E.
    """
    X = np.asarray(X, dtype=float)
    d = _distance(X[None, :], E)[0]
    if d <= E.geom_tol:
        warnings.warn("query point lies on the boundary set", stacklevel=2)
        return 0.0
    return float(d)


def _distance(P: np.ndarray, E: BoundarySet) -> np.ndarray:
    """Vectorized dist(P_i, E)."""
    desc = E.descriptor
    if isinstance(desc, Hyperplane):
        return np.abs(P[:, -1])
    if isinstance(desc, LipschitzGraph) and desc.profile == "linear":
        s = desc.slope
        return np.abs(P[:, 1] - s * P[:, 0]) / np.sqrt(1 + s * s)
    pl = E.polyline()
    if pl is not None:
        return _dist_to_polyline(P, pl)
    return _dist_to_cloud(P, E.points)


def _dist_to_cloud(P: np.ndarray, cloud: np.ndarray) -> np.ndarray:
    out = np.empty(len(P))
    for i, p in enumerate(P):
        out[i] = np.min(np.linalg.norm(cloud - p, axis=1))
    return out


def _dist_to_polyline(P: np.ndarray, pl: np.ndarray) -> np.ndarray:
    """Distance from points to a polyline, exact per segment."""
    a = pl[:-1]
    b = pl[1:]
    ab = b - a
    den = np.einsum("ij,ij->i", ab, ab)
    out = np.empty(len(P))
    # chunk over query points; segment arrays are shared
    for i, p in enumerate(P):
        ap = p[None, :] - a
        t = np.clip(np.einsum("ij,ij->i", ap, ab) / den, 0.0, 1.0)
        proj = a + t[:, None] * ab
        out[i] = np.min(np.linalg.norm(proj - p[None, :], axis=1))
    return out


def box_distance(lo, hi, E: BoundarySet) -> float:
    """Distance from the axis-aligned box [lo,hi] to E (0 if they meet)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    desc = E.descriptor
    if isinstance(desc, Hyperplane):
        if lo[-1] <= 0.0 <= hi[-1]:
            return 0.0
        return float(min(abs(lo[-1]), abs(hi[-1])))
    targets = E.polyline()
    if targets is None:
        targets = E.points
    clamped = np.clip(targets, lo[None, :], hi[None, :])
    return float(np.min(np.linalg.norm(targets - clamped, axis=1)))


def box_distance_many(los: np.ndarray, his: np.ndarray, E: BoundarySet) -> np.ndarray:
    """Vectorized box_distance for stacked boxes (m, d)."""
    desc = E.descriptor
    if isinstance(desc, Hyperplane):
        below = his[:, -1] < 0
        above = los[:, -1] > 0
        out = np.zeros(len(los))
        out[below] = -his[below, -1]
        out[above] = los[above, -1]
        return out
    targets = E.polyline()
    if targets is None:
        targets = E.points
    out = np.empty(len(los))
    for i in range(len(los)):
        c = np.clip(targets, los[i], his[i])
        out[i] = np.min(np.linalg.norm(targets - c, axis=1))
    return out


# ---------------------------------------------------------------------------
# surface measure and ADR certification
# ---------------------------------------------------------------------------


def surface_measure(E: BoundarySet, center, r: float) -> float:
    """sigma-hat of the surface ball: weight sum of samples inside B(x,r)."""
    if r <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=float)
    d = np.linalg.norm(E.points - center, axis=1)
    return float(E.weights[d < r].sum())


@dataclass
class ADRReport:
    tested_centers: np.ndarray
    tested_radii: list
    ratios: list
    lower_constant: float
    upper_constant: float
    budget: float
    passed: bool

    def to_json(self):
        return {
            "lower_constant": self.lower_constant,
            "upper_constant": self.upper_constant,
            "budget": self.budget,
            "pass": self.passed,
            "n_pairs": sum(len(r) for r in self.tested_radii),
        }


def check_adr(
    E: BoundarySet,
    budget: float,
    n_centers: int = 32,
    radii_per_center: int = 12,
    r_min: float | None = None,
    r_max: float | None = None,
) -> ADRReport:
    """Sweep sigma-hat(B(x,r))/r^n over a log-spaced radius grid.

    Pairs whose ball leaves the sampled window are skipped (the mass there is
    truncated, not small).  pass <=> 1/budget - q <= ratio <= budget + q for
    all pairs, where q = 2*resolution/r^n is the quadrature error of the
    weight sum against the continuum surface measure (the ball boundary cuts
    at most two sample-owned segments per sheet).
    """
    if budget < 1:
        raise ValueError("ADR budget must be >= 1")
    if E.n_samples == 0:
        raise ValueError("empty sample cloud")
    n = E.n
    stride = max(1, E.n_samples // n_centers)
    centers = E.points[::stride]
    if r_min is None:
        r_min = 8 * E.resolution
    if r_max is None:
        r_max = (E.diameter if E.bounded else E.window.span) / 2.0
    lo = np.asarray(E.window.lo)
    hi = np.asarray(E.window.hi)
    radii_all, ratios_all = [], []
    passed = True
    for c in centers:
        edge = float(min(np.min(c - lo), np.min(hi - c))) if not E.bounded else r_max
        rs, ratios = [], []
        for r in np.geomspace(r_min, r_max, radii_per_center):
            if r > edge:
                continue
            m = surface_measure(E, c, r)
            if m == 0:
                warnings.warn("surface ball with zero mass skipped", stacklevel=2)
                continue
            rs.append(float(r))
            ratios.append(m / r**n)
            q = 2 * E.resolution / r**n
            if not (1.0 / budget - q <= ratios[-1] <= budget + q):
                passed = False
        radii_all.append(rs)
        ratios_all.append(ratios)
    flat = [x for row in ratios_all for x in row]
    if not flat:
        raise ValueError("no admissible (center, radius) pairs inside the window")
    lower = float(min(flat))
    upper = float(max(flat))
    return ADRReport(
        tested_centers=centers,
        tested_radii=radii_all,
        ratios=ratios_all,
        lower_constant=lower,
        upper_constant=upper,
        budget=budget,
        passed=passed,
    )
