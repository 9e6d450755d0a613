"""Catalog of exactly-known harmonic fields with analytic gradients.

No PDE solves anywhere: every field is either closed-form harmonic or a
quadrature of the half-plane Poisson kernel whose harmonicity is inherited
from the kernel.  Poisson extensions are mirrored to the lower half-plane
(u(x,t) = u(x,|t|)), harmonic on each component of the complement of the
line.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import BoundarySet, _distance


class HarmonicField:
    """Evaluable u with analytic gradient; immutable and vectorizable."""

    def eval(self, P: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, P: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, P):
        return self.eval(np.atleast_2d(np.asarray(P, dtype=float)))


@dataclass(frozen=True)
class Constant(HarmonicField):
    c: float

    def eval(self, P):
        return np.full(len(P), self.c)

    def grad(self, P):
        return np.zeros_like(P)


@dataclass(frozen=True)
class Coordinate(HarmonicField):
    axis: int = 1

    def eval(self, P):
        return P[:, self.axis].copy()

    def grad(self, P):
        g = np.zeros_like(P)
        g[:, self.axis] = 1.0
        return g


@dataclass(frozen=True)
class HarmonicPolynomial(HarmonicField):
    """Real or imaginary part of (x + i t)^m in the plane; m <= 4."""

    degree: int
    part: str = "re"

    def __post_init__(self):
        if not 1 <= self.degree <= 4:
            raise ValueError("degree must be in 1..4")
        if self.part not in ("re", "im"):
            raise ValueError("part must be 're' or 'im'")

    def eval(self, P):
        z = P[:, 0] + 1j * P[:, 1]
        v = z**self.degree
        return v.real if self.part == "re" else v.imag

    def grad(self, P):
        z = P[:, 0] + 1j * P[:, 1]
        d = self.degree * z ** (self.degree - 1)
        # d/dx (re f) = re f', d/dt (re f) = -im f'  (f holomorphic)
        if self.part == "re":
            return np.column_stack([d.real, -d.imag])
        return np.column_stack([d.imag, d.real])

    def fourth_derivative_bound(self, P):
        """sup over stencil usage of |d^4/dx^4| + |d^4/dt^4| at the points."""
        if self.degree < 4:
            return np.zeros(len(P))
        return np.full(len(P), 48.0)  # |f''''| = 24, both axes


@dataclass(frozen=True)
class FundamentalPole(HarmonicField):
    """log|X - p| in the plane; the pole p must lie on E."""

    pole: tuple

    def eval(self, P):
        return np.log(np.linalg.norm(P - np.asarray(self.pole), axis=1))

    def grad(self, P):
        d = P - np.asarray(self.pole)
        return d / np.einsum("ij,ij->i", d, d)[:, None]


@dataclass(frozen=True)
class PoissonIndicator(HarmonicField):
    """Half-plane Poisson extension of 1_{[a,b]}, closed form, mirrored.

    u(x,t) = (arctan((b-x)/|t|) - arctan((a-x)/|t|)) / pi.
    """

    a: float = -1.0
    b: float = 1.0

    def eval(self, P):
        x, t = P[:, 0], np.abs(P[:, 1])
        return (np.arctan2(self.b - x, t) - np.arctan2(self.a - x, t)) / np.pi

    def grad(self, P):
        x, t = P[:, 0], np.abs(P[:, 1])
        s = np.sign(P[:, 1])
        da = (self.a - x) ** 2 + t**2
        db = (self.b - x) ** 2 + t**2
        ux = (t / da - t / db) / np.pi
        ut = ((self.a - x) / da - (self.b - x) / db) / np.pi
        return np.column_stack([ux, s * ut])


@dataclass(frozen=True)
class PoissonQuadrature(HarmonicField):
    """Poisson extension of sampled boundary data f(y_i) with weights w_i.

    Quadrature of P(x,t;y) = t / (pi ((x-y)^2 + t^2)); harmonic in each open
    half-plane because every kernel slice is.
    """

    data_y: tuple
    data_f: tuple
    data_w: tuple

    def eval(self, P):
        y = np.asarray(self.data_y)
        f = np.asarray(self.data_f)
        w = np.asarray(self.data_w)
        x, t = P[:, 0:1], np.abs(P[:, 1:2])
        ker = t / ((x - y[None, :]) ** 2 + t**2) / np.pi
        return ker @ (f * w)

    def grad(self, P):
        y = np.asarray(self.data_y)
        fw = np.asarray(self.data_f) * np.asarray(self.data_w)
        x, t = P[:, 0:1], np.abs(P[:, 1:2])
        s = np.sign(P[:, 1])
        dx = x - y[None, :]
        den = (dx**2 + t**2) ** 2
        kx = -2 * t * dx / den / np.pi
        kt = (dx**2 - t**2) / den / np.pi
        return np.column_stack([kx @ fw, s * (kt @ fw)])


@dataclass(frozen=True)
class LinearCombination(HarmonicField):
    coeffs: tuple
    fields: tuple

    def eval(self, P):
        out = np.zeros(len(P))
        for c, f in zip(self.coeffs, self.fields):
            out += c * f.eval(P)
        return out

    def grad(self, P):
        out = np.zeros_like(P)
        for c, f in zip(self.coeffs, self.fields):
            out += c * f.grad(P)
        return out


def make_field(desc, E: BoundarySet | None = None) -> HarmonicField:
    """Build a field from a JSON-style descriptor {type, params}.

    Poles must lie on E (checked when E is given) so u is harmonic on the
    complement.
    """
    if isinstance(desc, HarmonicField):
        return desc
    t = desc["type"]
    p = desc.get("params", {})
    if t == "constant":
        return Constant(float(p.get("c", 1.0)))
    if t == "coordinate":
        return Coordinate(int(p.get("axis", 1)))
    if t == "polynomial":
        return HarmonicPolynomial(int(p["degree"]), p.get("part", "re"))
    if t == "fundamental_pole":
        pole = tuple(p["pole"])
        if E is not None:
            d = _distance(np.asarray([pole], dtype=float), E)[0]
            if d > max(E.geom_tol, E.resolution):
                raise ValueError(f"pole {pole} lies off the boundary (dist {d:.3g})")
        return FundamentalPole(pole)
    if t in ("poisson_indicator", "poisson_quadrature"):
        # the mirrored kernel is kinked across the whole line {t=0}; only
        # for the hyperplane does that kink stay inside E
        if E is not None and E.descriptor.kind != "hyperplane":
            raise ValueError(
                "Poisson extensions are only harmonic on complements of the "
                "hyperplane boundary"
            )
    if t == "poisson_indicator":
        return PoissonIndicator(float(p.get("a", -1.0)), float(p.get("b", 1.0)))
    if t == "poisson_quadrature":
        return PoissonQuadrature(
            tuple(p["y"]), tuple(p["f"]), tuple(p["w"])
        )
    if t == "linear_combination":
        return LinearCombination(
            tuple(float(c) for c in p["coeffs"]),
            tuple(make_field(d, E) for d in p["fields"]),
        )
    raise ValueError(f"unknown field type {t!r}")


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def grad_check(u: HarmonicField, P: np.ndarray, h: float = 1e-5) -> float:
    """Max relative deviation of the analytic gradient from central differences."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    g = u.grad(P)
    worst = 0.0
    for ax in range(P.shape[1]):
        dP = np.zeros_like(P)
        dP[:, ax] = h
        num = (u.eval(P + dP) - u.eval(P - dP)) / (2 * h)
        scale = np.maximum(np.linalg.norm(g, axis=1), 1.0)
        worst = max(worst, float(np.max(np.abs(num - g[:, ax]) / scale)))
    return worst


def laplacian_residual(
    u: HarmonicField, probes: np.ndarray, h: float, E: BoundarySet | None = None
) -> dict:
    """Centered 5-point (2d) / 7-point (3d) stencil residuals at the probes.

    Residuals are reported raw and normalized by the local scale
    |grad u| / delta; probes closer than 3h to E are rejected.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    dim = probes.shape[1]
    if E is not None:
        d = _distance(probes, E)
        if np.any(d < 3 * h):
            raise ValueError("probes must keep distance >= 3h from the boundary")
    else:
        d = np.full(len(probes), np.inf)
    acc = np.zeros(len(probes))
    u0 = u.eval(probes)
    for ax in range(dim):
        dP = np.zeros_like(probes)
        dP[:, ax] = h
        acc += (u.eval(probes + dP) - u0) + (u.eval(probes - dP) - u0)
    raw = np.abs(acc) / h**2
    gn = np.linalg.norm(u.grad(probes), axis=1)
    denom = np.where(d < np.inf, np.maximum(gn / np.maximum(d, 1e-300), 1e-300), 1.0)
    normalized = raw / denom
    return {
        "max_raw": float(raw.max()),
        "max_normalized": float(normalized.max()),
        "raw": raw,
        "normalized": normalized,
    }


def mean_value_gap(u: HarmonicField, X, r: float, n_theta: int = 512) -> float:
    """|average of u over the circle dB(X,r) - u(X)| (2d)."""
    X = np.asarray(X, dtype=float)
    th = (np.arange(n_theta) + 0.5) * (2 * np.pi / n_theta)
    ring = X[None, :] + r * np.column_stack([np.cos(th), np.sin(th)])
    return float(abs(u.eval(ring).mean() - u.eval(X[None, :])[0]))


def caccioppoli_ratio(u: HarmonicField, lo, hi, n_grid: int = 64) -> float:
    """Measured C in  int_I |grad u|^2 <= C l(I)^{-2} int_{2I} |u - c|^2.

    I = [lo,hi], 2I its concentric double, c the mean of u over 2I; midpoint
    quadrature on an n_grid^2 mesh.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    side = hi - lo
    c2 = (lo + hi) / 2

    def mesh(a, b):
        xs = [(np.arange(n_grid) + 0.5) / n_grid * (bb - aa) + aa for aa, bb in zip(a, b)]
        g = np.meshgrid(*xs, indexing="ij")
        pts = np.column_stack([gg.ravel() for gg in g])
        cell = np.prod((b - a) / n_grid)
        return pts, cell

    pts_i, cell_i = mesh(lo, hi)
    pts_2i, cell_2i = mesh(c2 - side, c2 + side)
    grad2 = np.einsum("ij,ij->i", u.grad(pts_i), u.grad(pts_i)).sum() * cell_i
    vals = u.eval(pts_2i)
    c = vals.mean()
    l2 = ((vals - c) ** 2).sum() * cell_2i
    if l2 == 0:
        return 0.0
    ell = float(side.max())
    return float(grad2 / (l2 / ell**2))
