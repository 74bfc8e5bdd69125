"""Grid solver for the singular-control variational inequality

    max{1 - V_x, L[V]}(s, x, w) = 0,    V(T, x, w) = x,

with L[V] = -c V + V_s + p V_x + V_w + lambda(w) (int_0^x V(s, x - u, 0) dG(u) - V),
on the triangular domain 0 <= w <= s <= T, x >= 0, together with the explicit
sub- and supersolutions that bracket the value function.

The scheme steps backward along the (s, w) characteristic (ds = dw), uses an
upwind difference for the premium drift, CDF-increment quadrature for the claim
integral, and enforces the gradient constraint by an upward projection sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import CFLError, ConfigurationError, DomainError, NumericalFailure
from .model import ClaimDistribution, HazardFunction, ModelParams

__all__ = [
    "GridSpec",
    "ValueField",
    "AnalyticBounds",
    "ResidualReport",
    "FreeBoundary",
    "distance_to_boundary",
    "supersolution_bound",
    "subsolution_bound",
    "claim_integral",
    "generator_apply",
    "solve_vi",
    "residual_check",
    "extract_free_boundary",
    "write_surface_csv",
    "write_free_boundary_csv",
]

SQRT2_2 = math.sqrt(2.0) / 2.0
_EDGE = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Grid resolution: ``n_s`` steps in s (and w), ``n_x`` steps on ``[0, x_max]``.

    ``claim_refine`` subdivides each x-cell for the claim quadrature.
    """

    n_s: int
    n_x: int
    x_max: float
    claim_refine: int = 1

    def __post_init__(self):
        for name in ("n_s", "n_x", "claim_refine"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if not (self.x_max > 0) or not math.isfinite(self.x_max):
            raise ConfigurationError(f"x_max must be positive, got {self.x_max}")

    @property
    def dx(self) -> float:
        return self.x_max / self.n_x

    def dt(self, params: ModelParams) -> float:
        return params.T / self.n_s

    def cfl_number(self, params: ModelParams) -> float:
        return self.dt(params) * (params.c + params.Lambda + params.p / self.dx)

    def tolerance(self, params: ModelParams) -> float:
        """Default property-test tolerance 5 (dt + dx)."""
        return 5.0 * (self.dt(params) + self.dx)

    def check(self, params: ModelParams) -> None:
        cfl = self.cfl_number(params)
        if cfl > 1.0 + 1e-12:
            raise CFLError(
                f"CFL condition dt*(c + Lambda + p/dx) <= 1 violated: "
                f"{self.dt(params):.6g}*({params.c:g} + {params.Lambda:g} + "
                f"{params.p:g}/{self.dx:.6g}) = {cfl:.6g}"
            )
        if self.x_max <= params.p * params.T:
            raise ConfigurationError(
                f"x_max={self.x_max} must exceed p*T={params.p * params.T} "
                "so the slope-1 pad stays out of reach"
            )

    def to_dict(self) -> dict:
        return {"n_s": self.n_s, "n_x": self.n_x, "x_max": self.x_max, "claim_refine": self.claim_refine}


@dataclass
class ValueField:
    """Value function on the grid; ``slices[i]`` has shape ``(i + 1, n_x + 1)``.

    Row ``k`` of slice ``i`` holds V(s_i, x_j, w_k) with s_i = i dt, w_k = k dt.
    """

    spec: GridSpec
    params: ModelParams
    slices: list
    hazard: HazardFunction | None = None
    claims: ClaimDistribution | None = None
    x: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.x = x_grid(self.spec)
        if len(self.slices) != self.spec.n_s + 1:
            raise ConfigurationError("a value field needs one slice per time level")
        for i, sl in enumerate(self.slices):
            if sl.shape != (i + 1, self.spec.n_x + 1):
                raise ConfigurationError(f"slice {i} has shape {sl.shape}")

    @property
    def dt(self) -> float:
        return self.spec.dt(self.params)

    @property
    def dx(self) -> float:
        return self.spec.dx

    @property
    def n_s(self) -> int:
        return self.spec.n_s

    @property
    def n_x(self) -> int:
        return self.spec.n_x

    def s_at(self, i: int) -> float:
        return i * self.dt

    def value(self, i: int, j: int, k: int) -> float:
        if not (0 <= k <= i <= self.n_s and 0 <= j <= self.n_x):
            raise DomainError(f"node ({i}, {j}, {k}) is not on the grid")
        return float(self.slices[i][k, j])

    def node_index(self, s: float, x: float, w: float) -> tuple[int, int, int]:
        """Indices of a grid node given its coordinates; DomainError if off-grid."""
        i, j, k = (round(v / d) for v, d in ((s, self.dt), (x, self.dx), (w, self.dt)))
        for v, idx, d in ((s, i, self.dt), (x, j, self.dx), (w, k, self.dt)):
            if abs(v - idx * d) > 1e-9 * max(1.0, abs(v)):
                raise DomainError(f"point ({s}, {x}, {w}) is not a grid node")
        if not (0 <= k <= i <= self.n_s and 0 <= j <= self.n_x):
            raise DomainError(f"point ({s}, {x}, {w}) is outside the grid")
        return i, j, k

    def interp(self, i: int, xs, ws) -> np.ndarray:
        """Bilinear interpolation in (x, w) on slice ``i``; slope-1 extension beyond x_max."""
        xs = np.asarray(xs, dtype=float)
        ws = np.asarray(ws, dtype=float)
        V = self.slices[i]
        n = self.n_x
        xc = np.minimum(xs, self.x[-1])
        j = np.clip(np.floor(xc / self.dx).astype(np.int64), 0, n - 1)
        fx = np.clip(xc / self.dx - j, 0.0, 1.0)
        excess = np.maximum(xs - self.x[-1], 0.0)
        if i == 0:
            k = np.zeros_like(j)
            fw = np.zeros_like(fx)
        else:
            wc = np.clip(ws, 0.0, i * self.dt)
            k = np.clip(np.floor(wc / self.dt).astype(np.int64), 0, i - 1)
            fw = np.clip(wc / self.dt - k, 0.0, 1.0)
        k1 = np.minimum(k + 1, i)
        lo = V[k, j] * (1 - fx) + V[k, j + 1] * fx
        hi = V[k1, j] * (1 - fx) + V[k1, j + 1] * fx
        return lo * (1 - fw) + hi * fw + excess

    def replace(self, slices) -> "ValueField":
        return ValueField(self.spec, self.params, list(slices), self.hazard, self.claims)

    @classmethod
    def from_function(cls, spec, params, fn, hazard=None, claims=None) -> "ValueField":
        """Sample ``fn(s, x, w)`` (vectorised) on the grid; handy for fixtures."""
        dt = spec.dt(params)
        x = x_grid(spec)
        slices = []
        for i in range(spec.n_s + 1):
            w = (np.arange(i + 1) * dt)[:, None]
            vals = fn(np.full((i + 1, spec.n_x + 1), i * dt), np.broadcast_to(x, (i + 1, x.size)), np.broadcast_to(w, (i + 1, x.size)))
            slices.append(np.array(np.broadcast_to(vals, (i + 1, x.size)), dtype=float))
        slices[-1] = np.tile(x, (spec.n_s + 1, 1))
        return cls(spec, params, slices, hazard, claims)


def x_grid(spec: GridSpec) -> np.ndarray:
    return np.arange(spec.n_x + 1) * spec.dx


# ---------------------------------------------------------------------------
# explicit sub/supersolutions


@dataclass(frozen=True)
class AnalyticBounds:
    p: float
    c: float
    T: float
    Lambda: float
    N1: float
    N2: float
    M1: float
    M2: float

    @classmethod
    def from_params(cls, params: ModelParams) -> "AnalyticBounds":
        T, p, c, lam = params.T, params.p, params.c, params.Lambda
        d_max = T / (2.0 + math.sqrt(2.0))
        n1 = SQRT2_2 + 1.0 + 2.0 * p
        n2 = SQRT2_2 + 1.0 + (c + lam) * 2.0 * T / (2.0 + math.sqrt(2.0))
        return cls(p=p, c=c, T=T, Lambda=lam, N1=n1, N2=n2, M1=n1 * T + d_max, M2=-n2 * T)

    @property
    def d_max(self) -> float:
        return self.T / (2.0 + math.sqrt(2.0))

    def to_dict(self) -> dict:
        return {"N1": self.N1, "N2": self.N2, "M1": self.M1, "M2": self.M2, "d_max": self.d_max}


def _check_in_domain(s, x, w, T):
    s, x, w = (np.asarray(v, dtype=float) for v in (s, x, w))
    bad = (s < -_EDGE) | (s > T + _EDGE) | (x < -_EDGE) | (w < -_EDGE) | (w > s + _EDGE)
    bad |= ~(np.isfinite(s) & np.isfinite(x) & np.isfinite(w))
    if np.any(bad):
        raise DomainError("point(s) outside D = {0 <= s <= T, x >= 0, 0 <= w <= s}")
    return s, x, w


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def distance_to_boundary(s, x, w, T):
    """(T - s) ^ w ^ (sqrt2/2)(s - w) ^ x, vectorised."""
    s, x, w = _check_in_domain(s, x, w, T)
    d = np.minimum(np.minimum(T - s, w), np.minimum(SQRT2_2 * (s - w), x))
    return _scalar(np.maximum(d, 0.0))


def supersolution_bound(s, x, w, bounds: AnalyticBounds):
    d = distance_to_boundary(s, x, w, bounds.T)
    return _scalar(np.asarray(x, dtype=float) + d + bounds.N1 * (bounds.T - np.asarray(s, dtype=float)))


def subsolution_bound(s, x, w, bounds: AnalyticBounds):
    d = distance_to_boundary(s, x, w, bounds.T)
    return _scalar(np.asarray(x, dtype=float) + d - bounds.N2 * (bounds.T - np.asarray(s, dtype=float)))


# ---------------------------------------------------------------------------
# discretisation


class ClaimQuadrature:
    """CDF-increment weights for int_0^x V(x - u) dG(u) on the x-grid.

    The claim mesh has step ``h = dx / q``; cell ``m`` covers
    ``((m - 1/2) h, (m + 1/2) h]`` and the last cell before ``x_j`` is cut at
    ``x_j`` (claims above the surplus ruin the company and contribute 0).
    """

    def __init__(self, g: ClaimDistribution, spec: GridSpec):
        self.q = int(spec.claim_refine)
        self.h = spec.dx / self.q
        nf = spec.n_x * self.q
        self.fine = np.arange(nf + 1) * self.h
        upper = np.asarray(g.cdf((np.arange(nf + 1) + 0.5) * self.h), dtype=float)
        lower = np.concatenate([[0.0], upper[:-1]])
        self.wfull = np.ascontiguousarray(upper - lower)
        xs = x_grid(spec)
        at_x = np.asarray(g.cdf(xs), dtype=float)
        below = np.where(xs > 0, np.asarray(g.cdf(xs - 0.5 * self.h), dtype=float), 0.0)
        self.corr = np.ascontiguousarray(at_x - below)
        self.x = xs

    def apply(self, row: np.ndarray) -> np.ndarray:
        row = np.ascontiguousarray(row, dtype=float)
        fine = row if self.q == 1 else np.interp(self.fine, self.x, row)
        return _kernels.get().claim_integral(np.ascontiguousarray(fine), self.wfull, self.q, self.corr)


def claim_integral(field: ValueField, i_s: int, x: float, g: ClaimDistribution) -> float:
    """Quadrature of int_0^x V(s_i, x - u, 0) dG(u) at a grid level ``x``."""
    if not (0 <= i_s <= field.n_s):
        raise DomainError(f"slice index {i_s} outside [0, {field.n_s}]")
    j = round(x / field.dx)
    if j < 0 or j > field.n_x or abs(x - j * field.dx) > 1e-9 * max(1.0, abs(x)):
        raise DomainError(f"x={x} is not a grid level")
    quad = ClaimQuadrature(g, field.spec)
    return float(quad.apply(field.slices[i_s][0])[j])


def _hazard_rows(h: HazardFunction, n_s: int, dt: float) -> np.ndarray:
    return np.array([h.rate(k * dt) for k in range(n_s + 1)], dtype=float)


def _continuation(field: ValueField, i: int, lam: np.ndarray, quad: ClaimQuadrature, project: bool):
    Vn = field.slices[i + 1]
    I = quad.apply(Vn[0])
    p, c = field.params.p, field.params.c
    return _kernels.get().vi_step(Vn, lam[: i + 1], I, p, c, field.dt, field.dx, project)


def generator_apply(field: ValueField, node, params: ModelParams, h: HazardFunction, g: ClaimDistribution) -> float:
    """Discrete L[V] at ``node = (i_s, j_x, k_w)``.

    s and w derivatives combine into one difference along the characteristic,
    the drift is upwinded, and the reaction and claim terms are taken at the
    upstream node (s + dt, x, w + dt), so that L_h V = (V_cont - V) / dt is
    exactly the defect of the explicit update.
    """
    i, j, k = node
    if i >= field.n_s:
        raise DomainError("the terminal slice has no forward neighbour")
    if not (0 <= k <= i and 0 <= j <= field.n_x):
        raise DomainError(f"node {node} is not on the grid")
    dt, dx = field.dt, field.dx
    R = field.slices[i + 1][k + 1]
    up = R[j + 1] if j < field.n_x else R[j] + dx
    dp = (up - R[j]) / dx
    lam = h.rate(k * dt)
    I = ClaimQuadrature(g, field.spec).apply(field.slices[i + 1][0])[j]
    v_cont = R[j] + dt * (params.p * dp - (params.c + lam) * R[j] + lam * I)
    return (v_cont - field.slices[i][k, j]) / dt


def solve_vi(spec: GridSpec, params: ModelParams, h: HazardFunction, g: ClaimDistribution) -> ValueField:
    """Backward explicit stepping with gradient-constraint projection."""
    spec.check(params)
    params.check_hazard(h)
    n_s, x = spec.n_s, x_grid(spec)
    dt = spec.dt(params)
    lam = _hazard_rows(h, n_s, dt)
    quad = ClaimQuadrature(g, spec)
    slices = [None] * (n_s + 1)
    slices[n_s] = np.tile(x, (n_s + 1, 1))
    field = ValueField.__new__(ValueField)
    field.spec, field.params, field.slices, field.hazard, field.claims, field.x = spec, params, slices, h, g, x
    for i in range(n_s - 1, -1, -1):
        out = _continuation(field, i, lam, quad, project=True)
        if not np.all(np.isfinite(out)):
            k, j = np.argwhere(~np.isfinite(out))[0]
            raise NumericalFailure(
                f"non-finite value at node (s={i * dt:g}, x={x[j]:g}, w={k * dt:g})",
                node=(i, int(j), int(k)),
            )
        slices[i] = out
    return field


@dataclass
class ResidualReport:
    max_abs: float
    argmax: tuple
    max_positive: float
    residuals: list = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "max_abs_residual": self.max_abs,
            "argmax_node": list(self.argmax),
            "max_positive_residual": self.max_positive,
        }


def residual_check(field: ValueField, params: ModelParams, h: HazardFunction, g: ClaimDistribution) -> ResidualReport:
    """Pointwise residual max{1 - V_x, L_h V} on every non-terminal node.

    The gradient term uses the backward x-difference, which is the one the
    projection sweep enforces; at x = 0 the forward difference is used.
    """
    lam = _hazard_rows(h, field.n_s, field.dt)
    quad = ClaimQuadrature(g, field.spec)
    dx = field.dx
    residuals = []
    best, arg, worst_pos = -1.0, (0, 0, 0), -math.inf
    for i in range(field.n_s):
        V = field.slices[i]
        gen = (_continuation(field, i, lam, quad, project=False) - V) / field.dt
        slope = np.empty_like(V)
        slope[:, 1:] = (V[:, 1:] - V[:, :-1]) / dx
        slope[:, 0] = (V[:, 1] - V[:, 0]) / dx if field.n_x > 0 else 1.0
        r = np.maximum(1.0 - slope, gen)
        residuals.append(r)
        a = np.abs(r)
        idx = np.unravel_index(int(np.argmax(a)), a.shape)
        if a[idx] > best:
            best, arg = float(a[idx]), (i, int(idx[1]), int(idx[0]))
        worst_pos = max(worst_pos, float(r.max()))
    residuals.append(np.zeros_like(field.slices[field.n_s]))
    return ResidualReport(max_abs=best, argmax=arg, max_positive=worst_pos, residuals=residuals)


@dataclass
class FreeBoundary:
    """Barrier candidate ``b[i][k]`` = first x where the gradient constraint binds."""

    dt: float
    levels: list

    def at(self, i: int, k: int) -> float:
        return float(self.levels[i][k])

    def rows(self):
        for i, row in enumerate(self.levels):
            for k, b in enumerate(row):
                yield i * self.dt, k * self.dt, float(b)


def extract_free_boundary(field: ValueField, tol: float = 1e-9) -> FreeBoundary:
    dx = field.dx
    levels = []
    for V in field.slices:
        up = np.concatenate([V[:, 1:], V[:, -1:] + dx], axis=1)
        active = 1.0 - (up - V) / dx >= -tol
        first = np.argmax(active, axis=1)
        first[~active.any(axis=1)] = field.n_x
        levels.append(field.x[first])
    return FreeBoundary(dt=field.dt, levels=levels)


# ---------------------------------------------------------------------------
# exports

SURFACE_COLUMNS = ("s", "x", "w", "V", "Vbar", "Vunder", "residual")
FREE_BOUNDARY_COLUMNS = ("s", "w", "b")


def write_surface_csv(field: ValueField, path, residuals=None, stride: int = 1) -> int:
    """Write (s, x, w, V, Vbar, Vunder, residual) rows; returns the row count."""
    bounds = AnalyticBounds.from_params(field.params)
    xs = field.x[::stride]
    n_rows = 0
    with open(path, "w") as fh:
        fh.write(",".join(SURFACE_COLUMNS) + "\n")
        for i in range(0, field.n_s + 1, stride):
            s = i * field.dt
            ks = np.arange(0, i + 1, stride)
            S, X = np.full((ks.size, xs.size), s), np.broadcast_to(xs, (ks.size, xs.size))
            W = np.broadcast_to((ks * field.dt)[:, None], (ks.size, xs.size))
            V = field.slices[i][ks][:, ::stride]
            R = residuals[i][ks][:, ::stride] if residuals is not None else np.zeros_like(V)
            cols = [S, X, W, V, supersolution_bound(S, X, W, bounds), subsolution_bound(S, X, W, bounds), R]
            block = np.column_stack([np.ravel(c) for c in cols])
            np.savetxt(fh, block, delimiter=",", fmt="%.17g")
            n_rows += block.shape[0]
    return n_rows


def write_free_boundary_csv(fb: FreeBoundary, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(FREE_BOUNDARY_COLUMNS) + "\n")
        for s, w, b in fb.rows():
            fh.write(f"{s!r},{w!r},{b!r}\n")
