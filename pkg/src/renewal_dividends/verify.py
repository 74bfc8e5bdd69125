"""Executable property checks on a solved value field.

Each check returns a :class:`PropertyCheck`; a check passes iff its worst
violation is at most its tolerance.  Violations are signed, so a negative
``worst_violation`` is the smallest slack observed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError
from .hjbgrid import AnalyticBounds, GridSpec, ValueField, solve_vi, subsolution_bound, supersolution_bound
from .model import ClaimDistribution, ConstantHazard, HazardFunction, ModelParams
from .montecarlo import estimate_value
from .paths import Strategy

__all__ = [
    "PropertyCheck",
    "PropertyReport",
    "default_tolerance",
    "check_static_bounds",
    "check_time_properties",
    "check_space_properties",
    "check_renewal_inequality",
    "check_poisson_w_invariance",
    "check_w_continuity_trend",
    "dpp_cross_check",
    "refinement_fields",
]


@dataclass
class PropertyCheck:
    name: str
    passed: bool
    worst_violation: float
    worst_node: tuple | None
    tolerance: float
    skipped: bool = False
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_node"] = None if self.worst_node is None else [float(v) for v in self.worst_node]
        return d


@dataclass
class PropertyReport:
    checks: list = field(default_factory=list)

    def add(self, check: PropertyCheck) -> PropertyCheck:
        self.checks.append(check)
        return check

    @property
    def passed(self) -> bool:
        return all(c.passed or c.skipped for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not (c.passed or c.skipped)]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        lines = [f"{'check':<28} {'status':<6} {'worst':>13} {'tol':>10}  node"]
        for c in self.checks:
            status = "skip" if c.skipped else ("PASS" if c.passed else "FAIL")
            node = "" if c.worst_node is None else "(" + ", ".join(f"{v:.4g}" for v in c.worst_node) + ")"
            worst = "" if c.skipped else f"{c.worst_violation:.6g}"
            lines.append(f"{c.name:<28} {status:<6} {worst:>13} {c.tolerance:>10.4g}  {node}")
        return "\n".join(lines)


def default_tolerance(field_: ValueField) -> float:
    return field_.spec.tolerance(field_.params)


def _coords(f: ValueField, i: int, j: int, k: int) -> tuple:
    return (i * f.dt, float(f.x[j]), k * f.dt)


class _Worst:
    """Running argmax over per-slice violation arrays."""

    def __init__(self):
        self.value = -math.inf
        self.node = None

    def update(self, viol: np.ndarray, i: int):
        if viol.size == 0:
            return
        flat = int(np.nanargmax(np.where(np.isfinite(viol), viol, np.inf)))
        k, j = np.unravel_index(flat, viol.shape)
        v = float(viol[k, j]) if np.isfinite(viol[k, j]) else math.inf
        if v > self.value:
            self.value, self.node = v, (i, int(j), int(k))


def check_static_bounds(f: ValueField, bounds: AnalyticBounds | None = None, tol: float | None = None) -> PropertyCheck:
    """max(x, V_under) - tol <= V <= min(x + p(T - s), V_bar) + tol."""
    bounds = bounds or AnalyticBounds.from_params(f.params)
    tol = default_tolerance(f) if tol is None else tol
    worst = _Worst()
    for i, V in enumerate(f.slices):
        s = i * f.dt
        S = np.full(V.shape, min(s, bounds.T))
        X = np.broadcast_to(f.x, V.shape)
        W = np.broadcast_to((np.arange(i + 1) * f.dt)[:, None], V.shape)
        W = np.minimum(W, S)
        lower = np.maximum(X, subsolution_bound(S, X, W, bounds))
        upper = np.minimum(X + bounds.p * (bounds.T - S), supersolution_bound(S, X, W, bounds))
        worst.update(np.maximum(lower - V, V - upper), i)
    return PropertyCheck(
        "static_bounds", worst.value <= tol, worst.value,
        _coords(f, *worst.node), tol,
    )


def check_time_properties(f: ValueField, params: ModelParams | None = None, tol: float | None = None) -> PropertyCheck:
    """V(s + dt) - V(s) <= tol and V(s) - V(s + dt) <= 2 p dt + tol."""
    params = params or f.params
    tol = default_tolerance(f) if tol is None else tol
    up, down = _Worst(), _Worst()
    for i in range(f.n_s):
        V, Vn = f.slices[i], f.slices[i + 1][: i + 1]
        up.update(Vn - V, i)
        down.update(V - Vn - 2.0 * params.p * f.dt, i)
    worst = up if up.value >= down.value else down
    return PropertyCheck(
        "time_monotonicity", worst.value <= tol, worst.value, _coords(f, *worst.node), tol,
        details={"nonincreasing_worst": up.value, "lipschitz_worst": down.value},
    )


def check_space_properties(f: ValueField, slope_tol: float = 1e-9) -> PropertyCheck:
    """Adjacent-node slope in [1 - slope_tol, 1 + p T / dx], in value units.

    The reported violation is dx - (V_{j+1} - V_j) for the lower bound and
    (V_{j+1} - V_j) - (dx + p T) for the modulus cap.
    """
    dx = f.dx
    cap = dx + f.params.p * f.params.T
    worst = _Worst()
    for i, V in enumerate(f.slices):
        dV = np.diff(V, axis=1)
        viol = np.maximum(dx - dV, dV - cap)
        viol[~np.isfinite(dV)] = math.inf
        worst.update(viol, i)
    tol = slope_tol * dx
    return PropertyCheck(
        "space_slope", worst.value <= tol, worst.value, _coords(f, *worst.node), tol,
        details={"min_slope": 1.0 - worst.value / dx if math.isfinite(worst.value) else None},
    )


def check_renewal_inequality(f: ValueField, h: HazardFunction, params: ModelParams | None = None, tol: float | None = None) -> PropertyCheck:
    """V(s, x, w) >= exp(-c dt - int_w^{w+dt} lambda) V(s + dt, x, w + dt) - tol."""
    params = params or f.params
    tol = default_tolerance(f) if tol is None else tol
    dt = f.dt
    factor = np.array([math.exp(-params.c * dt - h.integrated(k * dt, dt)) for k in range(f.n_s)])
    worst = _Worst()
    for i in range(f.n_s):
        V, Vn = f.slices[i], f.slices[i + 1][1:]
        worst.update(factor[: i + 1, None] * Vn - V, i)
    return PropertyCheck(
        "renewal_inequality", worst.value <= tol, worst.value, _coords(f, *worst.node), tol,
    )


def check_poisson_w_invariance(f: ValueField, h: HazardFunction | None = None, tol: float | None = None) -> PropertyCheck:
    """Spread of V across w at fixed (s, x); only meaningful for a constant hazard."""
    h = h if h is not None else f.hazard
    tol = default_tolerance(f) if tol is None else tol
    if h is None:
        raise ConfigurationError("the field carries no hazard; pass the one it was solved under")
    if not isinstance(h, ConstantHazard):
        return PropertyCheck("poisson_w_invariance", True, 0.0, None, tol, skipped=True,
                             details={"reason": f"{type(h).__name__} is not memoryless"})
    best, node = -math.inf, None
    for i, V in enumerate(f.slices):
        spread = V.max(axis=0) - V.min(axis=0)
        j = int(np.argmax(spread))
        if spread[j] > best:
            best, node = float(spread[j]), (i * f.dt, float(f.x[j]), 0.0)
    return PropertyCheck("poisson_w_invariance", best <= tol, best, node, tol)


def w_modulus(f: ValueField, stride: int) -> tuple[float, tuple]:
    """max |V(s, x, w) - V(s, x, w + dt)| over nodes on the coarse sub-grid ``stride``."""
    best, node = 0.0, None
    for i in range(stride, f.n_s + 1, stride):
        V = f.slices[i]
        ks = np.arange(0, i, stride)
        d = np.abs(V[ks + 1][:, ::stride] - V[ks][:, ::stride])
        if d.size and d.max() > best:
            a, b = np.unravel_index(int(np.argmax(d)), d.shape)
            best, node = float(d[a, b]), (i * f.dt, float(f.x[b * stride]), ks[a] * f.dt)
    return best, node


def check_w_continuity_trend(fields, tol: float = 1e-12) -> PropertyCheck:
    """The w-direction modulus at common nodes must not grow under refinement.

    ``fields`` are solved on grids refined by factor 2 at each level (coarsest
    first).  The statement being tested is a limit, so only the trend is
    asserted.
    """
    if len(fields) < 2:
        raise ConfigurationError("the refinement trend needs at least two fields")
    mods = []
    for level, f in enumerate(fields):
        mods.append(w_modulus(f, 2**level))
    worst = max(b[0] - a[0] for a, b in zip(mods, mods[1:]))
    return PropertyCheck(
        "w_continuity_trend", worst <= tol, worst, mods[-1][1], tol,
        details={"moduli": [m[0] for m in mods]},
    )


def refinement_fields(spec: GridSpec, params, h, g, levels: int = 3, finest: ValueField | None = None):
    """Solve on ``spec`` coarsened by 2**(levels-1), ..., 1; returns None if not divisible or CFL fails."""
    factor = 2 ** (levels - 1)
    if spec.n_s % factor or spec.n_x % factor:
        return None
    out = []
    for level in range(levels):
        div = 2 ** (levels - 1 - level)
        if div == 1 and finest is not None:
            out.append(finest)
            continue
        coarse = GridSpec(spec.n_s // div, spec.n_x // div, spec.x_max, spec.claim_refine)
        if coarse.cfl_number(params) > 1.0:
            return None
        out.append(solve_vi(coarse, params, h, g))
    return out


def dpp_cross_check(
    f: ValueField,
    params: ModelParams,
    h: HazardFunction,
    g: ClaimDistribution,
    probes,
    family,
    n_paths: int,
    seed: int,
    *,
    h_steps: int = 10,
    tol: float | None = None,
    slack: float | None = None,
    threads: int = 1,
) -> PropertyCheck:
    """Monte Carlo check of the dynamic programming principle at deterministic horizons.

    For every probe and strategy the estimate of dividends paid up to
    ``s + h_steps * dt`` plus the discounted interpolated field value there must
    not exceed V(probe) + tol + 3 se; the best strategy must come within
    tol + 3 se + slack of V(probe).
    """
    tol = default_tolerance(f) if tol is None else tol
    slack = 2.0 * tol if slack is None else slack
    if not family:
        raise ConfigurationError("the strategy family is empty")
    results = []
    worst, worst_node = -math.inf, None
    for probe in probes:
        s, x, w = (float(v) for v in probe)
        i, j, k = f.node_index(s, x, w)
        if i >= f.n_s:
            raise DomainError(f"probe {probe} lies on the terminal slice")
        i_stop = min(i + h_steps, f.n_s)
        stop = params.T if i_stop == f.n_s else i_stop * f.dt

        def cont(xe, we, _i=i_stop):
            return f.interp(_i, xe, we)

        v_node = float(f.slices[i][k, j])
        ests = []
        for strat in family:
            e = estimate_value(params, h, g, strat, s, x, w, n_paths, seed, threads=threads, stop=stop, continuation=cont)
            one_sided = e.mean - v_node - 3.0 * e.stderr
            ests.append({"strategy": strat.label(), "mean": e.mean, "stderr": e.stderr, "one_sided": one_sided})
            if one_sided > worst:
                worst, worst_node = one_sided, (s, x, w)
        best = max(ests, key=lambda d: d["mean"])
        two_sided = abs(best["mean"] - v_node) - 3.0 * best["stderr"] - slack
        if two_sided > worst:
            worst, worst_node = two_sided, (s, x, w)
        results.append({"point": [s, x, w], "V": v_node, "stop": stop, "best": best["strategy"],
                        "gap": best["mean"] - v_node, "estimates": ests})
    return PropertyCheck(
        "dpp_cross_check", worst <= tol, worst, worst_node, tol,
        details={"slack": slack, "h_steps": h_steps, "n_paths": n_paths, "seed": seed, "probes": results},
    )


def family_from_labels(strategies) -> list[Strategy]:
    from .paths import strategy_from_dict

    return [s if isinstance(s, Strategy) else strategy_from_dict(s) for s in strategies]
