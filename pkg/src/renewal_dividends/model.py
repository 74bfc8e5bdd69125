"""Problem constants and stochastic primitives of the renewal risk model.

The claim counting process is a renewal process described through its hazard
rate ``lambda(w)``, where ``w`` is the time elapsed since the last claim.  Given
an elapsed time ``w``, the waiting time to the next claim ``T1`` satisfies

    P(T1 > t) = exp(-int_w^{w+t} lambda(u) du).

Claim sizes are i.i.d. with distribution function ``G``.  All objects here are
immutable; randomness enters only through caller-supplied uniform variates.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "ModelParams",
    "HazardFunction",
    "ConstantHazard",
    "PiecewiseLinearHazard",
    "ErlangTwoHazard",
    "ClaimDistribution",
    "ExponentialClaims",
    "DeterministicClaims",
    "EmpiricalClaims",
    "hazard_at",
    "integrated_hazard",
    "conditional_survival",
    "sample_waiting_time",
    "claim_cdf",
    "sample_claim",
]

VALIDATION_MODES = ("strict", "degenerate")

# slack allowed when a query sits on the edge of the hazard's domain
_EDGE = 1e-12
BISECTION_TOL = 1e-10


@dataclass(frozen=True)
class ModelParams:
    """Premium rate ``p``, discount rate ``c``, horizon ``T`` and hazard bound ``Lambda``.

    ``validation_mode="degenerate"`` additionally admits ``c == 0`` and an
    identically zero hazard; both only exist to make closed-form fixtures
    available and are never the default.
    """

    p: float
    c: float
    T: float
    Lambda: float
    validation_mode: str = "strict"

    def __post_init__(self):
        if self.validation_mode not in VALIDATION_MODES:
            raise ConfigurationError(
                f"validation_mode must be one of {VALIDATION_MODES}, got {self.validation_mode!r}"
            )
        for name in ("p", "c", "T", "Lambda"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigurationError(f"{name} must be a finite number, got {value!r}")
        if self.p <= 0:
            raise ConfigurationError(f"premium rate p must be positive, got {self.p}")
        if self.T <= 0:
            raise ConfigurationError(f"horizon T must be positive, got {self.T}")
        if self.Lambda <= 0:
            raise ConfigurationError(f"hazard bound Lambda must be positive, got {self.Lambda}")
        if self.c < 0 or (self.c == 0 and self.validation_mode == "strict"):
            raise ConfigurationError(
                f"discount rate c must be positive in strict mode, got {self.c}"
            )

    @property
    def degenerate(self) -> bool:
        return self.validation_mode == "degenerate"

    def check_hazard(self, hazard: "HazardFunction", n_points: int = 1001) -> None:
        """Raise ConfigurationError unless ``hazard`` is admissible for these constants."""
        if hazard.horizon < self.T - _EDGE:
            raise ConfigurationError(
                f"hazard is only defined on [0, {hazard.horizon}], model horizon is {self.T}"
            )
        ws = np.linspace(0.0, self.T, n_points)
        rates = np.array([hazard.rate(w) for w in ws])
        if np.any(rates < 0):
            raise ConfigurationError("hazard rate must be nonnegative")
        worst = float(rates.max())
        if worst > self.Lambda * (1 + 1e-12):
            raise ConfigurationError(
                f"hazard rate reaches {worst:.6g} which exceeds Lambda={self.Lambda}"
            )
        if self.validation_mode == "strict" and np.any(rates[1:] <= 0):
            raise ConfigurationError(
                "strict mode requires a positive hazard rate on (0, T]; "
                "use validation_mode='degenerate' for a zero hazard"
            )

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "c": self.c,
            "T": self.T,
            "Lambda": self.Lambda,
            "validation_mode": self.validation_mode,
        }


# ---------------------------------------------------------------------------
# hazard rates


class HazardFunction:
    """Base class for interarrival hazard rates.

    Subclasses provide ``rate`` (clamped evaluation) and ``cumulative``, the
    antiderivative of the rate starting at 0; beyond ``horizon`` the rate is
    extended by its value at the horizon.
    """

    kind: ClassVar[str] = ""
    kernel_kind: ClassVar[int] = -1
    horizon: float = math.inf

    def rate(self, w: float) -> float:
        raise NotImplementedError

    def cumulative(self, u: float) -> float:
        raise NotImplementedError

    def at(self, w: float) -> float:
        if not (w >= 0) or w > self.horizon + _EDGE:
            raise DomainError(f"elapsed time w={w} outside [0, {self.horizon}]")
        return self.rate(w)

    def integrated(self, w: float, t: float) -> float:
        if not (w >= 0):
            raise DomainError(f"elapsed time w={w} must be nonnegative")
        if not (t >= 0):
            raise DomainError(f"duration t={t} must be nonnegative")
        if t == 0:
            return 0.0
        return self.cumulative(w + t) - self.cumulative(w)

    def survival(self, w: float, t: float) -> float:
        return math.exp(-self.integrated(w, t))

    def sample_waiting_time(self, w: float, u01: float, cap: float | None = None) -> float:
        """Inverse-transform sample of the time to the next claim.

        ``cap`` bounds the absolute elapsed time searched (defaults to the
        hazard's horizon); if the hazard mass on ``[w, cap]`` is too small the
        claim never fires and ``inf`` is returned.
        """
        if not (0.0 <= u01 < 1.0):
            raise DomainError(f"uniform variate {u01} outside [0, 1)")
        target = -math.log1p(-u01)
        if target == 0.0:
            return 0.0
        limit = (self.horizon if cap is None else cap) - w
        if math.isfinite(limit):
            if limit <= 0 or self.integrated(w, limit) < target:
                return math.inf
            lo, hi = 0.0, limit
        else:
            lo, hi = 0.0, 1.0
            while self.integrated(w, hi) < target:
                lo, hi = hi, 2.0 * hi
                if hi > 1e12:
                    return math.inf
        while hi - lo > BISECTION_TOL:
            mid = 0.5 * (lo + hi)
            if self.integrated(w, mid) >= target:
                hi = mid
            else:
                lo = mid
        return hi

    def kernel_data(self) -> tuple:
        """(kind code, scalar parameter, knot abscissae, knot rates, knot cumulative, horizon)."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantHazard(HazardFunction):
    """Poisson claim arrivals with rate ``lam``; memoryless in ``w``."""

    lam: float
    horizon: float = math.inf

    kind: ClassVar[str] = "constant"
    kernel_kind: ClassVar[int] = 0

    def __post_init__(self):
        if not (self.lam >= 0) or not math.isfinite(self.lam):
            raise ConfigurationError(f"constant hazard must be finite and >= 0, got {self.lam}")

    def rate(self, w):
        return self.lam

    def cumulative(self, u):
        return self.lam * u

    def integrated(self, w, t):
        if not (w >= 0):
            raise DomainError(f"elapsed time w={w} must be nonnegative")
        if not (t >= 0):
            raise DomainError(f"duration t={t} must be nonnegative")
        return self.lam * t

    def sample_waiting_time(self, w, u01, cap=None):
        if not (0.0 <= u01 < 1.0):
            raise DomainError(f"uniform variate {u01} outside [0, 1)")
        target = -math.log1p(-u01)
        if target == 0.0:
            return 0.0
        if self.lam == 0.0:
            return math.inf
        return target / self.lam

    def kernel_data(self):
        empty = np.zeros(0)
        return (0, float(self.lam), empty, empty, empty, float(self.horizon))

    def to_dict(self):
        return {"type": self.kind, "rate": self.lam}


@dataclass(frozen=True)
class PiecewiseLinearHazard(HazardFunction):
    """Hazard given by linear interpolation of ``(w, lambda(w))`` knots starting at w = 0."""

    knots: tuple
    horizon: float = field(init=False)

    kind: ClassVar[str] = "piecewise_linear"
    kernel_kind: ClassVar[int] = 1

    def __post_init__(self):
        knots = tuple((float(a), float(b)) for a, b in self.knots)
        if len(knots) < 2:
            raise ConfigurationError("piecewise-linear hazard needs at least two knots")
        ws = [k[0] for k in knots]
        rates = [k[1] for k in knots]
        if ws[0] != 0.0:
            raise ConfigurationError("first hazard knot must sit at w = 0")
        if any(b <= a for a, b in zip(ws, ws[1:])):
            raise ConfigurationError("hazard knots must be strictly increasing in w")
        if any(r < 0 or not math.isfinite(r) for r in rates):
            raise ConfigurationError("hazard knot values must be finite and >= 0")
        cum = [0.0]
        for i in range(1, len(ws)):
            cum.append(cum[-1] + 0.5 * (rates[i - 1] + rates[i]) * (ws[i] - ws[i - 1]))
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "horizon", ws[-1])
        object.__setattr__(self, "_ws", ws)
        object.__setattr__(self, "_rates", rates)
        object.__setattr__(self, "_cum", cum)

    def _segment(self, u):
        return min(max(bisect.bisect_right(self._ws, u) - 1, 0), len(self._ws) - 2)

    def rate(self, w):
        if w >= self._ws[-1]:
            return self._rates[-1]
        i = self._segment(w)
        w0, w1 = self._ws[i], self._ws[i + 1]
        r0, r1 = self._rates[i], self._rates[i + 1]
        return r0 + (r1 - r0) * (w - w0) / (w1 - w0)

    def cumulative(self, u):
        if u >= self._ws[-1]:
            return self._cum[-1] + self._rates[-1] * (u - self._ws[-1])
        i = self._segment(u)
        return self._cum[i] + 0.5 * (self._rates[i] + self.rate(u)) * (u - self._ws[i])

    def kernel_data(self):
        return (
            1,
            0.0,
            np.asarray(self._ws, dtype=float),
            np.asarray(self._rates, dtype=float),
            np.asarray(self._cum, dtype=float),
            float(self.horizon),
        )

    def to_dict(self):
        return {"type": self.kind, "knots": [list(k) for k in self.knots]}


@dataclass(frozen=True)
class ErlangTwoHazard(HazardFunction):
    """Hazard of Erlang(2, beta) interarrival times, ``beta^2 w / (1 + beta w)``."""

    beta: float
    horizon: float = math.inf

    kind: ClassVar[str] = "erlang2"
    kernel_kind: ClassVar[int] = 2

    def __post_init__(self):
        if not (self.beta > 0) or not math.isfinite(self.beta):
            raise ConfigurationError(f"Erlang rate beta must be positive, got {self.beta}")

    def rate(self, w):
        w = min(w, self.horizon)
        return self.beta * self.beta * w / (1.0 + self.beta * w)

    def _cum_inside(self, u):
        bu = self.beta * u
        return bu - math.log1p(bu)

    def cumulative(self, u):
        if u > self.horizon:
            return self._cum_inside(self.horizon) + self.rate(self.horizon) * (u - self.horizon)
        return self._cum_inside(u)

    def kernel_data(self):
        empty = np.zeros(0)
        return (2, float(self.beta), empty, empty, empty, float(self.horizon))

    def to_dict(self):
        return {"type": self.kind, "beta": self.beta}


# ---------------------------------------------------------------------------
# claim sizes


class ClaimDistribution:
    kind: ClassVar[str] = ""
    kernel_kind: ClassVar[int] = -1

    def cdf(self, u):
        raise NotImplementedError

    def sample(self, u01: float) -> float:
        raise NotImplementedError

    def _check_uniform(self, u01):
        if not (0.0 <= u01 < 1.0):
            raise DomainError(f"uniform variate {u01} outside [0, 1)")

    def kernel_data(self) -> tuple:
        """(kind code, scalar parameter, support points, cumulative probabilities)."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialClaims(ClaimDistribution):
    mean: float

    kind: ClassVar[str] = "exponential"
    kernel_kind: ClassVar[int] = 0

    def __post_init__(self):
        if not (self.mean > 0) or not math.isfinite(self.mean):
            raise ConfigurationError(f"claim mean must be positive, got {self.mean}")

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        out = np.where(u < 0, 0.0, -np.expm1(-np.maximum(u, 0.0) / self.mean))
        return float(out) if out.ndim == 0 else out

    def sample(self, u01):
        self._check_uniform(u01)
        return -self.mean * math.log1p(-u01)

    def kernel_data(self):
        empty = np.zeros(0)
        return (0, float(self.mean), empty, empty)

    def to_dict(self):
        return {"type": self.kind, "mean": self.mean}


@dataclass(frozen=True)
class DeterministicClaims(ClaimDistribution):
    """Every claim has the same size (a point mass; G is a step function)."""

    size: float

    kind: ClassVar[str] = "deterministic"
    kernel_kind: ClassVar[int] = 1

    def __post_init__(self):
        if not (self.size > 0) or not math.isfinite(self.size):
            raise ConfigurationError(f"claim size must be positive, got {self.size}")

    def cdf(self, u):
        out = np.where(np.asarray(u, dtype=float) >= self.size, 1.0, 0.0)
        return float(out) if out.ndim == 0 else out

    def sample(self, u01):
        self._check_uniform(u01)
        return self.size

    def kernel_data(self):
        empty = np.zeros(0)
        return (1, float(self.size), empty, empty)

    def to_dict(self):
        return {"type": self.kind, "size": self.size}


@dataclass(frozen=True)
class EmpiricalClaims(ClaimDistribution):
    """Continuous piecewise-linear CDF through ``(points[i], probs[i])``.

    If the first support point is positive the CDF starts from ``(0, 0)``.
    """

    points: tuple
    probs: tuple

    kind: ClassVar[str] = "empirical"
    kernel_kind: ClassVar[int] = 2

    def __post_init__(self):
        pts = tuple(float(v) for v in self.points)
        qs = tuple(float(v) for v in self.probs)
        if len(pts) != len(qs) or not pts:
            raise ConfigurationError("points and probs must be nonempty and of equal length")
        if pts[0] < 0 or any(b <= a for a, b in zip(pts, pts[1:])):
            raise ConfigurationError("support points must be >= 0 and strictly increasing")
        if any(q < 0 or q > 1 for q in qs) or any(b < a for a, b in zip(qs, qs[1:])):
            raise ConfigurationError("cumulative probabilities must be nondecreasing in [0, 1]")
        if abs(qs[-1] - 1.0) > 1e-12:
            raise ConfigurationError("last cumulative probability must equal 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", qs)
        if pts[0] > 0:
            pts, qs = (0.0,) + pts, (0.0,) + qs
        object.__setattr__(self, "_pts", np.asarray(pts))
        object.__setattr__(self, "_qs", np.asarray(qs[:-1] + (1.0,)))

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        out = np.where(u < 0, 0.0, np.interp(u, self._pts, self._qs, right=1.0))
        return float(out) if out.ndim == 0 else out

    def sample(self, u01):
        self._check_uniform(u01)
        qs, pts = self._qs, self._pts
        i = int(np.searchsorted(qs, u01, side="left"))
        if i == 0:
            return float(pts[0])
        q0, q1 = qs[i - 1], qs[i]
        return float(pts[i - 1] + (u01 - q0) / (q1 - q0) * (pts[i] - pts[i - 1]))

    def kernel_data(self):
        return (2, 0.0, self._pts.copy(), self._qs.copy())

    def to_dict(self):
        return {"type": self.kind, "points": list(self.points), "probs": list(self.probs)}


# ---------------------------------------------------------------------------
# functional interface


def hazard_at(h: HazardFunction, w: float) -> float:
    return h.at(w)


def integrated_hazard(h: HazardFunction, w: float, t: float) -> float:
    """Integral of the hazard rate over ``[w, w + t]``."""
    return h.integrated(w, t)


def conditional_survival(h: HazardFunction, w: float, t: float) -> float:
    """Probability that no claim occurs within ``t`` given elapsed time ``w``."""
    return h.survival(w, t)


def sample_waiting_time(h: HazardFunction, w: float, u01: float, cap: float | None = None) -> float:
    return h.sample_waiting_time(w, u01, cap)


def claim_cdf(g: ClaimDistribution, u):
    return g.cdf(u)


def sample_claim(g: ClaimDistribution, u01: float) -> float:
    return g.sample(u01)


def hazard_from_dict(d: dict) -> HazardFunction:
    kind = d.get("type")
    try:
        if kind == "constant":
            return ConstantHazard(float(d["rate"]))
        if kind == "piecewise_linear":
            return PiecewiseLinearHazard(tuple(tuple(k) for k in d["knots"]))
        if kind == "erlang2":
            return ErlangTwoHazard(float(d["beta"]))
    except KeyError as exc:
        raise ConfigurationError(f"hazard block missing field {exc}") from None
    raise ConfigurationError(f"unknown hazard type {kind!r}")


def claims_from_dict(d: dict) -> ClaimDistribution:
    kind = d.get("type")
    try:
        if kind == "exponential":
            return ExponentialClaims(float(d["mean"]))
        if kind == "deterministic":
            return DeterministicClaims(float(d["size"]))
        if kind == "empirical":
            return EmpiricalClaims(tuple(d["points"]), tuple(d["probs"]))
    except KeyError as exc:
        raise ConfigurationError(f"claims block missing field {exc}") from None
    raise ConfigurationError(f"unknown claim distribution type {kind!r}")
