"""Pathwise simulation of the controlled surplus under feedback dividend strategies.

Between claims the surplus moves deterministically (premium inflow at rate
``p`` minus the strategy's continuous payout), so every strategy here is
simulated exactly by event logic: claim epochs come from inverse-transform
sampling of the conditional waiting time, and the flow between them is solved
in closed form.
"""

from __future__ import annotations

import bisect
import csv
import functools
import math
from dataclasses import dataclass
from typing import ClassVar, NamedTuple

import numpy as np

from .errors import ConfigurationError, DomainError
from .model import ClaimDistribution, HazardFunction, ModelParams

__all__ = [
    "PathState",
    "Strategy",
    "Barrier",
    "ThresholdRate",
    "LiquidateNow",
    "PayAllAtT",
    "NoDividend",
    "PathEvent",
    "PathRecord",
    "discounted_annuity",
    "strategy_lump",
    "simulate_path",
    "write_trace_csv",
    "strategy_from_dict",
]

# tolerance for "surplus sits on the barrier / threshold"
PIN_EPS = 1e-12
DOMAIN_EPS = 1e-12

# kernel codes for the continuous part of a strategy
FLOW_NONE, FLOW_BARRIER, FLOW_THRESHOLD = 0, 1, 2


@dataclass(frozen=True)
class PathState:
    t: float
    x: float
    w: float


class Strategy:
    """A feedback dividend rule: lumps at decision epochs plus a continuous payout."""

    kind: ClassVar[str] = ""

    def kernel_data(self) -> tuple:
        """(flow kind, knot times, knot levels, level, rate, pays at horizon)."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"type": self.kind}

    def label(self) -> str:
        return self.kind


@dataclass(frozen=True)
class Barrier(Strategy):
    """Reflect the surplus at ``b``: pay any excess at once, then skim the premium.

    A time-dependent barrier is given by ``knots``, a sequence of ``(t, b)``
    pairs interpolated linearly and held constant outside the knot range.
    """

    level: float = 0.0
    knots: tuple | None = None

    kind: ClassVar[str] = "barrier"

    def __post_init__(self):
        if self.knots is None:
            if not (self.level >= 0) or not math.isfinite(self.level):
                raise ConfigurationError(f"barrier level must be >= 0, got {self.level}")
            knots = ((0.0, float(self.level)),)
        else:
            knots = tuple((float(a), float(b)) for a, b in self.knots)
            if not knots:
                raise ConfigurationError("barrier knot table is empty")
            if any(b < 0 or not math.isfinite(b) for _, b in knots):
                raise ConfigurationError("barrier levels must be finite and >= 0")
            ts = [a for a, _ in knots]
            if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
                raise ConfigurationError("barrier knot times must be strictly increasing")
            object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "_ts", tuple(a for a, _ in knots))
        object.__setattr__(self, "_bs", tuple(b for _, b in knots))

    def at(self, t: float) -> float:
        return _interp_const(self._ts, self._bs, t)

    def kernel_data(self):
        return (FLOW_BARRIER, np.asarray(self._ts), np.asarray(self._bs), 0.0, 0.0, True)

    def to_dict(self):
        if self.knots is None:
            return {"type": self.kind, "level": self.level}
        return {"type": self.kind, "knots": [list(k) for k in self.knots]}

    def label(self):
        if self.knots is None:
            return f"barrier(b={self.level:g})"
        return "barrier(" + ",".join(f"{t:g}:{b:g}" for t, b in self.knots) + ")"


@dataclass(frozen=True)
class ThresholdRate(Strategy):
    """Pay continuously at ``rate`` while the surplus is above ``level``.

    When ``rate > p`` the surplus is driven down to ``level`` and then held
    there, paying the whole premium.
    """

    level: float
    rate: float

    kind: ClassVar[str] = "threshold_rate"

    def __post_init__(self):
        if not (self.level >= 0) or not (self.rate >= 0):
            raise ConfigurationError("threshold level and rate must be >= 0")

    def kernel_data(self):
        empty = np.zeros(0)
        return (FLOW_THRESHOLD, empty, empty, float(self.level), float(self.rate), True)

    def to_dict(self):
        return {"type": self.kind, "level": self.level, "rate": self.rate}

    def label(self):
        return f"threshold(level={self.level:g},rate={self.rate:g})"


@dataclass(frozen=True)
class LiquidateNow(Strategy):
    """Pay the whole surplus at the start, then pay the premium as it arrives.

    This is the barrier at zero; after the initial lump the surplus stays at 0,
    so later epochs pay no lump.
    """

    kind: ClassVar[str] = "liquidate_now"

    def kernel_data(self):
        return (FLOW_BARRIER, np.zeros(1), np.zeros(1), 0.0, 0.0, True)


@dataclass(frozen=True)
class PayAllAtT(Strategy):
    """Hold everything and pay the remaining surplus at the horizon."""

    kind: ClassVar[str] = "pay_all_at_T"

    def kernel_data(self):
        empty = np.zeros(0)
        return (FLOW_NONE, empty, empty, 0.0, 0.0, True)


@dataclass(frozen=True)
class NoDividend(Strategy):
    """Never pay anything, not even at the horizon."""

    kind: ClassVar[str] = "no_dividend"

    def kernel_data(self):
        empty = np.zeros(0)
        return (FLOW_NONE, empty, empty, 0.0, 0.0, False)


def strategy_from_dict(d: dict) -> Strategy:
    kind = d.get("type")
    try:
        if kind == "barrier":
            if "knots" in d:
                return Barrier(knots=tuple(tuple(k) for k in d["knots"]))
            return Barrier(float(d["level"]))
        if kind == "threshold_rate":
            return ThresholdRate(float(d["level"]), float(d["rate"]))
    except KeyError as exc:
        raise ConfigurationError(f"strategy block missing field {exc}") from None
    simple = {
        "liquidate_now": LiquidateNow,
        "pay_all_at_T": PayAllAtT,
        "no_dividend": NoDividend,
    }
    if kind in simple:
        return simple[kind]()
    raise ConfigurationError(f"unknown strategy type {kind!r}")


class PathEvent(NamedTuple):
    time: float
    kind: str  # "claim", "lump_dividend", "ruin" or "horizon"
    amount: float
    surplus_after: float
    w_after: float
    cum_dividends: float
    cum_claims: float


@dataclass(frozen=True)
class PathRecord:
    """One simulated trajectory.

    ``terminal_surplus``/``terminal_w`` describe the state at the stopping time
    before any horizon lump (the deficit, if ruined).
    """

    events: tuple
    discounted_dividends: float
    ruin_time: float | None
    terminal_surplus: float
    terminal_w: float
    total_dividends: float
    total_claims: float


def _interp_const(ts, vs, t):
    if t <= ts[0]:
        return vs[0]
    if t >= ts[-1]:
        return vs[-1]
    i = bisect.bisect_right(ts, t) - 1
    return vs[i] + (vs[i + 1] - vs[i]) * (t - ts[i]) / (ts[i + 1] - ts[i])


def discounted_annuity(rate: float, a: float, b: float, s: float, c: float) -> float:
    """Value at time ``s`` of paying ``rate`` per unit time over ``[a, b]``."""
    if b < a:
        raise DomainError(f"annuity interval [{a}, {b}] is reversed")
    return _annuity(rate, a, b, s, c)


def _annuity(rate, a, b, s, c):
    if rate == 0.0 or b == a:
        return 0.0
    if c == 0.0:
        return rate * (b - a)
    return rate * (math.exp(-c * (a - s)) - math.exp(-c * (b - s))) / c


def strategy_lump(strat: Strategy, state: PathState, params: ModelParams) -> float:
    """Lump dividend the strategy pays at a decision epoch in ``state``."""
    if isinstance(strat, Barrier):
        return max(0.0, state.x - strat.at(state.t))
    if isinstance(strat, LiquidateNow):
        return max(0.0, state.x)
    if isinstance(strat, PayAllAtT):
        return state.x if state.t >= params.T - DOMAIN_EPS else 0.0
    return 0.0


# ---------------------------------------------------------------------------
# deterministic flow between claims; the compiled kernel mirrors these


def _barrier_flow(t, t1, x, p, c, s, kt, kb):
    disc = 0.0
    paid = 0.0
    n = len(kt)
    while t < t1:
        # next knot strictly after t bounds the linear piece
        i = bisect.bisect_right(kt, t) if n else 0
        te = kt[i] if i < n else math.inf
        if te > t1:
            te = t1
        b0 = _interp_const(kt, kb, t)
        b1 = _interp_const(kt, kb, te)
        slope = (b1 - b0) / (te - t)
        if x >= b0 - PIN_EPS and slope <= p:
            r = p - slope
            disc += _annuity(r, t, te, s, c)
            paid += r * (te - t)
            x = b1
            t = te
            continue
        gap = b0 - x
        if gap > 0 and p > slope:
            th = t + gap / (p - slope)
            if th < te:
                x = _interp_const(kt, kb, th)
                t = th
                continue
        x += p * (te - t)
        t = te
    return x, disc, paid


def _threshold_flow(t, t1, x, p, c, s, level, rate):
    disc = 0.0
    paid = 0.0
    while t < t1:
        if x > level + PIN_EPS or (x >= level - PIN_EPS and rate <= p):
            if rate <= p:
                disc += _annuity(rate, t, t1, s, c)
                paid += rate * (t1 - t)
                x += (p - rate) * (t1 - t)
                t = t1
            else:
                th = t + (x - level) / (rate - p)
                te = th if th < t1 else t1
                disc += _annuity(rate, t, te, s, c)
                paid += rate * (te - t)
                if th < t1:
                    x = level
                else:
                    x -= (rate - p) * (te - t)
                t = te
        elif x >= level - PIN_EPS:
            x = level
            disc += _annuity(p, t, t1, s, c)
            paid += p * (t1 - t)
            t = t1
        else:
            th = t + (level - x) / p
            if th >= t1:
                x += p * (t1 - t)
                t = t1
            else:
                x = level
                t = th
    return x, disc, paid


def _flow(sdata, t, t1, x, p, c, s):
    kind, kt, kb, level, rate, _ = sdata
    if kind == FLOW_BARRIER:
        return _barrier_flow(t, t1, x, p, c, s, kt, kb)
    if kind == FLOW_THRESHOLD:
        return _threshold_flow(t, t1, x, p, c, s, level, rate)
    return x + p * (t1 - t), 0.0, 0.0


def _epoch_lump(sdata, t, x):
    kind, kt, kb = sdata[0], sdata[1], sdata[2]
    if kind == FLOW_BARRIER:
        b = _interp_const(kt, kb, t)
        return x - b if x > b else 0.0
    return 0.0


def run_path(p, c, T, hazard, claims, sdata, s, x, w, stop, draw, events=None):
    """Core event loop shared by `simulate_path` and the pure-Python batch kernel.

    ``sdata`` is ``Strategy.kernel_data()`` with knot arrays as tuples and
    ``draw`` returns the next uniform variate.  Returns ``(discounted
    dividends, surplus at stop, w at stop, ruin time or nan)``; the horizon
    lump is added only when ``stop`` is the model horizon ``T``.
    """
    t = s
    disc = 0.0
    paid = 0.0
    claimed = 0.0
    lump = _epoch_lump(sdata, t, x)
    if lump > 0.0:
        x -= lump
        paid += lump
        disc += lump * math.exp(-c * (t - s))
        if events is not None:
            events.append(PathEvent(t, "lump_dividend", lump, x, w, paid, claimed))
    while True:
        tau = hazard.sample_waiting_time(w, draw(), T)
        t_next = t + tau
        done = t_next >= stop
        t_end = stop if done else t_next
        x, d_disc, d_paid = _flow(sdata, t, t_end, x, p, c, s)
        disc += d_disc
        paid += d_paid
        w += t_end - t
        t = t_end
        if done:
            break
        u = claims.sample(draw())
        x -= u
        w = 0.0
        claimed += u
        if x < 0.0:
            if events is not None:
                events.append(PathEvent(t, "ruin", u, x, w, paid, claimed))
            return disc, x, w, t
        if events is not None:
            events.append(PathEvent(t, "claim", u, x, w, paid, claimed))
        lump = _epoch_lump(sdata, t, x)
        if lump > 0.0:
            x -= lump
            paid += lump
            disc += lump * math.exp(-c * (t - s))
            if events is not None:
                events.append(PathEvent(t, "lump_dividend", lump, x, w, paid, claimed))
    x_stop = x
    final = 0.0
    if stop >= T and sdata[5]:
        final = x
        disc += x * math.exp(-c * (t - s))
        paid += x
    if events is not None:
        events.append(PathEvent(t, "horizon", final, x - final, w, paid, claimed))
    return disc, x_stop, w, math.nan


def python_strategy_data(strat: Strategy) -> tuple:
    kind, kt, kb, level, rate, pays = strat.kernel_data()
    return (kind, tuple(float(v) for v in kt), tuple(float(v) for v in kb), level, rate, pays)


@functools.lru_cache(maxsize=64)
def _check_model(params: ModelParams, hazard: HazardFunction) -> None:
    params.check_hazard(hazard)


def check_start(params: ModelParams, s: float, x: float, w: float, stop: float | None = None) -> float:
    """Validate a starting point in D and return the stopping time."""
    T = params.T
    if not (0.0 <= s <= T + DOMAIN_EPS):
        raise DomainError(f"start time s={s} outside [0, {T}]")
    if not (x >= 0.0) or not math.isfinite(x):
        raise DomainError(f"initial surplus x={x} must be finite and >= 0")
    if not (0.0 <= w <= s + DOMAIN_EPS):
        raise DomainError(f"elapsed time w={w} outside [0, s={s}]")
    if stop is None:
        return T
    if not (s <= stop <= T + DOMAIN_EPS):
        raise DomainError(f"stopping time {stop} outside [s, T]")
    return min(stop, T)


def simulate_path(
    params: ModelParams,
    h: HazardFunction,
    g: ClaimDistribution,
    strat: Strategy,
    s: float,
    x: float,
    w: float,
    rng,
    stop: float | None = None,
) -> PathRecord:
    """Simulate one trajectory from ``(s, x, w)`` and record its events.

    ``rng`` is anything with a ``random()`` method returning uniforms in
    [0, 1) (a ``numpy.random.Generator`` for instance).  With ``stop < T`` the
    path is cut at ``stop`` without paying the horizon lump, which is what the
    dynamic-programming cross-check needs.
    """
    if not isinstance(strat, Strategy):
        raise ConfigurationError(f"not a strategy: {strat!r}")
    _check_model(params, h)
    stop = check_start(params, s, x, w, stop)
    events: list = []
    disc, x_stop, w_stop, ruin = run_path(
        params.p, params.c, params.T, h, g, python_strategy_data(strat),
        float(s), float(x), float(w), stop, lambda: float(rng.random()), events,
    )
    final = events[-1]
    return PathRecord(
        events=tuple(events),
        discounted_dividends=disc,
        ruin_time=None if math.isnan(ruin) else ruin,
        terminal_surplus=x_stop,
        terminal_w=w_stop,
        total_dividends=final.cum_dividends,
        total_claims=final.cum_claims,
    )


TRACE_COLUMNS = ("time", "kind", "amount", "surplus_after", "w_after")


def write_trace_csv(record: PathRecord, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for ev in record.events:
            writer.writerow([repr(ev.time), ev.kind, repr(ev.amount), repr(ev.surplus_after), repr(ev.w_after)])
