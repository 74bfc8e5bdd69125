"""Monte Carlo evaluation of the expected discounted dividends of a strategy.

Each path ``i`` draws its uniforms from a private stream seeded by hashing
``(master_seed, i)``, so an estimate depends only on the seed and the path
count, never on how paths are split across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigurationError
from .model import ClaimDistribution, HazardFunction, ModelParams
from .paths import Strategy, _check_model, check_start, python_strategy_data

__all__ = ["EstimateWithCI", "estimate_value", "sample_values", "merge_estimates", "path_generator"]

Z95 = 1.96
UNIFORMS_PER_PATH = 64
CHUNK = 4096


@dataclass(frozen=True)
class EstimateWithCI:
    mean: float
    stderr: float
    n_paths: int
    ci95_low: float
    ci95_high: float
    seed: int
    index_start: int = 0

    @property
    def index_stop(self) -> int:
        return self.index_start + self.n_paths

    def to_dict(self, strategy: str | None = None, point=None) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "ci95": [self.ci95_low, self.ci95_high],
            "n_paths": self.n_paths,
            "seed": self.seed,
            "strategy": strategy,
            "point": None if point is None else [float(v) for v in point],
        }


class SimSpec:
    """Flat description of a simulation problem, as consumed by the kernels."""

    def __init__(self, params: ModelParams, h: HazardFunction, g: ClaimDistribution, strat: Strategy):
        self.p, self.c, self.T = float(params.p), float(params.c), float(params.T)
        self.hazard, self.claims = h, g
        self.sdata = python_strategy_data(strat)
        hk, hp, hws, hrates, hcum, hhor = h.kernel_data()
        self.hz_kind, self.hz_par, self.hz_horizon = hk, hp, hhor
        self.hz_ws, self.hz_rates, self.hz_cum = (np.ascontiguousarray(a, dtype=float) for a in (hws, hrates, hcum))
        gk, gp, gpts, gqs = g.kernel_data()
        self.cl_kind, self.cl_par = gk, gp
        self.cl_pts, self.cl_qs = (np.ascontiguousarray(a, dtype=float) for a in (gpts, gqs))
        sk, kt, kb, level, rate, pays = strat.kernel_data()
        self.st_kind, self.st_level, self.st_rate, self.st_pays = sk, level, rate, pays
        self.st_kt, self.st_kb = (np.ascontiguousarray(a, dtype=float) for a in (kt, kb))


def path_generator(master_seed: int, index: int) -> np.random.Generator:
    """Private uniform stream of path ``index``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, index])))


def _uniforms(master_seed, indices, k):
    out = np.empty((len(indices), k))
    for row, i in enumerate(indices):
        out[row] = path_generator(master_seed, int(i)).random(k)
    return out


def _run_chunk(sim, master_seed, start, stop_idx, s, x, w, stop):
    kern = _kernels.get()
    indices = np.arange(start, stop_idx)
    U = _uniforms(master_seed, indices, UNIFORMS_PER_PATH)
    disc, x_end, w_end, ruin, status = kern.simulate_batch(U, sim, s, x, w, stop)
    k = UNIFORMS_PER_PATH
    while np.any(status < 0):
        # rerun exhausted paths on a longer prefix of the same streams
        k *= 4
        redo = np.flatnonzero(status < 0)
        U = _uniforms(master_seed, indices[redo], k)
        d2, x2, w2, r2, st2 = kern.simulate_batch(U, sim, s, x, w, stop)
        disc[redo], x_end[redo], w_end[redo], ruin[redo], status[redo] = d2, x2, w2, r2, st2
    return disc, x_end, w_end, ruin


def sample_values(
    params: ModelParams,
    h: HazardFunction,
    g: ClaimDistribution,
    strat: Strategy,
    s: float,
    x: float,
    w: float,
    n_paths: int,
    master_seed: int,
    *,
    index_start: int = 0,
    threads: int = 1,
    stop: float | None = None,
    continuation=None,
) -> np.ndarray:
    """Per-path samples, ordered by path index.

    Without ``stop`` each sample is the discounted dividend total up to ruin or
    the horizon.  With ``stop < T`` the path is cut at ``stop`` and, if still
    solvent, credited ``exp(-c (stop - s)) * continuation(x_stop, w_stop)``
    (``continuation`` is vectorised over arrays).
    """
    if not isinstance(master_seed, (int, np.integer)) or master_seed < 0:
        raise ConfigurationError(f"master seed must be a nonnegative integer, got {master_seed!r}")
    if n_paths < 1:
        raise ConfigurationError(f"n_paths must be positive, got {n_paths}")
    _check_model(params, h)
    stop = check_start(params, s, x, w, stop)
    if stop < params.T and continuation is None:
        raise ConfigurationError("a continuation value is needed when stopping before T")
    sim = SimSpec(params, h, g, strat)
    bounds = [
        (a, min(a + CHUNK, index_start + n_paths))
        for a in range(index_start, index_start + n_paths, CHUNK)
    ]

    def work(b):
        return _run_chunk(sim, int(master_seed), b[0], b[1], float(s), float(x), float(w), float(stop))

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    disc = np.concatenate([p[0] for p in parts])
    if stop < params.T:
        x_end = np.concatenate([p[1] for p in parts])
        w_end = np.concatenate([p[2] for p in parts])
        alive = np.isnan(np.concatenate([p[3] for p in parts]))
        extra = np.zeros_like(disc)
        if alive.any():
            extra[alive] = math.exp(-params.c * (stop - s)) * np.asarray(
                continuation(x_end[alive], w_end[alive]), dtype=float
            )
        disc = disc + extra
    return disc


def summarize(samples: np.ndarray, seed: int, index_start: int = 0) -> EstimateWithCI:
    n = samples.shape[0]
    if n < 2:
        raise ConfigurationError("at least two paths are needed for a standard error")
    if np.all(samples == samples[0]):
        # deterministic paths: avoid rounding noise in the summation
        mean, stderr = float(samples[0]), 0.0
    else:
        mean = float(samples.mean())
        stderr = float(samples.std(ddof=1) / math.sqrt(n))
    return EstimateWithCI(
        mean=mean,
        stderr=stderr,
        n_paths=n,
        ci95_low=mean - Z95 * stderr,
        ci95_high=mean + Z95 * stderr,
        seed=int(seed),
        index_start=int(index_start),
    )


def estimate_value(
    params: ModelParams,
    h: HazardFunction,
    g: ClaimDistribution,
    strat: Strategy,
    s: float,
    x: float,
    w: float,
    n_paths: int,
    master_seed: int,
    *,
    index_start: int = 0,
    threads: int = 1,
    stop: float | None = None,
    continuation=None,
) -> EstimateWithCI:
    """Estimate ``J(s, x, w; strat)`` with a normal 95% confidence interval."""
    if n_paths < 2:
        raise ConfigurationError(f"n_paths must be >= 2 for a standard error, got {n_paths}")
    samples = sample_values(
        params, h, g, strat, s, x, w, n_paths, master_seed,
        index_start=index_start, threads=threads, stop=stop, continuation=continuation,
    )
    return summarize(samples, master_seed, index_start)


def merge_estimates(parts) -> EstimateWithCI:
    """Pool estimates computed on disjoint path-index ranges of one master seed."""
    parts = sorted(parts, key=lambda e: e.index_start)
    if not parts:
        raise ConfigurationError("nothing to merge")
    if len(parts) == 1:
        return parts[0]
    if len({e.seed for e in parts}) != 1:
        raise ConfigurationError("estimates come from different master seeds")
    for a, b in zip(parts, parts[1:]):
        if b.index_start < a.index_stop:
            raise ConfigurationError(
                f"path ranges [{a.index_start}, {a.index_stop}) and "
                f"[{b.index_start}, {b.index_stop}) overlap"
            )
    n = sum(e.n_paths for e in parts)
    mean = sum(e.n_paths * e.mean for e in parts) / n
    # Chan et al. pooled sum of squared deviations
    m2 = sum(
        (e.n_paths - 1) * e.n_paths * e.stderr**2 + e.n_paths * (e.mean - mean) ** 2
        for e in parts
    )
    stderr = math.sqrt(m2 / (n - 1) / n)
    return EstimateWithCI(
        mean=mean,
        stderr=stderr,
        n_paths=n,
        ci95_low=mean - Z95 * stderr,
        ci95_high=mean + Z95 * stderr,
        seed=parts[0].seed,
        index_start=parts[0].index_start,
    )
