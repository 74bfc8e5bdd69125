"""Pure-Python/numpy versions of the hot loops.

Semantics match ``_ckernels.pyx`` exactly; only summation order in the claim
convolution and the projection sweep may differ in the last bits.
"""

from __future__ import annotations

import numpy as np

from ..paths import run_path

name = "python"


def vi_step(Vn, lam, I, p, c, dt, dx, project=True):
    """One explicit backward step from slice ``s + dt`` to slice ``s``.

    ``Vn`` has one more w-row than the result: row ``k + 1`` of ``Vn`` is the
    upstream point along the characteristic of row ``k``.
    """
    R = Vn[1:]
    padded = np.concatenate([R, R[:, -1:] + dx], axis=1)
    dp = (padded[:, 1:] - padded[:, :-1]) / dx
    out = R + dt * (p * dp - (c + lam)[:, None] * R + lam[:, None] * I[None, :])
    if project:
        # V_j = max(Vc_j, V_{j-1} + dx) is a running max of V - x
        x = np.arange(R.shape[1]) * dx
        out = np.maximum.accumulate(out - x, axis=1) + x
    return out


def claim_integral(Vf, wfull, q, corr):
    """sum_m V(x_j - u_m) dG_m over claims u_m <= x_j, for every x-node j.

    ``Vf`` is the w = 0 row sampled on the claim mesh (step ``dx / q``),
    ``wfull[m]`` the CDF increment of cell ``m`` and ``corr[j]`` the mass of the
    half cell ending exactly at ``x_j``.
    """
    conv = np.convolve(Vf, wfull)[: Vf.shape[0]]
    return conv[::q] - Vf[0] * wfull[::q] + Vf[0] * corr


def simulate_batch(U, sim, s, x, w, stop):
    n, _ = U.shape
    disc = np.empty(n)
    x_end = np.empty(n)
    w_end = np.empty(n)
    ruin = np.empty(n)
    status = np.zeros(n, dtype=np.int32)
    for i in range(n):
        draw = iter(U[i].tolist()).__next__
        try:
            disc[i], x_end[i], w_end[i], ruin[i] = run_path(
                sim.p, sim.c, sim.T, sim.hazard, sim.claims, sim.sdata,
                s, x, w, stop, draw,
            )
        except StopIteration:
            status[i] = -1
    return disc, x_end, w_end, ruin, status
