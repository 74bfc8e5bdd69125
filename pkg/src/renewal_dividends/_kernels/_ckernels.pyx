# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: explicit VI step, claim convolution and batch path simulation.

The path simulation mirrors ``paths.run_path`` operation by operation so the
two backends agree to the last bit on identical uniforms.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, INFINITY, NAN

cnp.import_array()

name = "compiled"

cdef double PIN_EPS = 1e-12
cdef double BISECTION_TOL = 1e-10

cdef struct Hazard:
    int kind
    double par
    const double* ws
    const double* rates
    const double* cum
    int n
    double horizon

cdef struct Claims:
    int kind
    double par
    const double* pts
    const double* qs
    int n

cdef struct Strat:
    int kind
    const double* kt
    const double* kb
    int n
    double level
    double rate
    int pays


# ---------------------------------------------------------------------------
# value-iteration step


def vi_step(const double[:, ::1] Vn, const double[::1] lam, const double[::1] I,
            double p, double c, double dt, double dx, bint project=True):
    cdef Py_ssize_t m = Vn.shape[0] - 1
    cdef Py_ssize_t nx = Vn.shape[1]
    out_arr = np.empty((m, nx))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t k, j
    cdef double dp, r, lk, prev, v
    with nogil:
        for k in range(m):
            lk = lam[k]
            for j in range(nx):
                r = Vn[k + 1, j]
                if j + 1 < nx:
                    dp = (Vn[k + 1, j + 1] - r) / dx
                else:
                    dp = ((r + dx) - r) / dx
                out[k, j] = r + dt * (p * dp - (c + lk) * r + lk * I[j])
            if project:
                prev = out[k, 0]
                for j in range(1, nx):
                    v = prev + dx
                    if out[k, j] < v:
                        out[k, j] = v
                    prev = out[k, j]
    return out_arr


def claim_integral(const double[::1] Vf, const double[::1] wfull, Py_ssize_t q,
                   const double[::1] corr):
    cdef Py_ssize_t nx = corr.shape[0]
    out_arr = np.empty(nx)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t j, m, top
    cdef double acc
    with nogil:
        for j in range(nx):
            top = j * q
            acc = 0.0
            for m in range(top):
                acc += Vf[top - m] * wfull[m]
            out[j] = acc + Vf[0] * corr[j]
    return out_arr


# ---------------------------------------------------------------------------
# hazard, claims, strategy primitives


cdef inline double hz_rate(const Hazard* h, double w) noexcept nogil:
    cdef int i
    if h.kind == 0:
        return h.par
    if h.kind == 2:
        if w > h.horizon:
            w = h.horizon
        return h.par * h.par * w / (1.0 + h.par * w)
    if w >= h.ws[h.n - 1]:
        return h.rates[h.n - 1]
    i = pwl_segment(h, w)
    return h.rates[i] + (h.rates[i + 1] - h.rates[i]) * (w - h.ws[i]) / (h.ws[i + 1] - h.ws[i])


cdef inline int pwl_segment(const Hazard* h, double u) noexcept nogil:
    # bisect_right(ws, u) - 1 clamped to [0, n - 2]
    cdef int lo = 0, hi = h.n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if u < h.ws[mid]:
            hi = mid
        else:
            lo = mid + 1
    lo -= 1
    if lo < 0:
        lo = 0
    if lo > h.n - 2:
        lo = h.n - 2
    return lo


cdef inline double erlang_cum_inside(double beta, double u) noexcept nogil:
    cdef double bu = beta * u
    return bu - log1p(bu)


cdef inline double hz_cum(const Hazard* h, double u) noexcept nogil:
    cdef int i
    if h.kind == 0:
        return h.par * u
    if h.kind == 2:
        if u > h.horizon:
            return erlang_cum_inside(h.par, h.horizon) + hz_rate(h, h.horizon) * (u - h.horizon)
        return erlang_cum_inside(h.par, u)
    if u >= h.ws[h.n - 1]:
        return h.cum[h.n - 1] + h.rates[h.n - 1] * (u - h.ws[h.n - 1])
    i = pwl_segment(h, u)
    return h.cum[i] + 0.5 * (h.rates[i] + hz_rate(h, u)) * (u - h.ws[i])


cdef inline double hz_integrated(const Hazard* h, double w, double t) noexcept nogil:
    if h.kind == 0:
        return h.par * t
    if t == 0.0:
        return 0.0
    return hz_cum(h, w + t) - hz_cum(h, w)


cdef double hz_wait(const Hazard* h, double w, double u01, double cap) noexcept nogil:
    cdef double target = -log1p(-u01)
    cdef double limit, lo, hi, mid
    if target == 0.0:
        return 0.0
    if h.kind == 0:
        if h.par == 0.0:
            return INFINITY
        return target / h.par
    limit = cap - w
    if limit <= 0.0 or hz_integrated(h, w, limit) < target:
        return INFINITY
    lo = 0.0
    hi = limit
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if hz_integrated(h, w, mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


cdef inline double claim_sample(const Claims* g, double u01) noexcept nogil:
    cdef int i
    if g.kind == 0:
        return -g.par * log1p(-u01)
    if g.kind == 1:
        return g.par
    # first index with qs[i] >= u01
    i = 0
    while i < g.n and g.qs[i] < u01:
        i += 1
    if i == 0:
        return g.pts[0]
    return g.pts[i - 1] + (u01 - g.qs[i - 1]) / (g.qs[i] - g.qs[i - 1]) * (g.pts[i] - g.pts[i - 1])


cdef inline double interp_const(const double* ts, const double* vs, int n, double t) noexcept nogil:
    cdef int lo = 0, hi = n, mid
    if t <= ts[0]:
        return vs[0]
    if t >= ts[n - 1]:
        return vs[n - 1]
    while lo < hi:
        mid = (lo + hi) // 2
        if t < ts[mid]:
            hi = mid
        else:
            lo = mid + 1
    lo -= 1
    return vs[lo] + (vs[lo + 1] - vs[lo]) * (t - ts[lo]) / (ts[lo + 1] - ts[lo])


cdef inline int bisect_right(const double* ts, int n, double t) noexcept nogil:
    cdef int lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if t < ts[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


cdef inline double annuity(double rate, double a, double b, double s, double c) noexcept nogil:
    if rate == 0.0 or b == a:
        return 0.0
    if c == 0.0:
        return rate * (b - a)
    return rate * (exp(-c * (a - s)) - exp(-c * (b - s))) / c


cdef double flow(const Strat* st, double t, double t1, double* x, double p, double c,
                 double s) noexcept nogil:
    """Advance the surplus from t to t1; return discounted dividends paid."""
    cdef double disc = 0.0
    cdef double te, b0, b1, slope, r, gap, th
    cdef int i
    cdef double xx = x[0]
    if st.kind == 1:
        while t < t1:
            i = bisect_right(st.kt, st.n, t) if st.n > 0 else 0
            te = st.kt[i] if i < st.n else INFINITY
            if te > t1:
                te = t1
            b0 = interp_const(st.kt, st.kb, st.n, t)
            b1 = interp_const(st.kt, st.kb, st.n, te)
            slope = (b1 - b0) / (te - t)
            if xx >= b0 - PIN_EPS and slope <= p:
                r = p - slope
                disc += annuity(r, t, te, s, c)
                xx = b1
                t = te
                continue
            gap = b0 - xx
            if gap > 0 and p > slope:
                th = t + gap / (p - slope)
                if th < te:
                    xx = interp_const(st.kt, st.kb, st.n, th)
                    t = th
                    continue
            xx += p * (te - t)
            t = te
    elif st.kind == 2:
        while t < t1:
            if xx > st.level + PIN_EPS or (xx >= st.level - PIN_EPS and st.rate <= p):
                if st.rate <= p:
                    disc += annuity(st.rate, t, t1, s, c)
                    xx += (p - st.rate) * (t1 - t)
                    t = t1
                else:
                    th = t + (xx - st.level) / (st.rate - p)
                    te = th if th < t1 else t1
                    disc += annuity(st.rate, t, te, s, c)
                    if th < t1:
                        xx = st.level
                    else:
                        xx -= (st.rate - p) * (te - t)
                    t = te
            elif xx >= st.level - PIN_EPS:
                xx = st.level
                disc += annuity(p, t, t1, s, c)
                t = t1
            else:
                th = t + (st.level - xx) / p
                if th >= t1:
                    xx += p * (t1 - t)
                    t = t1
                else:
                    xx = st.level
                    t = th
    else:
        xx += p * (t1 - t)
    x[0] = xx
    return disc


cdef inline double epoch_lump(const Strat* st, double t, double x) noexcept nogil:
    cdef double b
    if st.kind == 1:
        b = interp_const(st.kt, st.kb, st.n, t)
        return x - b if x > b else 0.0
    return 0.0


cdef int run_one(const double* U, Py_ssize_t K, const Hazard* h, const Claims* g,
                 const Strat* st, double p, double c, double T, double s, double x,
                 double w, double stop, double* out) noexcept nogil:
    """Returns 0 on success, -1 when the uniforms run out."""
    cdef Py_ssize_t idx = 0
    cdef double t = s
    cdef double disc = 0.0
    cdef double lump, tau, t_next, t_end, u
    cdef bint done
    lump = epoch_lump(st, t, x)
    if lump > 0.0:
        x -= lump
        disc += lump * exp(-c * (t - s))
    while True:
        if idx >= K:
            return -1
        tau = hz_wait(h, w, U[idx], T)
        idx += 1
        t_next = t + tau
        done = t_next >= stop
        t_end = stop if done else t_next
        disc += flow(st, t, t_end, &x, p, c, s)
        w += t_end - t
        t = t_end
        if done:
            break
        if idx >= K:
            return -1
        u = claim_sample(g, U[idx])
        idx += 1
        x -= u
        w = 0.0
        if x < 0.0:
            out[0] = disc
            out[1] = x
            out[2] = w
            out[3] = t
            return 0
        lump = epoch_lump(st, t, x)
        if lump > 0.0:
            x -= lump
            disc += lump * exp(-c * (t - s))
    out[1] = x
    if stop >= T and st.pays:
        disc += x * exp(-c * (t - s))
    out[0] = disc
    out[2] = w
    out[3] = NAN
    return 0


def simulate_batch(const double[:, ::1] U, sim, double s, double x, double w, double stop):
    cdef Py_ssize_t n = U.shape[0]
    cdef Py_ssize_t K = U.shape[1]
    cdef Hazard h
    cdef Claims g
    cdef Strat st
    cdef const double[::1] hws = sim.hz_ws
    cdef const double[::1] hrates = sim.hz_rates
    cdef const double[::1] hcum = sim.hz_cum
    cdef const double[::1] gpts = sim.cl_pts
    cdef const double[::1] gqs = sim.cl_qs
    cdef const double[::1] skt = sim.st_kt
    cdef const double[::1] skb = sim.st_kb
    h.kind = sim.hz_kind
    h.par = sim.hz_par
    h.n = hws.shape[0]
    h.ws = &hws[0] if h.n > 0 else NULL
    h.rates = &hrates[0] if h.n > 0 else NULL
    h.cum = &hcum[0] if h.n > 0 else NULL
    h.horizon = sim.hz_horizon
    g.kind = sim.cl_kind
    g.par = sim.cl_par
    g.n = gpts.shape[0]
    g.pts = &gpts[0] if g.n > 0 else NULL
    g.qs = &gqs[0] if g.n > 0 else NULL
    st.kind = sim.st_kind
    st.n = skt.shape[0]
    st.kt = &skt[0] if st.n > 0 else NULL
    st.kb = &skb[0] if st.n > 0 else NULL
    st.level = sim.st_level
    st.rate = sim.st_rate
    st.pays = 1 if sim.st_pays else 0
    cdef double p = sim.p, c = sim.c, T = sim.T

    disc_arr = np.empty(n)
    x_arr = np.empty(n)
    w_arr = np.empty(n)
    ruin_arr = np.empty(n)
    status_arr = np.zeros(n, dtype=np.int32)
    cdef double[::1] disc = disc_arr
    cdef double[::1] xo = x_arr
    cdef double[::1] wo = w_arr
    cdef double[::1] ro = ruin_arr
    cdef int[::1] status = status_arr
    cdef double buf[4]
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            status[i] = run_one(&U[i, 0], K, &h, &g, &st, p, c, T, s, x, w, stop, buf)
            disc[i] = buf[0]
            xo[i] = buf[1]
            wo[i] = buf[2]
            ro[i] = buf[3]
    return disc_arr, x_arr, w_arr, ruin_arr, status_arr
