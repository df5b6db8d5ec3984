# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled stepping kernel: twin of kernels.purepy.

The arithmetic here mirrors purepy statement by statement (same operation
order, same double-precision primitives, custom lgamma instead of libm's),
so both backends produce bit-identical trajectories. Any change must be
made in lockstep with purepy.py; the build disables FP contraction for the
same reason.
"""

from libc.math cimport exp, log, log1p
from libc.stdint cimport int64_t, uint64_t

import numpy as np

from .errors import PopulationCapError

cdef double _U53 = 1.0 / 9007199254740992.0
cdef double _LANCZOS_HALF_LOG_2PI = 0.9189385332046727

cdef uint64_t _GAMMA = (<uint64_t>0x9E3779B9 << 32) | <uint64_t>0x7F4A7C15
cdef uint64_t _MIX1 = (<uint64_t>0xBF58476D << 32) | <uint64_t>0x1CE4E5B9
cdef uint64_t _MIX2 = (<uint64_t>0x94D049BB << 32) | <uint64_t>0x133111EB
cdef uint64_t _C_REP = (<uint64_t>0xA24BAED4 << 32) | <uint64_t>0x963EE407
cdef uint64_t _C_GEN = (<uint64_t>0x9FB21C65 << 32) | <uint64_t>0x1E98DF25
cdef uint64_t _C_SITE = (<uint64_t>0xD6E8FEB8 << 32) | <uint64_t>0x6659FD93

cdef double[9] _LG
_LG[0] = 0.99999999999980993
_LG[1] = 676.5203681218851
_LG[2] = -1259.1392167224028
_LG[3] = 771.32342877765313
_LG[4] = -176.61502916214059
_LG[5] = 12.507343278686905
_LG[6] = -0.13857109526572012
_LG[7] = 9.9843695780195716e-6
_LG[8] = 1.5056327351493116e-7


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * _MIX1
    z = (z ^ (z >> 27)) * _MIX2
    return z ^ (z >> 31)


cdef inline uint64_t _stream_state_c(uint64_t master, uint64_t replicate,
                                     uint64_t generation, uint64_t site) nogil:
    cdef uint64_t z = master
    z = _mix(z ^ (_C_REP * (replicate + 1)))
    z = _mix(z ^ (_C_GEN * (generation + 1)))
    z = _mix(z ^ (_C_SITE * (site + 1)))
    return z


cdef inline double _next_u(uint64_t *state) nogil:
    state[0] = state[0] + _GAMMA
    return <double>(_mix(state[0]) >> 11) * _U53


cdef inline double _lgamma_c(double x) nogil:
    cdef double a, t
    cdef int i
    x = x - 1.0
    a = _LG[0]
    t = x + 7.5
    for i in range(1, 9):
        a = a + _LG[i] / (x + i)
    return _LANCZOS_HALF_LOG_2PI + (x + 0.5) * log(t) - t + log(a)


cdef inline int64_t _binom_c(uint64_t *state, int64_t n, double p) nogil:
    cdef double u, nf, lp, l1p, mf, lf, f, cum, ratio, inv_ratio, fr, fl
    cdef int64_t m, hi, lo
    cdef bint moved
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    u = _next_u(state)
    nf = <double>n
    m = <int64_t>((nf + 1.0) * p)
    if m > n:
        m = n
    lp = log(p)
    l1p = log1p(-p)
    mf = <double>m
    lf = _lgamma_c(nf + 1.0) - _lgamma_c(mf + 1.0) - _lgamma_c(nf - mf + 1.0) + mf * lp + (nf - mf) * l1p
    f = exp(lf)
    cum = f
    if u < cum:
        return m
    ratio = p / (1.0 - p)
    inv_ratio = (1.0 - p) / p
    fr = f
    fl = f
    hi = m
    lo = m
    while True:
        moved = False
        if hi < n:
            fr = fr * ((nf - hi) / (hi + 1.0)) * ratio
            hi += 1
            cum += fr
            if u < cum:
                return hi
            moved = True
        if lo > 0:
            fl = fl * (lo / (nf - lo + 1.0)) * inv_ratio
            lo -= 1
            cum += fl
            if u < cum:
                return lo
            moved = True
        if not moved:
            return m


cdef int64_t _step_site_c(uint64_t *state, int64_t count,
                          const int64_t *sup, const double *cond, const double *cdf,
                          int64_t lo, int64_t hi, int64_t cap, int *err) nogil:
    cdef int64_t size = hi - lo
    cdef int64_t j, total, rem, m, i
    cdef double u
    if count <= 0:
        return 0
    if size == 1:
        j = sup[lo]
        if j > 0:
            if count > cap // j:
                err[0] = 1
                return 0
            return j * count
        return 0
    if count == 1:
        u = _next_u(state)
        i = lo
        while i < hi - 1 and u >= cdf[i]:
            i += 1
        return sup[i]
    total = 0
    rem = count
    for i in range(lo, hi - 1):
        if rem == 0:
            break
        m = _binom_c(state, rem, cond[i])
        if m:
            j = sup[i]
            if j:
                if m > (cap - total) // j:
                    err[0] = 1
                    return 0
                total += j * m
            rem -= m
    if rem:
        j = sup[hi - 1]
        if j:
            if rem > (cap - total) // j:
                err[0] = 1
                return 0
            total += j * rem
    return total


def stream_state(master, replicate, generation, site):
    """Root state of the stream owning every draw of one site update."""
    return _stream_state_c(<uint64_t>master, <uint64_t>replicate,
                           <uint64_t>generation, <uint64_t>site)


def next_uniform(state):
    cdef uint64_t s = <uint64_t>state
    cdef double u = _next_u(&s)
    return u, s


def step_site_once(count, support, cond, cdf, master, replicate, generation, site, cap):
    """One site update drawn from its own counter-based stream."""
    cdef int64_t[::1] sup = np.ascontiguousarray(support, dtype=np.int64)
    cdef double[::1] cnd = np.ascontiguousarray(cond, dtype=np.float64)
    cdef double[::1] cdf_ = np.ascontiguousarray(cdf, dtype=np.float64)
    cdef uint64_t state = _stream_state_c(<uint64_t>master, <uint64_t>replicate,
                                          <uint64_t>generation, <uint64_t>site)
    cdef int err = 0
    cdef int64_t val = _step_site_c(&state, <int64_t>count, &sup[0], &cnd[0], &cdf_[0],
                                    0, sup.shape[0], <int64_t>cap, &err)
    if err:
        raise PopulationCapError(replicate, generation, site)
    return val


cdef int _run_independent_impl(int64_t[::1] init, int64_t[::1] tbl,
                               int64_t[::1] sup, double[::1] cond, double[::1] cdf,
                               int64_t[::1] off, uint64_t master, int64_t rep0,
                               int64_t n_reps, int64_t n_gens, int64_t[::1] snaps,
                               int64_t cap, int64_t[:, :, ::1] out,
                               int64_t[::1] pops, int64_t[::1] new,
                               int64_t *err_loc) nogil:
    cdef int64_t n_sites = init.shape[0]
    cdef int64_t n_snaps = snaps.shape[0]
    cdef int64_t r, rep, q, gen, m, t, val
    cdef uint64_t state
    cdef int err
    for r in range(n_reps):
        rep = rep0 + r
        for m in range(n_sites):
            pops[m] = init[m]
        q = 0
        if q < n_snaps and snaps[q] == 0:
            for m in range(n_sites):
                out[q, r, m] = pops[m]
            q += 1
        for gen in range(n_gens):
            for m in range(n_sites):
                t = tbl[m]
                state = _stream_state_c(master, <uint64_t>rep, <uint64_t>gen, <uint64_t>m)
                err = 0
                val = _step_site_c(&state, pops[m], &sup[0], &cond[0], &cdf[0],
                                   off[t], off[t + 1], cap, &err)
                if err:
                    err_loc[0] = rep
                    err_loc[1] = gen
                    err_loc[2] = m
                    return 1
                new[m] = val
            for m in range(n_sites):
                pops[m] = new[m]
            if q < n_snaps and snaps[q] == gen + 1:
                for m in range(n_sites):
                    out[q, r, m] = pops[m]
                q += 1
    return 0


def run_independent(init_counts, site_table, support_cat, cond_cat, cdf_cat, offsets,
                    master, rep0, n_reps, n_gens, snap_gens, cap):
    """Evolve independent sites for a block of replicates (see purepy twin)."""
    cdef int64_t[::1] init = np.ascontiguousarray(init_counts, dtype=np.int64)
    cdef int64_t[::1] tbl = np.ascontiguousarray(site_table, dtype=np.int64)
    cdef int64_t[::1] sup = np.ascontiguousarray(support_cat, dtype=np.int64)
    cdef double[::1] cond = np.ascontiguousarray(cond_cat, dtype=np.float64)
    cdef double[::1] cdf = np.ascontiguousarray(cdf_cat, dtype=np.float64)
    cdef int64_t[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef int64_t[::1] snaps = np.ascontiguousarray(snap_gens, dtype=np.int64)
    out_arr = np.zeros((snaps.shape[0], int(n_reps), init.shape[0]), dtype=np.int64)
    cdef int64_t[:, :, ::1] out = out_arr
    pops_arr = np.zeros(init.shape[0], dtype=np.int64)
    new_arr = np.zeros(init.shape[0], dtype=np.int64)
    cdef int64_t[::1] pops = pops_arr
    cdef int64_t[::1] new = new_arr
    cdef int64_t err_loc[3]
    cdef uint64_t master_c = <uint64_t>master
    cdef int64_t rep0_c = <int64_t>rep0
    cdef int64_t n_reps_c = <int64_t>n_reps
    cdef int64_t n_gens_c = <int64_t>n_gens
    cdef int64_t cap_c = <int64_t>cap
    cdef int status
    with nogil:
        status = _run_independent_impl(init, tbl, sup, cond, cdf, off, master_c,
                                       rep0_c, n_reps_c, n_gens_c, snaps, cap_c,
                                       out, pops, new, err_loc)
    if status:
        raise PopulationCapError(int(err_loc[0]), int(err_loc[1]), int(err_loc[2]))
    return out_arr


cdef int _run_interactive_impl(int64_t[::1] init,
                               int64_t[::1] g0s, double[::1] g0c, double[::1] g0f,
                               int64_t[::1] hs, double[::1] hc, double[::1] hf,
                               int64_t[::1] hoff, uint64_t master, int64_t rep0,
                               int64_t n_reps, int64_t n_gens, int64_t[::1] snaps,
                               int64_t cap, int64_t[:, :, ::1] out,
                               int64_t[::1] pops, int64_t[::1] new, int64_t[::1] xbar,
                               int64_t *err_loc) nogil:
    cdef int64_t n_sites = init.shape[0]
    cdef int64_t n_snaps = snaps.shape[0]
    cdef int64_t g0n = g0s.shape[0]
    cdef int64_t r, rep, q, gen, m, l, c, total, val, acc
    cdef uint64_t state
    cdef int err
    for r in range(n_reps):
        rep = rep0 + r
        for m in range(n_sites):
            pops[m] = init[m]
        q = 0
        if q < n_snaps and snaps[q] == 0:
            for m in range(n_sites):
                out[q, r, m] = pops[m]
            q += 1
        for gen in range(n_gens):
            acc = 0
            for m in range(n_sites):
                if pops[m] > cap - acc:
                    err_loc[0] = rep
                    err_loc[1] = gen
                    err_loc[2] = m
                    return 2
                acc += pops[m]
                xbar[m] = acc
            for m in range(n_sites):
                state = _stream_state_c(master, <uint64_t>rep, <uint64_t>gen, <uint64_t>m)
                c = pops[m]
                err = 0
                total = _step_site_c(&state, c, &g0s[0], &g0c[0], &g0f[0],
                                     0, g0n, cap, &err)
                if err:
                    err_loc[0] = rep
                    err_loc[1] = gen
                    err_loc[2] = m
                    return 1
                for l in range(1, m + 1):
                    val = _step_site_c(&state, c, &hs[0], &hc[0], &hf[0],
                                       hoff[l], hoff[l + 1], cap, &err)
                    if err or val > cap - total:
                        err_loc[0] = rep
                        err_loc[1] = gen
                        err_loc[2] = m
                        return 1
                    total += val
                if m >= 1:
                    val = _step_site_c(&state, xbar[m - 1], &hs[0], &hc[0], &hf[0],
                                       hoff[m], hoff[m + 1], cap, &err)
                    if err or val > cap - total:
                        err_loc[0] = rep
                        err_loc[1] = gen
                        err_loc[2] = m
                        return 1
                    total += val
                new[m] = total
            for m in range(n_sites):
                pops[m] = new[m]
            if q < n_snaps and snaps[q] == gen + 1:
                for m in range(n_sites):
                    out[q, r, m] = pops[m]
                q += 1
    return 0


def run_interactive(init_counts, g0_support, g0_cond, g0_cdf,
                    h_support_cat, h_cond_cat, h_cdf_cat, h_offsets,
                    master, rep0, n_reps, n_gens, snap_gens, cap):
    """Evolve the interacting flow for a block of replicates (see purepy twin)."""
    cdef int64_t[::1] init = np.ascontiguousarray(init_counts, dtype=np.int64)
    cdef int64_t[::1] g0s = np.ascontiguousarray(g0_support, dtype=np.int64)
    cdef double[::1] g0c = np.ascontiguousarray(g0_cond, dtype=np.float64)
    cdef double[::1] g0f = np.ascontiguousarray(g0_cdf, dtype=np.float64)
    cdef int64_t[::1] hs = np.ascontiguousarray(h_support_cat, dtype=np.int64)
    cdef double[::1] hc = np.ascontiguousarray(h_cond_cat, dtype=np.float64)
    cdef double[::1] hf = np.ascontiguousarray(h_cdf_cat, dtype=np.float64)
    cdef int64_t[::1] hoff = np.ascontiguousarray(h_offsets, dtype=np.int64)
    cdef int64_t[::1] snaps = np.ascontiguousarray(snap_gens, dtype=np.int64)
    out_arr = np.zeros((snaps.shape[0], int(n_reps), init.shape[0]), dtype=np.int64)
    cdef int64_t[:, :, ::1] out = out_arr
    pops_arr = np.zeros(init.shape[0], dtype=np.int64)
    new_arr = np.zeros(init.shape[0], dtype=np.int64)
    xbar_arr = np.zeros(init.shape[0], dtype=np.int64)
    cdef int64_t[::1] pops = pops_arr
    cdef int64_t[::1] new = new_arr
    cdef int64_t[::1] xbar = xbar_arr
    cdef int64_t err_loc[3]
    cdef uint64_t master_c = <uint64_t>master
    cdef int64_t rep0_c = <int64_t>rep0
    cdef int64_t n_reps_c = <int64_t>n_reps
    cdef int64_t n_gens_c = <int64_t>n_gens
    cdef int64_t cap_c = <int64_t>cap
    cdef int status
    with nogil:
        status = _run_interactive_impl(init, g0s, g0c, g0f, hs, hc, hf, hoff,
                                       master_c, rep0_c, n_reps_c, n_gens_c, snaps,
                                       cap_c, out, pops, new, xbar, err_loc)
    if status == 2:
        raise PopulationCapError(int(err_loc[0]), int(err_loc[1]), int(err_loc[2]),
                                 "cumulative population")
    if status:
        raise PopulationCapError(int(err_loc[0]), int(err_loc[1]), int(err_loc[2]))
    return out_arr
