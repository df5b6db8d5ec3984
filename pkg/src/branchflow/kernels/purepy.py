"""Pure-Python stepping kernel: the reference twin of kernels._core.

Every arithmetic statement here is mirrored in _core.pyx with the same
operation order and the same double-precision primitives, so the two
backends produce bit-identical trajectories. Any change must be made in
lockstep with _core.pyx (the equivalence suite enforces this).

Streams are counter-based: the state for one site update is derived by
hashing (master, replicate, generation, site), so results do not depend on
scheduling or worker count.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import PopulationCapError

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_C_REP = 0xA24BAED4963EE407
_C_GEN = 0x9FB21C651E98DF25
_C_SITE = 0xD6E8FEB86659FD93
_U53 = 1.0 / 9007199254740992.0  # 2^-53

_LANCZOS_HALF_LOG_2PI = 0.9189385332046727
_LG = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def stream_state(master: int, replicate: int, generation: int, site: int) -> int:
    """Root state of the stream owning every draw of one site update."""
    z = master & _MASK
    z = _mix(z ^ ((_C_REP * ((replicate + 1) & _MASK)) & _MASK))
    z = _mix(z ^ ((_C_GEN * ((generation + 1) & _MASK)) & _MASK))
    z = _mix(z ^ ((_C_SITE * ((site + 1) & _MASK)) & _MASK))
    return z


def next_uniform(state: int) -> tuple[float, int]:
    state = (state + _GAMMA) & _MASK
    return (_mix(state) >> 11) * _U53, state


def _lgamma(x: float) -> float:
    # Lanczos g=7 n=9; only simple double ops so the compiled twin matches
    # bit for bit (libm lgamma implementations vary across platforms).
    x = x - 1.0
    a = _LG[0]
    t = x + 7.5
    for i in range(1, 9):
        a = a + _LG[i] / (x + i)
    return _LANCZOS_HALF_LOG_2PI + (x + 0.5) * math.log(t) - t + math.log(a)


def _binom(state: int, n: int, p: float) -> tuple[int, int]:
    """Exact binomial draw by single-uniform inversion, expanding outward
    from the mode; O(sqrt(n*p*(1-p))) expected work, one random word."""
    if n <= 0 or p <= 0.0:
        return 0, state
    if p >= 1.0:
        return n, state
    u, state = next_uniform(state)
    nf = float(n)
    m = int((nf + 1.0) * p)
    if m > n:
        m = n
    lp = math.log(p)
    l1p = math.log1p(-p)
    mf = float(m)
    lf = _lgamma(nf + 1.0) - _lgamma(mf + 1.0) - _lgamma(nf - mf + 1.0) + mf * lp + (nf - mf) * l1p
    f = math.exp(lf)
    cum = f
    if u < cum:
        return m, state
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
                return hi, state
            moved = True
        if lo > 0:
            fl = fl * (lo / (nf - lo + 1.0)) * inv_ratio
            lo -= 1
            cum += fl
            if u < cum:
                return lo, state
            moved = True
        if not moved:
            # residual rounding mass; fall back to the mode
            return m, state


def _step_site(count, sup, cond, cdf, lo, hi, state, cap, rep, gen, site):
    """Sum of `count` offspring draws from the table slice [lo, hi) via the
    sequential binomial split: O(support), never O(count)."""
    size = hi - lo
    if count <= 0:
        return 0, state
    if size == 1:
        j = sup[lo]
        if j > 0:
            if count > cap // j:
                raise PopulationCapError(rep, gen, site)
            return j * count, state
        return 0, state
    if count == 1:
        u, state = next_uniform(state)
        i = lo
        while i < hi - 1 and u >= cdf[i]:
            i += 1
        return sup[i], state
    total = 0
    rem = count
    for i in range(lo, hi - 1):
        if rem == 0:
            break
        m, state = _binom(state, rem, cond[i])
        if m:
            j = sup[i]
            if j:
                if m > (cap - total) // j:
                    raise PopulationCapError(rep, gen, site)
                total += j * m
            rem -= m
    if rem:
        j = sup[hi - 1]
        if j:
            if rem > (cap - total) // j:
                raise PopulationCapError(rep, gen, site)
            total += j * rem
    return total, state


def step_site_once(count, support, cond, cdf, master, replicate, generation, site, cap):
    """One site update drawn from its own counter-based stream."""
    sup = [int(v) for v in support]
    cnd = [float(v) for v in cond]
    cdf_ = [float(v) for v in cdf]
    state = stream_state(master, replicate, generation, site)
    val, _ = _step_site(int(count), sup, cnd, cdf_, 0, len(sup), state, int(cap),
                        replicate, generation, site)
    return val


def run_independent(init_counts, site_table, support_cat, cond_cat, cdf_cat, offsets,
                    master, rep0, n_reps, n_gens, snap_gens, cap):
    """Evolve independent sites for a block of replicates.

    Returns an int64 array of shape (len(snap_gens), n_reps, n_sites) holding
    the populations at the requested generations (0 = initial state).
    """
    init = [int(v) for v in init_counts]
    tbl = [int(v) for v in site_table]
    sup = [int(v) for v in support_cat]
    cond = [float(v) for v in cond_cat]
    cdf = [float(v) for v in cdf_cat]
    off = [int(v) for v in offsets]
    snaps = [int(v) for v in snap_gens]
    cap = int(cap)
    n_sites = len(init)
    out = np.zeros((len(snaps), n_reps, n_sites), dtype=np.int64)
    for r in range(n_reps):
        rep = rep0 + r
        pops = init[:]
        q = 0
        if q < len(snaps) and snaps[q] == 0:
            out[q, r, :] = pops
            q += 1
        for gen in range(n_gens):
            new = [0] * n_sites
            for m in range(n_sites):
                t = tbl[m]
                state = stream_state(master, rep, gen, m)
                val, state = _step_site(pops[m], sup, cond, cdf, off[t], off[t + 1],
                                        state, cap, rep, gen, m)
                new[m] = val
            pops = new
            if q < len(snaps) and snaps[q] == gen + 1:
                out[q, r, :] = pops
                q += 1
    return out


def run_interactive(init_counts, g0_support, g0_cond, g0_cdf,
                    h_support_cat, h_cond_cat, h_cdf_cat, h_offsets,
                    master, rep0, n_reps, n_gens, snap_gens, cap):
    """Evolve the interacting flow for a block of replicates.

    Site m reproduces through the composite of the base law and the slices
    h_1..h_m (one draw per factor per individual) and receives immigration
    driven by the frozen cumulative count below m. h_offsets[m]:h_offsets[m+1]
    is site m's immigration table; site 0 never immigrates.
    """
    init = [int(v) for v in init_counts]
    g0s = [int(v) for v in g0_support]
    g0c = [float(v) for v in g0_cond]
    g0f = [float(v) for v in g0_cdf]
    hs = [int(v) for v in h_support_cat]
    hc = [float(v) for v in h_cond_cat]
    hf = [float(v) for v in h_cdf_cat]
    hoff = [int(v) for v in h_offsets]
    snaps = [int(v) for v in snap_gens]
    cap = int(cap)
    n_sites = len(init)
    out = np.zeros((len(snaps), n_reps, n_sites), dtype=np.int64)
    for r in range(n_reps):
        rep = rep0 + r
        pops = init[:]
        q = 0
        if q < len(snaps) and snaps[q] == 0:
            out[q, r, :] = pops
            q += 1
        for gen in range(n_gens):
            # cumulative counts of the frozen generation, before any update
            xbar = [0] * n_sites
            acc = 0
            for m in range(n_sites):
                if pops[m] > cap - acc:
                    raise PopulationCapError(rep, gen, m, "cumulative population")
                acc += pops[m]
                xbar[m] = acc
            new = [0] * n_sites
            for m in range(n_sites):
                state = stream_state(master, rep, gen, m)
                c = pops[m]
                total, state = _step_site(c, g0s, g0c, g0f, 0, len(g0s),
                                          state, cap, rep, gen, m)
                for l in range(1, m + 1):
                    val, state = _step_site(c, hs, hc, hf, hoff[l], hoff[l + 1],
                                            state, cap, rep, gen, m)
                    if val > cap - total:
                        raise PopulationCapError(rep, gen, m)
                    total += val
                if m >= 1:
                    val, state = _step_site(xbar[m - 1], hs, hc, hf, hoff[m], hoff[m + 1],
                                            state, cap, rep, gen, m)
                    if val > cap - total:
                        raise PopulationCapError(rep, gen, m)
                    total += val
                new[m] = total
            pops = new
            if q < len(snaps) and snaps[q] == gen + 1:
                out[q, r, :] = pops
                q += 1
    return out
