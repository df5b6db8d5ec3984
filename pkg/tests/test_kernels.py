"""Backend equivalence and law checks for the stepping kernels.

The compiled extension and the pure-Python fallback implement the same
algorithm with the same arithmetic; everything they emit must match bit
for bit.
"""

import math

import numpy as np
import pytest

from branchflow.genfun import CoeffPgf, make_sampler
from branchflow.kernels import (
    HAVE_COMPILED,
    PopulationCapError,
    get_backend,
    run_independent,
    run_interactive,
    step_site_once,
    stream_state,
)
from branchflow.kernels import purepy

needs_compiled = pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernel not built")

BINARY_TABLE = make_sampler(CoeffPgf([0.5, 0.0, 0.5]))


def _random_table(rng):
    size = int(rng.integers(1, 6))
    probs = rng.dirichlet(np.ones(size))
    return make_sampler(CoeffPgf(probs))


@needs_compiled
class TestBackendEquivalence:
    def test_stream_states_match(self):
        core = get_backend("compiled")
        rng = np.random.default_rng(1)
        for _ in range(200):
            args = tuple(int(v) for v in rng.integers(0, 2**62, size=4))
            assert purepy.stream_state(*args) == core.stream_state(*args)

    def test_uniform_sequences_match(self):
        core = get_backend("compiled")
        state_p = state_c = stream_state(99, 1, 2, 3)
        for _ in range(100):
            up, state_p = purepy.next_uniform(state_p)
            uc, state_c = core.next_uniform(state_c)
            assert up == uc and state_p == state_c
            assert 0.0 <= up < 1.0

    def test_step_site_fuzz(self):
        rng = np.random.default_rng(2)
        for trial in range(400):
            table = _random_table(rng)
            count = int(rng.integers(0, 10 ** int(rng.integers(0, 7))))
            args = (count, table.support, table.cond, table.cdf,
                    int(rng.integers(0, 2**62)), trial, int(rng.integers(0, 50)),
                    int(rng.integers(0, 200)), 2**62 - 1)
            assert step_site_once(*args, backend="python") == step_site_once(*args, backend="compiled")

    def test_whole_simulations_match(self):
        init = np.array([3, 0, 1, 5, 2], dtype=np.int64)
        tables = [BINARY_TABLE, make_sampler(CoeffPgf([0.25, 0.5, 0.25]))]
        support = np.concatenate([t.support for t in tables])
        cond = np.concatenate([t.cond for t in tables])
        cdf = np.concatenate([t.cdf for t in tables])
        offsets = np.array([0, len(tables[0].support), len(support)], dtype=np.int64)
        site_table = np.array([0, 1, 0, 1, 0], dtype=np.int64)
        args = (init, site_table, support, cond, cdf, offsets, 2024, 0, 30, 25,
                np.array([0, 10, 25], dtype=np.int64), 2**62 - 1)
        a = run_independent(*args, backend="python")
        b = run_independent(*args, backend="compiled")
        assert np.array_equal(a, b)

    def test_interactive_simulations_match(self):
        init = np.array([2, 1, 0, 4], dtype=np.int64)
        g0 = BINARY_TABLE
        h = make_sampler(CoeffPgf([0.9, 0.1]))
        placeholder = make_sampler(CoeffPgf([1.0]))
        per_site = [placeholder, h, h, h]
        support = np.concatenate([t.support for t in per_site])
        cond = np.concatenate([t.cond for t in per_site])
        cdf = np.concatenate([t.cdf for t in per_site])
        offsets = np.zeros(5, dtype=np.int64)
        np.cumsum([t.support.size for t in per_site], out=offsets[1:])
        args = (init, g0.support, g0.cond, g0.cdf, support, cond, cdf, offsets,
                77, 0, 20, 15, np.array([0, 15], dtype=np.int64), 2**62 - 1)
        a = run_interactive(*args, backend="python")
        b = run_interactive(*args, backend="compiled")
        assert np.array_equal(a, b)


class TestStepSiteContract:
    def test_zero_count(self):
        assert step_site_once(0, BINARY_TABLE.support, BINARY_TABLE.cond,
                              BINARY_TABLE.cdf, 1, 0, 0, 0, 2**62 - 1) == 0

    def test_deterministic_doubling(self):
        table = make_sampler(CoeffPgf([0.0, 0.0, 1.0]))
        assert step_site_once(7, table.support, table.cond, table.cdf,
                              1, 0, 0, 0, 2**62 - 1) == 14

    def test_large_count_moments(self):
        # mean and variance of a critical binary site step at count 10^6
        count, reps = 10**6, 1000
        vals = np.array([
            step_site_once(count, BINARY_TABLE.support, BINARY_TABLE.cond,
                           BINARY_TABLE.cdf, 5150, r, 0, 0, 2**62 - 1)
            for r in range(reps)
        ], dtype=float)
        # offspring law {0: 1/2, 2: 1/2}: mean 1, variance 1 per individual
        se_mean = math.sqrt(count / reps)
        assert abs(vals.mean() - count) <= 3 * se_mean
        var_ratio = vals.var(ddof=1) / count
        se_ratio = math.sqrt(2.0 / (reps - 1))
        assert abs(var_ratio - 1.0) <= 3 * se_ratio

    def test_population_cap_raises(self):
        table = make_sampler(CoeffPgf([0.0, 0.0, 1.0]))  # doubles every step
        with pytest.raises(PopulationCapError):
            step_site_once(2**61, table.support, table.cond, table.cdf,
                           1, 0, 0, 0, 2**62 - 1)

    def test_determinism_and_stream_separation(self):
        args = (1000, BINARY_TABLE.support, BINARY_TABLE.cond, BINARY_TABLE.cdf)
        a = step_site_once(*args, 42, 0, 0, 0, 2**62 - 1)
        b = step_site_once(*args, 42, 0, 0, 0, 2**62 - 1)
        c = step_site_once(*args, 42, 1, 0, 0, 2**62 - 1)
        d = step_site_once(*args, 43, 0, 0, 0, 2**62 - 1)
        assert a == b
        assert len({a, c, d}) > 1  # distinct streams almost surely differ


class TestBinomialLaw:
    @pytest.mark.parametrize("n,p", [(12, 0.37), (5, 0.9), (40, 0.08)])
    def test_chi_square_against_exact_pmf(self, n, p):
        stats = pytest.importorskip("scipy.stats")
        reps = 60000
        state = purepy.stream_state(314159, n, 0, 0)
        counts = np.zeros(n + 1)
        for _ in range(reps):
            v, state = purepy._binom(state, n, p)
            counts[v] += 1
        probs = np.array([math.comb(n, j) * p**j * (1 - p) ** (n - j) for j in range(n + 1)])
        keep = probs * reps >= 5
        other_obs = counts[~keep].sum()
        other_exp = probs[~keep].sum() * reps
        obs = np.append(counts[keep], other_obs)
        exp = np.append(probs[keep] * reps, other_exp)
        if other_exp == 0:
            obs, exp = obs[:-1], exp[:-1]
        chi2 = ((obs - exp) ** 2 / exp).sum()
        assert stats.chi2.sf(chi2, len(obs) - 1) > 0.01

    def test_extreme_probabilities(self):
        state = 7
        assert purepy._binom(state, 10, 0.0) == (0, state)
        assert purepy._binom(state, 10, 1.0) == (10, state)
        assert purepy._binom(state, 0, 0.5) == (0, state)

    def test_large_n_mode_expansion(self):
        state = purepy.stream_state(8, 0, 0, 0)
        total = 0
        for _ in range(200):
            v, state = purepy._binom(state, 10**9, 0.5)
            total += v
        mean = total / 200
        assert abs(mean - 5e8) < 4 * math.sqrt(0.25e9 / 200)
