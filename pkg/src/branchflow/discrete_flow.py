"""Exact simulation of the two discrete branching flows and exact
evaluation of their one-site rescaled Laplace exponents.

Populations evolve on the site lattice {0, 1, ..., floor(k*a)}; rescaled
measures put mass count/k at i/k. All randomness flows from one master
seed through counter-based streams keyed by (replicate, generation, site),
so trajectories are reproducible independently of scheduling and worker
count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .genfun import Pgf, SamplingTable, iterate, make_sampler
from .measures import StepMeasure

__all__ = [
    "DEFAULT_CAP",
    "FlowState",
    "FlowTrajectory",
    "DegenerateRegimeError",
    "step_site",
    "simulate_independent",
    "simulate_interactive",
    "run_independent_batch",
    "run_interactive_batch",
    "extract_measure",
    "discrete_cumulant",
    "export_trajectory_csv",
]

DEFAULT_CAP = 2**62 - 1


class DegenerateRegimeError(RuntimeError):
    """The iterated pgf hit 0, outside the model's validity regime."""


@dataclass(frozen=True)
class FlowState:
    """Per-site populations of one generation."""

    k: int
    gamma_k: float
    generation: int
    counts: np.ndarray

    def __post_init__(self):
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if np.any(counts < 0):
            raise ValueError("populations must be nonnegative")
        object.__setattr__(self, "counts", counts)

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.counts)


@dataclass(frozen=True)
class FlowTrajectory:
    """Snapshots of one replicate at the requested generations."""

    k: int
    gamma_k: float
    a: float
    model: str
    master_seed: int
    replicate: int
    snapshots: dict

    @property
    def generations(self) -> list[int]:
        return sorted(self.snapshots)

    def state_at(self, generation: int) -> FlowState:
        if generation not in self.snapshots:
            raise KeyError(f"generation {generation} was not recorded")
        return FlowState(self.k, self.gamma_k, generation, self.snapshots[generation])


def _catalog(tables: list[SamplingTable]):
    """Concatenate sampling tables into the flat layout the kernels take."""
    support = np.concatenate([t.support for t in tables])
    cond = np.concatenate([t.cond for t in tables])
    cdf = np.concatenate([t.cdf for t in tables])
    offsets = np.zeros(len(tables) + 1, dtype=np.int64)
    np.cumsum([t.support.size for t in tables], out=offsets[1:])
    return support, cond, cdf, offsets


def _site_tables(pgfs, delta_tail: float):
    """Sampler per distinct pgf plus the site -> table index map."""
    tables: list[SamplingTable] = []
    index: dict[int, int] = {}
    site_table = np.zeros(len(pgfs), dtype=np.int64)
    for i, g in enumerate(pgfs):
        key = id(g)
        if key not in index:
            index[key] = len(tables)
            tables.append(make_sampler(g, delta_tail))
        site_table[i] = index[key]
    return tables, site_table


def _snap_array(generations, n_gens: int) -> np.ndarray:
    snaps = sorted(set(int(g) for g in generations))
    if snaps and (snaps[0] < 0 or snaps[-1] > n_gens):
        raise ValueError("snapshot generations outside the simulated range")
    return np.asarray(snaps, dtype=np.int64)


def step_site(count: int, table: SamplingTable, master: int, replicate: int,
              generation: int, site: int, cap: int = DEFAULT_CAP, backend=None) -> int:
    """Sum of `count` i.i.d. offspring draws from the table, sampled as the
    multinomial of per-count multiplicities (sequential binomial split)."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    return kernels.step_site_once(count, table.support, table.cond, table.cdf,
                                  master, replicate, generation, site, cap, backend=backend)


def run_independent_batch(init_counts, pgfs, n_gens: int, snapshot_gens, master: int,
                          replicates: int, rep0: int = 0, cap: int = DEFAULT_CAP,
                          workers: int = 1, delta_tail: float = 1e-12, backend=None) -> np.ndarray:
    """Populations of `replicates` independent-model replicates.

    Returns int64 [n_snapshots, replicates, n_sites]; replicate r uses the
    streams of global index rep0 + r, so chunking never changes results.
    """
    init = np.ascontiguousarray(init_counts, dtype=np.int64)
    if len(pgfs) != init.size:
        raise ValueError("need one pgf per site")
    tables, site_table = _site_tables(pgfs, delta_tail)
    support, cond, cdf, offsets = _catalog(tables)
    snaps = _snap_array(snapshot_gens, n_gens)

    def chunk(r0: int, n: int) -> np.ndarray:
        return kernels.run_independent(init, site_table, support, cond, cdf, offsets,
                                       master, r0, n, n_gens, snaps, cap, backend=backend)

    return _parallel_chunks(chunk, snaps.size, init.size, replicates, rep0, workers)


def run_interactive_batch(init_counts, g0_pgf, h_pgfs, n_gens: int, snapshot_gens,
                          master: int, replicates: int, rep0: int = 0,
                          cap: int = DEFAULT_CAP, workers: int = 1,
                          delta_tail: float = 1e-12, backend=None) -> np.ndarray:
    """Populations of `replicates` interacting-flow replicates.

    h_pgfs[i] is the immigration law of site i + 1; site 0 has none. The
    composite offspring law of site m (base law times the first m
    immigration factors) is sampled factor by factor.
    """
    init = np.ascontiguousarray(init_counts, dtype=np.int64)
    n_sites = init.size
    if len(h_pgfs) != max(0, n_sites - 1):
        raise ValueError("need one immigration pgf per site beyond the first")
    g0_table = make_sampler(g0_pgf, delta_tail)
    # slot 0 is a placeholder table (never drawn from)
    h_tables, h_index = _site_tables(list(h_pgfs), delta_tail)
    placeholder = SamplingTable(
        support=np.array([0], dtype=np.int64), probs=np.array([1.0]),
        cond=np.array([1.0]), cdf=np.array([1.0]), tail_mass=0.0,
    )
    per_site = [placeholder] + [h_tables[h_index[i]] for i in range(n_sites - 1)]
    h_support, h_cond, h_cdf, h_offsets = _catalog(per_site)
    snaps = _snap_array(snapshot_gens, n_gens)

    def chunk(r0: int, n: int) -> np.ndarray:
        return kernels.run_interactive(init, g0_table.support, g0_table.cond, g0_table.cdf,
                                       h_support, h_cond, h_cdf, h_offsets,
                                       master, r0, n, n_gens, snaps, cap, backend=backend)

    return _parallel_chunks(chunk, snaps.size, n_sites, replicates, rep0, workers)


def _parallel_chunks(chunk_fn, n_snaps, n_sites, replicates, rep0, workers):
    if replicates < 1:
        raise ValueError("need at least one replicate")
    workers = max(1, int(workers))
    if workers == 1:
        return chunk_fn(rep0, replicates)
    out = np.zeros((n_snaps, replicates, n_sites), dtype=np.int64)
    bounds = np.linspace(0, replicates, workers + 1).astype(int)
    jobs = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(chunk_fn, rep0 + lo, hi - lo): (lo, hi) for lo, hi in jobs}
        for fut, (lo, hi) in futures.items():
            out[:, lo:hi, :] = fut.result()
    return out


def _trajectory(model, snaps_array, snapshot_gens, k, gamma_k, a, master, replicate):
    snapshots = {int(g): np.ascontiguousarray(snaps_array[i, 0, :])
                 for i, g in enumerate(snapshot_gens)}
    return FlowTrajectory(k=k, gamma_k=gamma_k, a=a, model=model, master_seed=master,
                          replicate=replicate, snapshots=snapshots)


def simulate_independent(init_counts, pgfs, n_gens: int, master: int, k: int,
                         gamma_k: float, snapshot_gens=None, replicate: int = 0,
                         cap: int = DEFAULT_CAP, backend=None) -> FlowTrajectory:
    """One replicate of the independent model: every site runs its own
    branching chain from the pgf built for its lattice position."""
    if snapshot_gens is None:
        snapshot_gens = range(n_gens + 1)
    snaps = sorted(set(int(g) for g in snapshot_gens))
    arr = run_independent_batch(init_counts, pgfs, n_gens, snaps, master,
                                replicates=1, rep0=replicate, cap=cap, backend=backend)
    a = (len(init_counts) - 1) / k
    return _trajectory("independent", arr, snaps, k, gamma_k, a, master, replicate)


def simulate_interactive(init_counts, g0_pgf, h_pgfs, n_gens: int, master: int, k: int,
                         gamma_k: float, snapshot_gens=None, replicate: int = 0,
                         cap: int = DEFAULT_CAP, backend=None) -> FlowTrajectory:
    """One replicate of the interacting flow (see run_interactive_batch)."""
    if snapshot_gens is None:
        snapshot_gens = range(n_gens + 1)
    snaps = sorted(set(int(g) for g in snapshot_gens))
    arr = run_interactive_batch(init_counts, g0_pgf, h_pgfs, n_gens, snaps, master,
                                replicates=1, rep0=replicate, cap=cap, backend=backend)
    a = (len(init_counts) - 1) / k
    return _trajectory("interactive", arr, snaps, k, gamma_k, a, master, replicate)


def generation_of(gamma_k: float, t: float) -> int:
    """Discrete generation [gamma_k * t] matching continuum time t."""
    return int(math.floor(gamma_k * t))


def extract_measure(traj: FlowTrajectory, t: float, a: float | None = None) -> StepMeasure:
    """Rescaled population measure at continuum time t: mass count/k at i/k."""
    gen = generation_of(traj.gamma_k, t)
    state = traj.state_at(gen)
    if a is None:
        a = traj.a
    limit = int(math.floor(traj.k * a))
    counts = state.counts[: limit + 1]
    return StepMeasure.from_counts(traj.k, counts, a=a)


def discrete_cumulant(g: Pgf, k: int, gamma_k: float, t: float, lam: float) -> float:
    """Exact one-site rescaled Laplace exponent -k*log g^[gamma_k*t](e^(-lam/k)).

    No Monte Carlo: the transition law's transform is the iterated pgf.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    n = generation_of(gamma_k, t)
    s = iterate(g, math.exp(-lam / k), n)
    if s <= 0.0:
        raise DegenerateRegimeError(
            f"iterated pgf vanished (k={k}, t={t}, lambda={lam}); "
            "the (t, lambda, k) regime is outside model validity"
        )
    return -k * math.log(s)


def export_trajectory_csv(path, batch: np.ndarray, snapshot_gens, rep0: int = 0) -> None:
    """Write batched populations as rows (replicate, generation, site, count)."""
    snaps = list(snapshot_gens)
    if batch.ndim != 3 or batch.shape[0] != len(snaps):
        raise ValueError("batch must be [n_snapshots, replicates, sites]")
    with open(path, "w") as fh:
        fh.write("replicate,generation,site,count\n")
        for qi, gen in enumerate(snaps):
            for r in range(batch.shape[1]):
                row = batch[qi, r]
                for site in range(batch.shape[2]):
                    fh.write(f"{rep0 + r},{int(gen)},{site},{int(row[site])}\n")
