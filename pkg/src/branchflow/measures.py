"""Finite measures on [0, a] as lattice step functions, tabulated grid
functions, and a truncated weak-convergence metric with separation
diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FunctionOnGrid",
    "StepMeasure",
    "TestFamily",
    "lattice_grid",
    "integrate",
    "rho",
    "default_family",
    "separation_lower_bound",
    "max_exponential_gap",
]

_NODE_TOL = 1e-12


def lattice_grid(k: int, a: float) -> np.ndarray:
    """Nodes {0, 1/k, ..., floor(k*a)/k} shared by level-k measures,
    mechanisms and test functions."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    if a < 0:
        raise ValueError("a must be nonnegative")
    return np.arange(int(math.floor(k * a)) + 1, dtype=float) / k


@dataclass(frozen=True)
class FunctionOnGrid:
    """Values of a function tabulated on a strictly increasing grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.ascontiguousarray(self.grid, dtype=float)
        values = np.ascontiguousarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size == 0:
            raise ValueError("grid and values must be equal-length 1-d arrays")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid, value: float) -> "FunctionOnGrid":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_callable(cls, grid, fn) -> "FunctionOnGrid":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.array([float(fn(x)) for x in grid]))

    def node_index(self, x: float) -> int:
        """Index of the grid node equal to x; raises for off-grid points."""
        i = int(np.searchsorted(self.grid, x))
        for j in (i - 1, i):
            if 0 <= j < self.grid.size and abs(self.grid[j] - x) <= _NODE_TOL * max(1.0, abs(x)):
                return j
        raise ValueError(f"{x!r} is not a grid node")

    def __call__(self, x: float) -> float:
        return float(self.values[self.node_index(x)])

    def with_values(self, values) -> "FunctionOnGrid":
        return FunctionOnGrid(self.grid, np.asarray(values, dtype=float))

    @property
    def a(self) -> float:
        return float(self.grid[-1])

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True)
class StepMeasure:
    """Finite measure on [0, a]: sorted atom locations with positive masses.

    Identified with its right-continuous increasing cumulative function
    x -> mu[0, x]; all measures produced here carry atoms on a lattice.
    """

    a: float
    locations: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        locs = np.ascontiguousarray(self.locations, dtype=float)
        masses = np.ascontiguousarray(self.masses, dtype=float)
        if locs.ndim != 1 or locs.shape != masses.shape:
            raise ValueError("locations and masses must be equal-length 1-d arrays")
        if locs.size:
            if np.any(np.diff(locs) <= 0):
                raise ValueError("atom locations must be strictly increasing")
            if locs[0] < -_NODE_TOL or locs[-1] > self.a + _NODE_TOL:
                raise ValueError("atom locations must lie in [0, a]")
            if np.any(masses < 0):
                raise ValueError("atom masses must be nonnegative")
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def zero(cls, a: float) -> "StepMeasure":
        return cls(a, np.empty(0), np.empty(0))

    @classmethod
    def from_atoms(cls, a: float, atoms) -> "StepMeasure":
        """Build from (location, mass) pairs; merges duplicates, drops zeros."""
        acc: dict[float, float] = {}
        for loc, mass in atoms:
            acc[float(loc)] = acc.get(float(loc), 0.0) + float(mass)
        pairs = sorted((loc, m) for loc, m in acc.items() if m != 0.0)
        locs = np.array([p[0] for p in pairs])
        masses = np.array([p[1] for p in pairs])
        return cls(a, locs, masses)

    @classmethod
    def from_counts(cls, k: int, counts, a: float | None = None) -> "StepMeasure":
        """Measure (1/k) * sum_i counts[i] * delta_{i/k}."""
        counts = np.asarray(counts)
        if a is None:
            a = (len(counts) - 1) / k
        idx = np.nonzero(counts)[0]
        return cls(float(a), idx / k, counts[idx] / k)

    def total_mass(self) -> float:
        return float(self.masses.sum())

    def cumulative(self, x: float) -> float:
        """mu[0, x], right continuous in x."""
        return float(self.masses[self.locations <= x + _NODE_TOL].sum())

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# a={self.a!r}\n")
            fh.write("location,mass\n")
            for loc, mass in zip(self.locations, self.masses):
                fh.write(f"{float(loc)!r},{float(mass)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "StepMeasure":
        with open(path) as fh:
            header = fh.readline().strip()
            if not header.startswith("# a="):
                raise ValueError("missing domain-endpoint header")
            a = float(header[4:])
            cols = fh.readline().strip()
            if cols != "location,mass":
                raise ValueError("unexpected column header")
            atoms = []
            for line in fh:
                line = line.strip()
                if line:
                    loc, mass = line.split(",")
                    atoms.append((float(loc), float(mass)))
        return cls.from_atoms(a, atoms)


def integrate(mu: StepMeasure, f: FunctionOnGrid) -> float:
    """<mu, f> = sum of mass * f(location); atoms must sit on f's grid."""
    total = 0.0
    for loc, mass in zip(mu.locations, mu.masses):
        total += mass * f.values[f.node_index(loc)]
    return total


@dataclass(frozen=True)
class TestFamily:
    """Ordered test functions h_0 == 1, h_1, ... with 0 < h_i <= 1, used as
    the weights of the truncated metric."""

    __test__ = False  # domain type, not a pytest case

    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("family must contain at least h_0")
        h0 = members[0]
        if not np.allclose(h0.values, 1.0):
            raise ValueError("h_0 must be identically 1")
        for i, h in enumerate(members):
            if h.min() <= 0:
                raise ValueError(f"member {i} is not bounded away from zero")
            if h.max() > 1 + 1e-12:
                raise ValueError(f"member {i} exceeds sup-norm 1")
        object.__setattr__(self, "members", members)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def truncation_bound(self) -> float:
        """Weight mass of the discarded tail: sum_{i >= len} 2^-i."""
        return 2.0 ** (1 - len(self.members))


def rho(mu: StepMeasure, nu: StepMeasure, fam: TestFamily) -> float:
    """Truncated metric sum_i 2^-i * (1 and |<mu,h_i> - <nu,h_i>|).

    Values are family-dependent; comparisons across runs must pin the family.
    """
    if abs(mu.a - nu.a) > _NODE_TOL:
        raise ValueError("measures live on different domains")
    total = 0.0
    for i, h in enumerate(fam):
        gap = abs(integrate(mu, h) - integrate(nu, h))
        total += 0.5**i * min(1.0, gap)
    return total


def default_family(a: float, grid, n_members: int = 32, floor: float = 0.05) -> TestFamily:
    """Deterministic family: h_0 == 1 followed by trigonometric and power
    functions clipped into [floor, 1]."""
    if n_members < 1:
        raise ValueError("need at least one member")
    grid = np.asarray(grid, dtype=float)
    scale = a if a > 0 else 1.0
    x = grid / scale
    members = [FunctionOnGrid.constant(grid, 1.0)]
    m = 1
    while len(members) < n_members:
        candidates = (
            0.5 * (1.0 + np.cos(np.pi * m * x)),
            0.5 * (1.0 + np.sin(np.pi * m * x)),
            x**m,
        )
        for vals in candidates:
            if len(members) >= n_members:
                break
            members.append(FunctionOnGrid(grid, np.clip(vals, floor, 1.0)))
        m += 1
    return TestFamily(tuple(members))


def separation_lower_bound(nu: StepMeasure, fam: TestFamily, delta: float) -> tuple[float, int]:
    """Guaranteed value of max_i |exp(-<mu,h_i>) - exp(-<nu,h_i>)| over all mu
    with rho(mu, nu) >= delta, together with the head length N0 it uses.

    N0 is the smallest index with 2^-N0 < delta/2, so the discarded metric
    tail cannot hide the gap; the bound then follows from pinning one head
    term at delta / (2 * (N0 + 1)).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    n0 = 0
    while 2.0**-n0 >= delta / 2:
        n0 += 1
    if n0 >= len(fam):
        raise ValueError(f"family too short for delta={delta}: need {n0 + 1} members")
    d = min(1.0, delta / (2.0 * (n0 + 1)))
    worst = max(integrate(nu, fam.members[i]) for i in range(n0 + 1))
    return math.exp(-worst) * min(math.expm1(d), -math.expm1(-d)), n0


def max_exponential_gap(mu: StepMeasure, nu: StepMeasure, fam: TestFamily, upto: int) -> float:
    """max_{i <= upto} |exp(-<mu,h_i>) - exp(-<nu,h_i>)|."""
    gaps = (
        abs(math.exp(-integrate(mu, fam.members[i])) - math.exp(-integrate(nu, fam.members[i])))
        for i in range(upto + 1)
    )
    return max(gaps)
