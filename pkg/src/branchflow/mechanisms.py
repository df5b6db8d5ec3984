"""Local branching mechanisms, admissible decreasing families, and the
nonlocal coupling operator that moves mass between levels."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import FunctionOnGrid

__all__ = [
    "JumpAtoms",
    "EMPTY_JUMPS",
    "stable_panel",
    "BranchingMechanism",
    "MechanismField",
    "AdmissibleFamily",
    "AdmissibilityReport",
    "eval_local",
    "eval_psi",
    "eval_phi_q",
    "eval_nonlocal_psi",
    "validate_admissible",
]


@dataclass(frozen=True)
class JumpAtoms:
    """Finitely many jump sizes u_j > 0 carrying masses w_j >= 0."""

    sizes: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        sizes = np.ascontiguousarray(self.sizes, dtype=float)
        masses = np.ascontiguousarray(self.masses, dtype=float)
        if sizes.shape != masses.shape or sizes.ndim != 1:
            raise ValueError("sizes and masses must be equal-length 1-d arrays")
        if np.any(sizes <= 0):
            raise ValueError("jump sizes must be positive")
        if np.any(masses < 0):
            raise ValueError("jump masses must be nonnegative")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_pairs(cls, pairs) -> "JumpAtoms":
        pairs = list(pairs)
        sizes = np.array([float(u) for u, _ in pairs])
        masses = np.array([float(w) for _, w in pairs])
        return cls(sizes, masses)

    @property
    def is_empty(self) -> bool:
        return self.sizes.size == 0

    def moment_u_min_u2(self) -> float:
        """Integral of (u and u^2) against the atoms."""
        u = self.sizes
        return float((np.minimum(u, u * u) * self.masses).sum())

    def first_moment(self) -> float:
        return float((self.sizes * self.masses).sum())


EMPTY_JUMPS = JumpAtoms(np.empty(0), np.empty(0))


def stable_panel(
    alpha: float,
    c: float = 1.0,
    eps: float = 1e-4,
    cap: float = 1e3,
    nodes: int = 200,
) -> JumpAtoms:
    """Geometric-cell discretization of the heavy-tailed jump density
    c * alpha * (1 + alpha) / Gamma(1 - alpha) * u^(-2-alpha) on [eps, cap].

    With c = 1 the untruncated mechanism is exactly z^(1+alpha). Each cell
    carries its exact mass and sits at its mass centroid, so the first jump
    moment is preserved cell by cell and only the curvature term picks up a
    quadrature error. cap < infinity also keeps (u and u^2) finite.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0 < eps < cap:
        raise ValueError("need 0 < eps < cap")
    if nodes < 1:
        raise ValueError("need at least one quadrature cell")
    norm = c * alpha * (1 + alpha) / math.gamma(1 - alpha)
    edges = eps * (cap / eps) ** (np.arange(nodes + 1) / nodes)
    lo, hi = edges[:-1], edges[1:]
    # closed-form cell integrals of u^(-2-alpha) and u^(-1-alpha)
    masses = norm * (lo ** (-1 - alpha) - hi ** (-1 - alpha)) / (1 + alpha)
    first = norm * (lo**-alpha - hi**-alpha) / alpha
    return JumpAtoms(first / masses, masses)


@dataclass(frozen=True)
class BranchingMechanism:
    """Convex mechanism b*z + sigma2*z^2/2 + sum_j w_j*(exp(-z*u_j) - 1 + z*u_j)."""

    b: float = 0.0
    sigma2: float = 0.0
    jumps: JumpAtoms = EMPTY_JUMPS

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")

    def jump_moment(self) -> float:
        return self.jumps.moment_u_min_u2()

    @property
    def is_zero(self) -> bool:
        return self.b == 0 and self.sigma2 == 0 and self.jumps.is_empty


ZERO_MECHANISM = BranchingMechanism()


def eval_local(mech: BranchingMechanism, z):
    """Evaluate the mechanism at z >= 0 (scalar or array)."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("z must be nonnegative")
    out = mech.b * z + 0.5 * mech.sigma2 * z * z
    if not mech.jumps.is_empty:
        zu = np.multiply.outer(z, mech.jumps.sizes)
        out = out + (np.expm1(-zu) + zu) @ mech.jumps.masses
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MechanismField:
    """x-dependent mechanism tabulated on a grid of [0, a] with nearest-node
    lookup; ties resolve to the lower node."""

    grid: np.ndarray
    mechanisms: tuple

    def __post_init__(self):
        grid = np.ascontiguousarray(self.grid, dtype=float)
        mechs = tuple(self.mechanisms)
        if grid.ndim != 1 or grid.size != len(mechs) or grid.size == 0:
            raise ValueError("need one mechanism per grid node")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "mechanisms", mechs)

    @classmethod
    def constant(cls, mech: BranchingMechanism, grid) -> "MechanismField":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, (mech,) * grid.size)

    @classmethod
    def from_regions(cls, regions, grid) -> "MechanismField":
        """regions: [(start_0, mech_0), (start_1, mech_1), ...]; node x takes
        the mechanism of the last region with start <= x."""
        regions = sorted(regions, key=lambda r: r[0])
        starts = [r[0] for r in regions]
        grid = np.asarray(grid, dtype=float)
        mechs = []
        for x in grid:
            idx = int(np.searchsorted(starts, x + 1e-12)) - 1
            if idx < 0:
                raise ValueError(f"no region covers x={x}")
            mechs.append(regions[idx][1])
        return cls(grid, tuple(mechs))

    def node_of(self, x: float) -> int:
        i = int(np.clip(np.searchsorted(self.grid, x), 1, self.grid.size - 1)) if self.grid.size > 1 else 0
        if self.grid.size == 1:
            return 0
        return i - 1 if x - self.grid[i - 1] <= self.grid[i] - x else i

    def at(self, x: float) -> BranchingMechanism:
        return self.mechanisms[self.node_of(x)]

    @property
    def a(self) -> float:
        return float(self.grid[-1])


@dataclass(frozen=True)
class AdmissibleFamily:
    """phi_0 plus the tabulated kernel theta -> (h_theta, n_theta) whose
    integral phi_q = phi_0 - int_0^q psi_theta dtheta defines a decreasing
    family of mechanisms."""

    phi0: BranchingMechanism
    theta_grid: np.ndarray
    h: np.ndarray
    atoms: tuple = ()

    def __post_init__(self):
        grid = np.ascontiguousarray(self.theta_grid, dtype=float)
        h = np.ascontiguousarray(self.h, dtype=float)
        atoms = tuple(self.atoms) if self.atoms else tuple(EMPTY_JUMPS for _ in range(grid.size))
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("theta grid needs at least two nodes")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("theta grid must be strictly increasing")
        if h.shape != grid.shape or len(atoms) != grid.size:
            raise ValueError("need h and atoms for every theta node")
        object.__setattr__(self, "theta_grid", grid)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def tabulate(cls, phi0: BranchingMechanism, grid, h_fn=None, atoms_fn=None) -> "AdmissibleFamily":
        """Sample callable kernel data on a grid; constants are accepted."""
        grid = np.asarray(grid, dtype=float)
        if h_fn is None:
            h = np.zeros(grid.size)
        elif callable(h_fn):
            h = np.array([float(h_fn(t)) for t in grid])
        else:
            h = np.full(grid.size, float(h_fn))
        if atoms_fn is None:
            atoms = tuple(EMPTY_JUMPS for _ in grid)
        elif callable(atoms_fn):
            atoms = tuple(atoms_fn(t) for t in grid)
        else:
            atoms = tuple(atoms_fn for _ in grid)
        return cls(phi0, grid, h, atoms)

    @classmethod
    def local_only(cls, phi0: BranchingMechanism, grid) -> "AdmissibleFamily":
        """psi == 0: the family never moves mass between levels."""
        return cls.tabulate(phi0, grid)

    @property
    def a(self) -> float:
        return float(self.theta_grid[-1])

    def node_of(self, theta: float) -> int:
        if theta < -1e-12 or theta > self.a + 1e-12:
            raise ValueError(f"theta={theta} outside [0, {self.a}]")
        i = int(np.clip(np.searchsorted(self.theta_grid, theta), 1, self.theta_grid.size - 1))
        return i - 1 if theta - self.theta_grid[i - 1] <= self.theta_grid[i] - theta else i

    def psi_at(self, theta: float) -> tuple[float, JumpAtoms]:
        i = self.node_of(theta)
        return float(self.h[i]), self.atoms[i]

    def trapezoid_weights(self) -> np.ndarray:
        w = np.zeros(self.theta_grid.size)
        d = np.diff(self.theta_grid)
        w[:-1] += d / 2
        w[1:] += d / 2
        return w


def _psi_values(h: float, atoms: JumpAtoms, z):
    z = np.asarray(z, dtype=float)
    out = h * z
    if not atoms.is_empty:
        zu = np.multiply.outer(z, atoms.sizes)
        out = out - np.expm1(-zu) @ atoms.masses
    return out


def eval_psi(family: AdmissibleFamily, theta: float, z):
    """psi_theta(z) = h_theta*z + sum_j w_j*(1 - exp(-z*u_j)) at the nearest
    kernel node; nonnegative, nondecreasing and concave in z."""
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0):
        raise ValueError("z must be nonnegative")
    h, atoms = family.psi_at(theta)
    out = _psi_values(h, atoms, z_arr)
    return float(out) if out.ndim == 0 else out


def eval_phi_q(family: AdmissibleFamily, q: float, z) -> float:
    """phi_q(z) = phi_0(z) minus the trapezoid integral of psi over [0, q]."""
    if q < -1e-12 or q > family.a + 1e-12:
        raise ValueError(f"q={q} outside [0, {family.a}]")
    z = float(z)
    grid = family.theta_grid
    vals = np.array([_psi_values(float(h), atoms, z) for h, atoms in zip(family.h, family.atoms)])
    total = 0.0
    for i in range(grid.size - 1):
        if grid[i + 1] <= q:
            total += 0.5 * (vals[i] + vals[i + 1]) * (grid[i + 1] - grid[i])
        elif grid[i] < q:
            # straddling cell: trapezoid against the linear interpolant
            frac = (q - grid[i]) / (grid[i + 1] - grid[i])
            v_q = vals[i] + frac * (vals[i + 1] - vals[i])
            total += 0.5 * (vals[i] + v_q) * (q - grid[i])
    return eval_local(family.phi0, z) - total


def eval_nonlocal_psi(family: AdmissibleFamily, x: float, f: FunctionOnGrid) -> float:
    """Trapezoid quadrature of int [f(x v theta)*h_theta
    + sum_j w_j(theta)*(1 - exp(-u_j(theta)*f(x v theta)))] dtheta.

    f must be tabulated on the family's own grid and x must be a node, so
    x v theta is evaluated exactly."""
    if f.grid.shape != family.theta_grid.shape or not np.allclose(f.grid, family.theta_grid):
        raise ValueError("f must share the family's theta grid")
    if np.any(f.values < 0):
        raise ValueError("f must be nonnegative")
    ix = f.node_index(x)
    weights = family.trapezoid_weights()
    total = 0.0
    for l in range(family.theta_grid.size):
        fv = f.values[max(ix, l)]
        total += weights[l] * float(_psi_values(float(family.h[l]), family.atoms[l], fv))
    return total


@dataclass(frozen=True)
class AdmissibilityReport:
    """Outcome of the grid checks behind the decreasing-family definition."""

    sup_bound: float
    negative_h_thetas: tuple
    monotone: bool
    max_monotonicity_violation: float
    max_derivative_mismatch: float
    passed: bool

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"admissibility {status}: sup[h + int u n(du)] = {self.sup_bound:.6g}, "
            f"negative h at {len(self.negative_h_thetas)} nodes, "
            f"max q-monotonicity violation {self.max_monotonicity_violation:.3g}, "
            f"difference-quotient mismatch {self.max_derivative_mismatch:.3g} (informational)"
        )


def validate_admissible(family: AdmissibleFamily, z_grid=None, mono_tol: float = 1e-9) -> AdmissibilityReport:
    """Check h_theta >= 0, the kernel sup bound, and that q -> phi_q(z) is
    nonincreasing on a (q, z) lattice.

    The smoothness of q -> phi_q cannot be certified on a grid; the report
    carries the worst mismatch between difference quotients of phi_q and the
    midpoint kernel value as information only.
    """
    if z_grid is None:
        z_grid = np.linspace(0.0, 4.0, 9)[1:]
    grid = family.theta_grid
    negative = tuple(float(t) for t, h in zip(grid, family.h) if h < 0)
    sup_bound = max(float(h) + atoms.first_moment() for h, atoms in zip(family.h, family.atoms))

    worst_violation = 0.0
    worst_mismatch = 0.0
    for z in z_grid:
        phis = np.array([eval_phi_q(family, q, z) for q in grid])
        diffs = np.diff(phis)
        if diffs.size:
            worst_violation = max(worst_violation, float(diffs.max()))
        for i in range(grid.size - 1):
            dq = grid[i + 1] - grid[i]
            mid_psi = 0.5 * (
                float(_psi_values(float(family.h[i]), family.atoms[i], z))
                + float(_psi_values(float(family.h[i + 1]), family.atoms[i + 1], z))
            )
            worst_mismatch = max(worst_mismatch, abs(diffs[i] / dq + mid_psi))
    monotone = worst_violation <= mono_tol
    passed = monotone and not negative and math.isfinite(sup_bound)
    return AdmissibilityReport(
        sup_bound=sup_bound,
        negative_h_thetas=negative,
        monotone=monotone,
        max_monotonicity_violation=worst_violation,
        max_derivative_mismatch=worst_mismatch,
        passed=passed,
    )
