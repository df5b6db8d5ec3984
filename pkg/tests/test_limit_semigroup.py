import math

import numpy as np
import pytest

from branchflow.limit_semigroup import (
    BlowUpError,
    CumulantSolverOptions,
    laplace_functional,
    solve_cumulant,
    solve_cumulant_field,
    solve_nonlocal_cumulant,
)
from branchflow.measures import FunctionOnGrid, StepMeasure
from branchflow.mechanisms import (
    AdmissibleFamily,
    BranchingMechanism,
    MechanismField,
    stable_panel,
)

DRIFT = BranchingMechanism(b=1.0)
QUAD = BranchingMechanism(sigma2=1.0)


class TestSolveCumulant:
    def test_zero_mechanism_constant_solution(self):
        assert solve_cumulant(BranchingMechanism(), 3.0, 1.7) == 1.7

    def test_drift_closed_form(self):
        assert solve_cumulant(DRIFT, 1.0, 1.0) == pytest.approx(math.exp(-1.0), abs=1e-8)

    def test_quadratic_closed_form(self):
        assert solve_cumulant(QUAD, 1.0, 1.0) == pytest.approx(2.0 / 3.0, abs=1e-8)

    def test_stable_closed_form_within_panel_tolerance(self):
        alpha = 0.5
        mech = BranchingMechanism(jumps=stable_panel(alpha, eps=1e-6, cap=1e6, nodes=400))
        target = (1.0 + alpha * 2.0) ** (-1.0 / alpha)  # lambda = 1, t = 2
        assert solve_cumulant(mech, 2.0, 1.0) == pytest.approx(target, abs=1e-3)

    def test_t_zero_and_validation(self):
        assert solve_cumulant(QUAD, 0.0, 0.4) == 0.4
        with pytest.raises(ValueError):
            solve_cumulant(QUAD, 1.0, -0.5)
        with pytest.raises(ValueError):
            solve_cumulant(QUAD, -1.0, 0.5)

    def test_blow_up_detection(self):
        # supercritical drift: v(t) = lambda * exp(5t) crosses the guard
        with pytest.raises(BlowUpError):
            solve_cumulant(BranchingMechanism(b=-5.0), 6.0, 1.0)

    def test_semigroup_property_within_budget(self):
        opts = CumulantSolverOptions(h_ode=1e-2)
        s, t = 0.437, 0.791
        lhs = solve_cumulant(QUAD, s + t, 1.0, opts)
        rhs = solve_cumulant(QUAD, t, solve_cumulant(QUAD, s, 1.0, opts), opts)
        assert abs(lhs - rhs) <= 10 * opts.h_ode**4

    def test_monotone_in_lambda(self):
        for lam1, lam2 in [(0.0, 0.5), (0.5, 1.0), (1.0, 4.0)]:
            assert solve_cumulant(QUAD, 1.3, lam1) <= solve_cumulant(QUAD, 1.3, lam2) + 1e-14

    def test_richardson_fourth_order(self):
        exact = math.exp(-1.0)
        errs = [abs(solve_cumulant(DRIFT, 1.0, 1.0, CumulantSolverOptions(h_ode=h)) - exact)
                for h in (0.1, 0.05, 0.025)]
        assert 10 < errs[0] / errs[1] < 24
        assert 10 < errs[1] / errs[2] < 24

    def test_critical_linearization(self):
        eps = 1e-6
        for mech, slope in [(DRIFT, math.exp(-1.0)), (QUAD, 1.0)]:
            fd = (solve_cumulant(mech, 1.0, eps) - solve_cumulant(mech, 1.0, 0.0)) / eps
            assert fd == pytest.approx(slope, abs=1e-4)


class TestSolveCumulantField:
    def test_zero_function(self):
        grid = np.linspace(0, 1, 11)
        field = MechanismField.constant(QUAD, grid)
        v = solve_cumulant_field(field, 1.0, FunctionOnGrid.constant(grid, 0.0))
        assert np.all(v.values == 0.0)

    def test_constant_field_matches_scalar(self):
        grid = np.linspace(0, 1, 11)
        field = MechanismField.constant(QUAD, grid)
        v = solve_cumulant_field(field, 1.0, FunctionOnGrid.constant(grid, 1.0))
        scalar = solve_cumulant(QUAD, 1.0, 1.0)
        assert v.values == pytest.approx(scalar, abs=1e-14)

    def test_two_region_field(self):
        grid = np.linspace(0, 1, 21)
        field = MechanismField.from_regions([(0.0, QUAD), (0.5, DRIFT)], grid)
        v = solve_cumulant_field(field, 1.0, FunctionOnGrid.constant(grid, 1.0))
        for x, val in zip(grid, v.values):
            target = 2.0 / 3.0 if x < 0.5 else math.exp(-1.0)
            assert val == pytest.approx(target, abs=1e-8)

    def test_monotone_in_f(self):
        grid = np.linspace(0, 1, 9)
        field = MechanismField.constant(QUAD, grid)
        f = FunctionOnGrid.from_callable(grid, lambda x: 0.5 + x)
        g = FunctionOnGrid.from_callable(grid, lambda x: 1.0 + x)
        vf = solve_cumulant_field(field, 0.8, f)
        vg = solve_cumulant_field(field, 0.8, g)
        assert np.all(vf.values <= vg.values + 1e-14)


class TestSolveNonlocal:
    def grid_family(self, h=1.0, nodes=41, phi0=None):
        grid = np.linspace(0.0, 1.0, nodes)
        return AdmissibleFamily.tabulate(phi0 or BranchingMechanism(), grid, h, None), grid

    def test_zero_kernel_degenerates_to_field_equation(self):
        family, grid = self.grid_family(h=0.0, phi0=QUAD)
        f = FunctionOnGrid.from_callable(grid, lambda x: 1.0 + 0.5 * x)
        coupled = solve_nonlocal_cumulant(family, 0.9, f)
        field = MechanismField.constant(QUAD, grid)
        local = solve_cumulant_field(field, 0.9, f)
        assert coupled.values == pytest.approx(local.values, abs=1e-10)

    def test_t_zero_returns_f(self):
        family, grid = self.grid_family()
        f = FunctionOnGrid.from_callable(grid, lambda x: 0.3 + x)
        v = solve_nonlocal_cumulant(family, 0.0, f)
        assert np.array_equal(v.values, f.values)

    def test_right_endpoint_closed_form(self):
        # coupling closes at x = a: V_t f(a) = f(a) * exp(h * a * t)
        for h in (0.5, 1.0):
            family, grid = self.grid_family(h=h, nodes=101)
            f = FunctionOnGrid.constant(grid, 1.0)
            v = solve_nonlocal_cumulant(family, 0.5, f, CumulantSolverOptions(h_ode=2e-3))
            assert v.values[-1] == pytest.approx(math.exp(h * 0.5), abs=1e-6)

    def test_positivity_preserved(self):
        family, grid = self.grid_family(h=1.0, phi0=QUAD)
        f = FunctionOnGrid.constant(grid, 0.2)
        v = solve_nonlocal_cumulant(family, 1.0, f)
        assert v.min() > 0.0

    def test_monotone_in_f(self):
        family, grid = self.grid_family(h=0.7, phi0=QUAD)
        f = FunctionOnGrid.constant(grid, 0.5)
        g = FunctionOnGrid.from_callable(grid, lambda x: 0.6 + 0.2 * x)
        vf = solve_nonlocal_cumulant(family, 0.7, f)
        vg = solve_nonlocal_cumulant(family, 0.7, g)
        assert np.all(vf.values <= vg.values + 1e-12)

    def test_blow_up_detection(self):
        family, grid = self.grid_family(h=30.0)
        f = FunctionOnGrid.constant(grid, 1.0)
        with pytest.raises(BlowUpError):
            solve_nonlocal_cumulant(family, 1.0, f)

    def test_jump_kernel_right_endpoint_scalar_reference(self):
        # constant jump kernel: at x = a the coupled system closes into the
        # scalar equation dV/dt = -phi_0(V) + a * psi(V); integrate that
        # reference with a much finer step
        from branchflow.mechanisms import JumpAtoms, eval_local

        atoms = JumpAtoms.from_pairs([(1.0, 0.5), (2.5, 0.2)])
        h = 0.4
        grid = np.linspace(0.0, 1.0, 81)
        family = AdmissibleFamily.tabulate(QUAD, grid, h, atoms)
        f = FunctionOnGrid.constant(grid, 1.0)
        v = solve_nonlocal_cumulant(family, 0.6, f, CumulantSolverOptions(h_ode=1e-3))

        def psi(z):
            return h * z + float((atoms.masses * -np.expm1(-z * atoms.sizes)).sum())

        w = 1.0
        n = 24000
        dt = 0.6 / n
        for _ in range(n):
            k1 = -eval_local(QUAD, w) + psi(w)
            k2 = -eval_local(QUAD, w + dt / 2 * k1) + psi(w + dt / 2 * k1)
            k3 = -eval_local(QUAD, w + dt / 2 * k2) + psi(w + dt / 2 * k2)
            k4 = -eval_local(QUAD, w + dt * k3) + psi(w + dt * k3)
            w += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        assert v.values[-1] == pytest.approx(w, abs=1e-9)


class TestLaplaceFunctional:
    def test_zero_measure(self):
        grid = np.linspace(0, 1, 5)
        v = FunctionOnGrid.constant(grid, 2.0)
        assert laplace_functional(StepMeasure.zero(1.0), v) == 1.0

    def test_zero_function(self):
        grid = np.linspace(0, 1, 5)
        mu = StepMeasure.from_atoms(1.0, [(0.25, 2.0)])
        assert laplace_functional(mu, FunctionOnGrid.constant(grid, 0.0)) == 1.0

    def test_unit_atom(self):
        grid = np.linspace(0, 1, 5)
        mu = StepMeasure.from_atoms(1.0, [(0.0, 1.0)])
        v = FunctionOnGrid.constant(grid, math.log(2.0))
        assert laplace_functional(mu, v) == pytest.approx(0.5, abs=1e-15)
