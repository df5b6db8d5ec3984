import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchflow.measures import (
    FunctionOnGrid,
    StepMeasure,
    TestFamily,
    default_family,
    integrate,
    lattice_grid,
    max_exponential_gap,
    rho,
    separation_lower_bound,
)

GRID = np.linspace(0.0, 1.0, 11)
FAM = default_family(1.0, GRID, 16)


class TestIntegrate:
    def test_zero_measure(self):
        f = FunctionOnGrid.constant(GRID, 3.0)
        assert integrate(StepMeasure.zero(1.0), f) == 0.0

    def test_unit_atom(self):
        f = FunctionOnGrid.from_callable(GRID, lambda x: x)
        mu = StepMeasure.from_atoms(1.0, [(0.5, 1.0)])
        assert integrate(mu, f) == 0.5

    def test_total_mass(self):
        mu = StepMeasure.from_atoms(1.0, [(0.0, 1.5), (0.5, 0.5), (1.0, 2.0)])
        assert integrate(mu, FunctionOnGrid.constant(GRID, 1.0)) == 4.0

    def test_off_grid_atom_rejected(self):
        mu = StepMeasure.from_atoms(1.0, [(0.123, 1.0)])
        with pytest.raises(ValueError):
            integrate(mu, FunctionOnGrid.constant(GRID, 1.0))


class TestRho:
    def test_identity(self):
        mu = StepMeasure.from_atoms(1.0, [(0.2, 1.0), (0.7, 0.5)])
        assert rho(mu, mu, FAM) == 0.0

    def test_upper_bound(self):
        mu = StepMeasure.from_atoms(1.0, [(0.0, 100.0)])
        nu = StepMeasure.zero(1.0)
        assert rho(mu, nu, FAM) <= 2.0

    def test_mass_gap_lower_bound(self):
        # h_0 == 1 alone contributes 1 and |1 - 2| = 1
        mu = StepMeasure.from_atoms(1.0, [(0.0, 1.0)])
        nu = StepMeasure.from_atoms(1.0, [(0.0, 2.0)])
        assert rho(mu, nu, FAM) >= 1.0

    def test_symmetry_and_triangle_fuzz(self):
        rng = np.random.default_rng(5)

        def rand_measure():
            n = int(rng.integers(0, 5))
            idx = np.sort(rng.choice(GRID.size, size=n, replace=False)) if n else []
            return StepMeasure.from_atoms(1.0, [(GRID[i], float(rng.integers(1, 4))) for i in idx])

        for _ in range(300):
            m1, m2, m3 = rand_measure(), rand_measure(), rand_measure()
            assert rho(m1, m2, FAM) == rho(m2, m1, FAM)
            assert rho(m1, m2, FAM) <= rho(m1, m3, FAM) + rho(m2, m3, FAM) + 1e-12

    def test_zero_rho_forces_equal_integrals(self):
        mu = StepMeasure.from_atoms(1.0, [(0.3, 1.0)])
        nu = StepMeasure.from_atoms(1.0, [(0.3, 1.0)])
        assert rho(mu, nu, FAM) == 0.0
        for h in FAM:
            assert integrate(mu, h) == integrate(nu, h)

    def test_weak_convergence_of_moving_atom(self):
        target = StepMeasure.from_atoms(1.0, [(0.5, 1.0)])
        dists = []
        for x in (0.0, 0.2, 0.4, 0.5):
            dists.append(rho(StepMeasure.from_atoms(1.0, [(x, 1.0)]), target, FAM))
        assert all(b <= a + 1e-12 for a, b in zip(dists, dists[1:]))
        assert dists[-1] == 0.0

    def test_domain_mismatch(self):
        mu = StepMeasure.zero(1.0)
        nu = StepMeasure.zero(2.0)
        with pytest.raises(ValueError):
            rho(mu, nu, FAM)


class TestDefaultFamily:
    def test_single_member_is_constant_one(self):
        fam = default_family(1.0, GRID, 1)
        assert len(fam) == 1
        assert np.all(fam.members[0].values == 1.0)

    def test_clipping_bounds(self):
        fam = default_family(1.0, GRID, 20)
        for h in fam:
            assert h.min() >= 0.05
            assert h.max() <= 1.0

    def test_truncation_bound(self):
        fam = default_family(1.0, GRID, 32)
        assert fam.truncation_bound == 2.0**-31

    def test_family_invariants_enforced(self):
        with pytest.raises(ValueError):
            TestFamily((FunctionOnGrid.constant(GRID, 0.5),))  # h_0 must be 1
        bad = (FunctionOnGrid.constant(GRID, 1.0), FunctionOnGrid.constant(GRID, 0.0))
        with pytest.raises(ValueError):
            TestFamily(bad)  # not bounded away from zero


class TestSeparation:
    def test_instance_wise_bound_on_corpus(self):
        rng = np.random.default_rng(11)
        fam = default_family(1.0, GRID, 24)
        nu = StepMeasure.from_atoms(1.0, [(0.2, 1.0), (0.8, 0.5)])
        delta = 0.05
        checked = 0
        for _ in range(100):
            n = int(rng.integers(0, 5))
            idx = np.sort(rng.choice(GRID.size, size=n, replace=False)) if n else []
            mu = StepMeasure.from_atoms(1.0, [(GRID[i], float(rng.integers(1, 4)) / 2) for i in idx])
            if rho(mu, nu, fam) < delta:
                continue
            checked += 1
            bound, n0 = separation_lower_bound(nu, fam, delta)
            assert bound > 0.0
            assert max_exponential_gap(mu, nu, fam, n0) >= bound
        assert checked > 50

    def test_family_too_short_raises(self):
        fam = default_family(1.0, GRID, 2)
        with pytest.raises(ValueError):
            separation_lower_bound(StepMeasure.zero(1.0), fam, 1e-4)


class TestStepMeasure:
    def test_from_counts(self):
        mu = StepMeasure.from_counts(2, [3, 0, 4], a=1.0)
        assert mu.locations.tolist() == [0.0, 1.0]
        assert mu.masses.tolist() == [1.5, 2.0]

    def test_cumulative_right_continuous(self):
        mu = StepMeasure.from_atoms(1.0, [(0.25, 1.0), (0.75, 2.0)])
        assert mu.cumulative(0.25) == 1.0
        assert mu.cumulative(0.2499999) == 0.0
        assert mu.cumulative(1.0) == 3.0

    def test_duplicate_atoms_merge(self):
        mu = StepMeasure.from_atoms(1.0, [(0.5, 1.0), (0.5, 2.0)])
        assert mu.locations.tolist() == [0.5]
        assert mu.masses.tolist() == [3.0]

    def test_invariants(self):
        with pytest.raises(ValueError):
            StepMeasure(1.0, np.array([0.5, 0.5]), np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            StepMeasure(1.0, np.array([0.5]), np.array([-1.0]))
        with pytest.raises(ValueError):
            StepMeasure(1.0, np.array([1.5]), np.array([1.0]))

    def test_csv_roundtrip(self, tmp_path):
        mu = StepMeasure.from_atoms(1.0, [(0.0, 1.5), (0.5, 0.5), (1.0, 2.0)])
        path = tmp_path / "measure.csv"
        mu.to_csv(path)
        text = path.read_text()
        assert text.startswith("# a=1.0\nlocation,mass\n")
        back = StepMeasure.from_csv(path)
        assert back.a == mu.a
        assert np.array_equal(back.locations, mu.locations)
        assert np.array_equal(back.masses, mu.masses)

    @given(st.integers(1, 50), st.integers(0, 30))
    @settings(max_examples=40, deadline=None)
    def test_lattice_counts_roundtrip(self, k, count):
        counts = np.zeros(k + 1, dtype=np.int64)
        counts[count % (k + 1)] = count
        mu = StepMeasure.from_counts(k, counts)
        assert mu.total_mass() == pytest.approx(count / k, abs=1e-12)

    def test_lattice_grid(self):
        grid = lattice_grid(4, 1.0)
        assert grid.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert lattice_grid(3, 0.9).tolist() == [0.0, 1 / 3, 2 / 3]
