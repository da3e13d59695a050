"""Slow end-to-end properties on larger Galerkin systems.

Run with:
    pytest -m slow tests/functional/test_acceptance.py
"""
import json

import numpy as np
import pytest

from dampwave.block import (
    conley_index,
    derive_radii,
    detect_bounded_orbits,
    preliminary_radii,
    verify_block_family,
)
from dampwave.nonlinearities import arctan, const_kernel, rational_sr
from dampwave.resonance import Verdict, check_G, check_LL, check_SR
from dampwave.semiflow import StateE, divergence_probe, integrate, rk4_reference
from dampwave.spectral import (
    EllipticOperator1D,
    block_projectors,
    build_basis,
    constant_coefficient,
    decay_constants,
    decay_time_grid,
    decompose,
    projection_norms,
    stable_semigroup,
)

from tests.functional.fixtures import configs__small, with_changes


pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def system():
    op = EllipticOperator1D(interval_length=1.0, coefficient=constant_coefficient(1.0), n_grid=400)
    basis = build_basis(op, 8)
    decomp = decompose(basis, float(basis.eigenvalues[0]), 1.0)
    return basis, decomp


@pytest.fixture(scope="module")
def block(system):
    basis, decomp = system
    f = arctan()
    decay = decay_constants(decomp)
    norms = projection_norms(decomp)
    radii = preliminary_radii(decomp, decay, norms, f, basis)
    report = check_G(basis, decomp, f, radii.b1_radius, radii.b2_radius)
    return derive_radii(decomp, decay, f, report, basis, norms=norms)


def _start(n_modes):
    x = np.zeros(n_modes)
    y = np.zeros(n_modes)
    x[0] = 0.5
    y[0] = 0.1
    return StateE(x, y)


class TestSpectralOracle:
    def test_fine_grid(self):
        """Test the first 20 eigenvalues of -u'' match (i pi)^2 on a fine grid."""
        op = EllipticOperator1D(interval_length=1.0, coefficient=constant_coefficient(1.0), n_grid=2000)
        basis = build_basis(op, 20)
        exact = (np.pi * np.arange(1, 21)) ** 2
        np.testing.assert_allclose(basis.eigenvalues, exact, rtol=1e-4)


class TestIntegratorAccuracy:
    """Accuracy of the exponential integrator against independent references."""

    def test_matches_rk4(self, system):
        """Test dt = 1e-3 agrees with fine-step RK4 to 1e-6 in the E norm."""
        basis, decomp = system
        state = _start(8)
        ours = integrate(state, 1.0, 1e-3, 1.0, decomp, basis, arctan()).final_state
        reference = rk4_reference(state, 1.0, 1e-5, 1.0, decomp, basis, arctan())
        gap = decomp.e_norm(ours.x - reference.x, ours.y - reference.y)
        assert gap <= 1e-6

    def test_second_order(self, system):
        """Test each of three successive halvings of dt cuts the error by at least 3.5."""
        basis, decomp = system
        state = _start(8)
        dt0 = 0.02

        def final(dt):
            return integrate(state, 1.0, dt, 1.0, decomp, basis, arctan()).final_state

        reference = final(dt0 / 16)
        errors = []
        for j in range(4):
            result = final(dt0 * 2.0**-j)
            errors.append(decomp.e_norm(result.x - reference.x, result.y - reference.y))
        ratios = [errors[j] / errors[j + 1] for j in range(3)]
        assert min(ratios) >= 3.5, ratios


class TestHomotopyFamily:
    def test_block_valid_along_homotopy(self, system, block):
        """Test the G1 block shows no violations for s in {0, 0.25, 0.5, 0.75, 1}."""
        basis, decomp = system
        reports = verify_block_family(block, decomp, basis, arctan())
        assert [r.s for r in reports] == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert all(r.valid for r in reports), [r.total_violations for r in reports]


class TestCensus:
    """Finite-horizon censuses with the default horizon 50 / delta."""

    def test_kernel_forcing_empties_block(self, system, block):
        """Test F = 2 e_1 drives every seed out of the arctan block."""
        basis, decomp = system
        census = detect_bounded_orbits(block, decomp, basis, const_kernel(basis, decomp, amplitude=2.0))
        assert census.n_stayed == 0
        assert census.n_exited == 32

    def test_block_command_finds_bounded_orbit(self, project):
        """Test the block command over the default horizon keeps at least one orbit."""
        raw = with_changes(configs__small, dynamics={"T": None})
        project.run("block", raw)
        data = json.loads((project.out / "block.json").read_text())
        assert data["census"]["n_stayed"] >= 1
        assert data["census"]["lemma_violations"] == 0


class TestDecomposition:
    @pytest.mark.parametrize("k", [1, 2, 3])
    @pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
    def test_dichotomy(self, system, k, c):
        """Test plus blocks are stable, minus blocks have one negative eigenvalue, dim E- = d_(k-1)."""
        basis, _ = system
        decomp = decompose(basis, float(basis.eigenvalues[k - 1]), c)
        xi = decomp.block_eigenvalues()
        assert np.all(xi[list(decomp.plus_modes)].real > 0)
        minus = xi[list(decomp.minus_modes)].real
        assert np.all(np.sum(minus < 0, axis=1) == 1)
        assert decomp.dim_e_minus == decomp.d[k - 1] == k - 1

    def test_semigroup_decay(self, system):
        """Test ||S(t) z||_E <= M exp(-delta t) ||z||_E for 100 random z in E+."""
        basis, decomp = system
        decay = decay_constants(decomp)
        pi_plus, _ = block_projectors(decomp)
        rng = np.random.default_rng(11)
        z = np.einsum("nij,pnj->pni", pi_plus, rng.standard_normal((100, 8, 2)))
        times = decay_time_grid(decomp, decay.delta)
        evolved = np.einsum("tnij,pnj->tpni", stable_semigroup(decomp, times), z)
        norms = decomp.e_norm(evolved[..., 0], evolved[..., 1])
        bound = decay.M * np.exp(-decay.delta * times)[:, None] * decomp.e_norm(z[..., 0], z[..., 1])
        assert np.sum(norms > bound) == 0


class TestDivergence:
    @pytest.mark.parametrize("amplitude, slope", [(1.0, 1.0), (2.0, 4.0)])
    def test_slope_independent_of_start(self, system, amplitude, slope):
        """Test the fitted slope is |y0|^2 from ten seeded initial states."""
        basis, decomp = system
        y0 = np.zeros(8)
        y0[0] = amplitude
        for seed in range(10):
            rng = np.random.default_rng(seed)
            state0 = StateE(rng.standard_normal(8), rng.standard_normal(8))
            report = divergence_probe(decomp, basis, y0, state0=state0)
            assert report.slope == pytest.approx(slope, rel=1e-3)
            assert report.unbounded


class TestConditionsOnFineGrid:
    """Quadrature accuracy of the LL and SR checks."""

    @pytest.fixture(scope="class")
    def fine(self):
        op = EllipticOperator1D(interval_length=1.0, coefficient=constant_coefficient(1.0), n_grid=2000)
        basis = build_basis(op, 4)
        return basis, decompose(basis, float(basis.eigenvalues[0]), 1.0)

    def test_gram(self, fine):
        """Test the eigenvector Gram matrix is the identity to 1e-10."""
        basis, _ = fine
        assert np.max(np.abs(basis.gram() - np.eye(4))) <= 1e-10

    def test_ll_integral(self, fine):
        """Test arctan integrates to sqrt(2) within 1e-6 and flips sign under negation."""
        basis, decomp = fine
        plus = check_LL(basis, decomp, arctan())
        minus = check_LL(basis, decomp, arctan().negated())
        assert plus.verdict is Verdict.LL1
        assert abs(plus.integral - np.sqrt(2)) <= 1e-6
        assert minus.verdict is plus.verdict.flipped()
        assert minus.integral == pytest.approx(-plus.integral)

    def test_sr_integral(self, fine):
        """Test s / (1 + s^2) integrates f_infinity to 1 within 1e-10 and flips sign under negation."""
        basis, _ = fine
        plus = check_SR(basis, rational_sr())
        minus = check_SR(basis, rational_sr().negated())
        assert plus.verdict is Verdict.SR1
        assert abs(plus.integral - 1.0) <= 1e-10
        assert minus.verdict is Verdict.SR2
        assert minus.integral == -plus.integral


class TestIndex:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_exponent_gap_is_kernel_dimension(self, system, k):
        """Test first- and second-kind exponents differ by dim ker = 1."""
        basis, _ = system
        decomp = decompose(basis, float(basis.eigenvalues[k - 1]), 1.0)
        gap = conley_index(decomp, "G1").exponent - conley_index(decomp, "G2").exponent
        assert gap == decomp.kernel_dimension == 1

    def test_second_eigenvalue(self, project):
        """Test arctan at lambda = mu_2 has index Sigma^2."""
        raw = with_changes(configs__small, dynamics={"k": 2})
        assert "h(K_infty) = Sigma^2" in project.run("index", raw).stdout


class TestDeterminism:
    @pytest.mark.parametrize("command, files", [("index", ["index.json"]), ("block", ["block.json", "census.csv"])])
    def test_byte_identical(self, project, command, files):
        """Test identical config and seed give identical files."""
        project.run(command, configs__small, args=["--seed", "5"], out=project.root / "a")
        project.run(command, configs__small, args=["--seed", "5"], out=project.root / "b")
        for name in files:
            assert (project.root / "a" / name).read_bytes() == (project.root / "b" / name).read_bytes()
