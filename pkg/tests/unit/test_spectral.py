"""Unit tests for the eigenbasis, the resonant splitting and the decay constants."""
import math

import numpy as np
import pytest

from dampwave.exceptions import (
    AmbiguousResonanceError,
    EllipticityError,
    InvalidParameterError,
    NonResonantError,
)
from dampwave.spectral import (
    EllipticOperator1D,
    SpectralBasis,
    block_projectors,
    build_basis,
    center_block,
    constant_coefficient,
    decay_constants,
    decay_time_grid,
    decompose,
    fractional_norm,
    projection_norms,
    semigroup,
    stable_semigroup,
    tabulated_coefficient,
    unstable_backward_semigroup,
    weighted_block_norm,
)


class TestEllipticOperator:
    """Test EllipticOperator1D validation."""

    def test_grid_spans_interval(self, operator):
        """Test the grid runs from 0 to the interval length."""
        assert operator.grid[0] == 0.0
        assert operator.grid[-1] == pytest.approx(1.0)
        assert operator.spacing == pytest.approx(1.0 / 399)

    def test_too_few_grid_points(self):
        """Test n_grid below 16 is rejected."""
        with pytest.raises(InvalidParameterError):
            EllipticOperator1D(1.0, constant_coefficient(1.0), n_grid=8)

    def test_non_positive_length(self):
        """Test a zero interval length is rejected."""
        with pytest.raises(InvalidParameterError):
            EllipticOperator1D(0.0, constant_coefficient(1.0), n_grid=100)

    def test_ellipticity_violation(self):
        """Test a coefficient below the ellipticity constant is rejected."""
        op = EllipticOperator1D(1.0, constant_coefficient(0.0), n_grid=100)
        with pytest.raises(EllipticityError) as exc_info:
            build_basis(op, 4)
        assert "not uniformly elliptic" in str(exc_info.value)

    def test_tabulated_coefficient_dipping_below_floor(self):
        """Test a tabulated coefficient that crosses zero is rejected."""
        coefficient = tabulated_coefficient(np.array([0.0, 0.5, 1.0]), np.array([1.0, -0.1, 1.0]))
        op = EllipticOperator1D(1.0, coefficient, n_grid=100)
        with pytest.raises(EllipticityError):
            op.check_ellipticity()


class TestBuildBasis:
    """Test build_basis on the Dirichlet Laplacian."""

    def test_eigenvalues_match_analytic(self, basis):
        """Test mu_i is close to (i pi)^2 on 400 grid points."""
        expected = (np.arange(1, 9) * math.pi) ** 2
        np.testing.assert_allclose(basis.eigenvalues, expected, rtol=1e-3)

    def test_eigenvalues_strictly_increasing(self, basis):
        """Test the retained spectrum is simple and ascending."""
        assert basis.eigenvalues[0] > 0
        assert np.all(np.diff(basis.eigenvalues) > 0)

    def test_gram_matrix_is_identity(self, basis):
        """Test eigenvectors are orthonormal under the quadrature weights."""
        assert np.max(np.abs(basis.gram() - np.eye(basis.n_modes))) <= 1e-10

    def test_first_eigenvector_is_sine(self, basis):
        """Test e_1 is sqrt(2) sin(pi x) and positive at the midpoint."""
        np.testing.assert_allclose(basis.eigenvectors[0], math.sqrt(2) * np.sin(math.pi * basis.grid), atol=1e-8)
        assert basis.eigenvectors[0][basis.n_grid // 2] > 0

    def test_eigenvectors_vanish_at_boundary(self, basis):
        """Test Dirichlet boundary values."""
        assert np.all(basis.eigenvectors[:, 0] == 0.0)
        assert np.all(basis.eigenvectors[:, -1] == 0.0)

    def test_scaled_coefficient(self):
        """Test a = 4 multiplies every eigenvalue by 4."""
        op = EllipticOperator1D(1.0, constant_coefficient(4.0), n_grid=400)
        scaled = build_basis(op, 6)
        reference = build_basis(EllipticOperator1D(1.0, constant_coefficient(1.0), n_grid=400), 6)
        np.testing.assert_allclose(scaled.eigenvalues, 4.0 * reference.eigenvalues, rtol=1e-10)

    def test_tabulated_constant_matches_constant(self):
        """Test a flat table reproduces the constant coefficient."""
        table = tabulated_coefficient(np.array([1.0, 0.0]), np.array([2.0, 2.0]))
        tabulated = build_basis(EllipticOperator1D(1.0, table, n_grid=200), 4)
        constant = build_basis(EllipticOperator1D(1.0, constant_coefficient(2.0), n_grid=200), 4)
        np.testing.assert_allclose(tabulated.eigenvalues, constant.eigenvalues, rtol=1e-12)

    def test_too_many_modes(self, operator):
        """Test n_modes above n_grid - 2 is rejected."""
        with pytest.raises(InvalidParameterError):
            build_basis(operator, operator.n_grid - 1)

    def test_project_synthesize_round_trip(self, basis):
        """Test projecting a synthesized grid function recovers its coefficients."""
        x = np.linspace(-1.0, 1.0, basis.n_modes)
        np.testing.assert_allclose(basis.project(basis.synthesize(x)), x, atol=1e-10)


class TestDecompose:
    """Test the resonant splitting of the modes."""

    def test_first_eigenvalue(self, decomp):
        """Test resonance at mu_1 has no minus modes."""
        assert decomp.k == 1
        assert decomp.kernel_modes == (0,)
        assert decomp.minus_modes == ()
        assert decomp.plus_modes == tuple(range(1, 8))
        assert decomp.d[:2] == (0, 1)
        assert decomp.dim_e_minus == 0

    def test_third_eigenvalue(self, decomp_k3):
        """Test resonance at mu_3 has two minus modes."""
        assert decomp_k3.k == 3
        assert decomp_k3.minus_modes == (0, 1)
        assert decomp_k3.dim_e_minus == 2
        assert decomp_k3.d == tuple(range(9))

    def test_partition_covers_modes(self, decomp_k3):
        """Test the three mode sets partition the retained modes."""
        modes = decomp_k3.kernel_modes + decomp_k3.minus_modes + decomp_k3.plus_modes
        assert sorted(modes) == list(range(decomp_k3.n_modes))

    def test_lambda_snapped(self, basis):
        """Test a slightly perturbed lambda snaps to the discrete eigenvalue."""
        mu1 = float(basis.eigenvalues[0])
        decomp = decompose(basis, mu1 * (1 + 1e-10), 1.0)
        assert decomp.lambda_ == mu1

    def test_non_resonant(self, basis):
        """Test lambda between eigenvalues is rejected."""
        with pytest.raises(NonResonantError) as exc_info:
            decompose(basis, 50.0, 1.0)
        assert "non-resonant" in str(exc_info.value)

    def test_ambiguous(self, basis):
        """Test a tolerance covering two eigenvalues is rejected."""
        with pytest.raises(AmbiguousResonanceError):
            decompose(basis, float(basis.eigenvalues[0]), 1.0, tol=10.0)

    def test_non_positive_damping(self, basis):
        """Test c <= 0 is rejected."""
        with pytest.raises(InvalidParameterError):
            decompose(basis, float(basis.eigenvalues[0]), 0.0)

    def test_alpha_out_of_range(self, basis):
        """Test alpha outside (0, 1) is rejected."""
        with pytest.raises(InvalidParameterError):
            decompose(basis, float(basis.eigenvalues[0]), 1.0, alpha=1.0)

    def test_repeated_eigenvalue(self):
        """Test a double eigenvalue forms a two-dimensional kernel."""
        grid = np.linspace(0.0, 1.0, 16)
        basis = SpectralBasis(
            grid=grid,
            eigenvalues=np.array([1.0, 2.0, 2.0, 3.0]),
            eigenvectors=np.zeros((4, 16)),
            quadrature_weights=np.full(16, 1.0 / 15),
            interval_length=1.0,
        )
        decomp = decompose(basis, 2.0, 1.0)
        assert decomp.kernel_modes == (1, 2)
        assert decomp.kernel_dimension == 2
        assert decomp.d == (0, 1, 3, 4)
        assert decomp.dim_e_minus == 1

    def test_minus_block_from_second_eigenvalue(self, basis):
        """Test the mode-1 block at lambda = mu_2 has one negative eigenvalue."""
        decomp = decompose(basis, float(basis.eigenvalues[1]), 1.0)
        mu1, mu2 = basis.eigenvalues[:2]
        np.testing.assert_allclose(decomp.mode_blocks[0], [[0.0, -1.0], [mu1 - mu2, mu1]])
        xi = decomp.block_eigenvalues()[0]
        assert xi[0].real < 0 < xi[1].real
        assert decomp.dim_e_minus == 1

    def test_sign_dichotomy(self, decomp_k3):
        """Test plus blocks are stable and minus blocks have one negative eigenvalue."""
        xi = decomp_k3.block_eigenvalues()
        assert np.all(xi[list(decomp_k3.plus_modes)].real > 0)
        minus = xi[list(decomp_k3.minus_modes)]
        assert np.all(minus[:, 0].real < 0)
        assert np.all(minus[:, 1].real > 0)

    def test_kernel_block_eigenvalues(self, decomp):
        """Test the kernel block has eigenvalues 0 and c lambda."""
        xi = np.sort(decomp.block_eigenvalues()[0].real)
        np.testing.assert_allclose(xi, [0.0, decomp.c_lambda], atol=1e-12)

    def test_summary_uses_one_based_modes(self, decomp_k3):
        """Test the summary reports mode numbers starting at 1."""
        summary = decomp_k3.summary()
        assert summary["kernel_modes"] == [3]
        assert summary["minus_modes"] == [1, 2]


class TestCenterBlock:
    """Test the center block [[0, -1], [0, c lambda]]."""

    def test_eigenvalues(self, decomp):
        """Test eigenvalues {0, c lambda}."""
        xi = np.sort(np.linalg.eigvals(center_block(decomp)).real)
        np.testing.assert_allclose(xi, [0.0, decomp.c_lambda], atol=1e-12)

    def test_doubled_damping(self, basis):
        """Test c = 2 doubles the nonzero eigenvalue."""
        decomp = decompose(basis, float(basis.eigenvalues[0]), 2.0)
        xi = np.sort(np.linalg.eigvals(center_block(decomp)).real)
        assert xi[1] == pytest.approx(2.0 * basis.eigenvalues[0])

    def test_singular(self, decomp):
        """Test the center block is rank deficient."""
        assert np.linalg.det(center_block(decomp)) == pytest.approx(0.0, abs=1e-12)


class TestDecayConstants:
    """Test the sampled decay constants M and delta."""

    def test_ranges(self, decomp, decay):
        """Test M >= 1 and 0 < delta below the spectral gap."""
        xi = decomp.block_eigenvalues()[list(decomp.plus_modes)]
        assert decay.M >= 1.0
        assert 0 < decay.delta <= np.min(np.abs(xi.real))
        assert decay.delta == pytest.approx(0.95 * decay.spectral_gap)

    def test_time_grid_reaches_horizon(self, decomp, decay):
        """Test the geometric grid spans [0, 50 / delta]."""
        times = decay_time_grid(decomp, decay.delta)
        assert times[0] == 0.0
        assert times[-1] == pytest.approx(50.0 / decay.delta)
        assert np.all(np.diff(times) > 0)

    def test_per_block_certificate(self, decomp, decay):
        """Test every hyperbolic block obeys |S_i(t)| <= M exp(-delta t) on the grid."""
        times = decay_time_grid(decomp, decay.delta)
        norms = weighted_block_norm(stable_semigroup(decomp, times), decomp.alpha_weights)
        bound = decay.M * np.exp(-decay.delta * times)[:, None]
        plus = list(decomp.plus_modes)
        assert np.all(norms[:, plus] <= bound * (1 + 1e-12))

    def test_backward_certificate_on_minus_modes(self, decomp_k3):
        """Test every minus-mode block obeys |S_i(-t)| <= M exp(-delta t) on E- at lambda = mu_3."""
        decay = decay_constants(decomp_k3)
        times = decay_time_grid(decomp_k3, decay.delta)
        norms = weighted_block_norm(unstable_backward_semigroup(decomp_k3, times), decomp_k3.alpha_weights)
        bound = decay.M * np.exp(-decay.delta * times)[:, None]
        minus = list(decomp_k3.minus_modes)
        assert minus == [0, 1]
        assert np.all(norms[:, minus] <= bound * (1 + 1e-12))
        assert np.all(norms[0, minus] > 0)

    def test_sampled_supremum_below_M(self, decay):
        """Test the full-norm cross-check never exceeds the reported M."""
        assert decay.sampled_supremum <= decay.M

    def test_semigroup_commutes_with_projectors(self, decomp_k3):
        """Test exp(-B_i t) commutes with the block spectral projectors."""
        pi_plus, pi_minus = block_projectors(decomp_k3)
        S = semigroup(decomp_k3, 0.1)
        for projector in (pi_plus, pi_minus):
            commutator = np.einsum("nij,njk->nik", S, projector) - np.einsum("nij,njk->nik", projector, S)
            scale = np.max(np.abs(S), axis=(1, 2))[:, None, None]
            assert np.max(np.abs(commutator) / scale) <= 1e-8

    def test_projectors_sum_to_identity_off_kernel(self, decomp_k3):
        """Test Pi_+ + Pi_- is the identity on every hyperbolic mode."""
        pi_plus, pi_minus = block_projectors(decomp_k3)
        hyperbolic = np.flatnonzero(decomp_k3.hyperbolic_mask)
        np.testing.assert_allclose((pi_plus + pi_minus)[hyperbolic], np.broadcast_to(np.eye(2), (7, 2, 2)), atol=1e-12)


class TestFractionalNorm:
    """Test the graph norm of A^alpha."""

    def test_first_mode(self, basis):
        """Test ||e_1||_{1/2} = sqrt(mu_1)."""
        x = np.zeros(basis.n_modes)
        x[0] = 1.0
        assert fractional_norm(x, 0.5, basis) == pytest.approx(math.sqrt(basis.eigenvalues[0]))

    def test_zero(self, basis):
        """Test the norm of zero."""
        assert fractional_norm(np.zeros(basis.n_modes), 0.5, basis) == 0.0

    def test_two_modes(self, basis):
        """Test Parseval over two unit coefficients."""
        x = np.zeros(basis.n_modes)
        x[:2] = 1.0
        assert fractional_norm(x, 0.5, basis) == pytest.approx(math.sqrt(basis.eigenvalues[0] + basis.eigenvalues[1]))


class TestProjectionNorms:
    """Test the projection norms in X and E."""

    def test_orthogonal_projections(self, norms):
        """Test P has norm one in X."""
        assert norms.P == 1.0
        assert norms.P_E == 1.0

    def test_plus_projection(self, norms):
        """Test the E+ projection at mu_1 is the identity on plus modes."""
        assert norms.Q_plus_E == pytest.approx(1.0)
        assert norms.Q_minus_E == 0.0

    def test_minus_projection_at_least_one(self, decomp_k3):
        """Test a nonzero spectral projector has norm at least one."""
        norms = projection_norms(decomp_k3)
        assert norms.Q_minus_E >= 1.0
        assert np.isfinite(norms.Q_plus_E)
