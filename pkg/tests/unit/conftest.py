"""Unit test fixtures for dampwave."""
import pytest

from dampwave.block import derive_radii, preliminary_radii
from dampwave.nonlinearities import arctan
from dampwave.resonance import check_G
from dampwave.spectral import (
    EllipticOperator1D,
    build_basis,
    constant_coefficient,
    decay_constants,
    decompose,
    projection_norms,
)


# Mark all tests in this directory as unit tests
pytestmark = pytest.mark.unit


def _block(basis, decomp, f):
    decay = decay_constants(decomp)
    norms = projection_norms(decomp)
    radii = preliminary_radii(decomp, decay, norms, f, basis)
    report = check_G(basis, decomp, f, radii.b1_radius, radii.b2_radius)
    return derive_radii(decomp, decay, f, report, basis, norms=norms)


@pytest.fixture(scope="session")
def operator():
    """-u'' on (0, 1) with 400 grid points."""
    return EllipticOperator1D(interval_length=1.0, coefficient=constant_coefficient(1.0), n_grid=400)


@pytest.fixture(scope="session")
def basis(operator):
    """Eight lowest modes of the Dirichlet Laplacian."""
    return build_basis(operator, 8)


@pytest.fixture(scope="session")
def decomp(basis):
    """Resonance at the first eigenvalue with c = 1."""
    return decompose(basis, float(basis.eigenvalues[0]), 1.0)


@pytest.fixture(scope="session")
def decomp_k3(basis):
    """Resonance at the third eigenvalue with c = 1."""
    return decompose(basis, float(basis.eigenvalues[2]), 1.0)


@pytest.fixture(scope="session")
def decay(decomp):
    return decay_constants(decomp)


@pytest.fixture(scope="session")
def norms(decomp):
    return projection_norms(decomp)


@pytest.fixture(scope="session")
def arctan_f():
    return arctan()


@pytest.fixture(scope="session")
def arctan_block(basis, decomp, arctan_f):
    """Isolating block for f = arctan at the first eigenvalue (G1)."""
    return _block(basis, decomp, arctan_f)


@pytest.fixture(scope="session")
def neg_arctan_block(basis, decomp, arctan_f):
    """Isolating block for f = -arctan at the first eigenvalue (G2)."""
    return _block(basis, decomp, arctan_f.negated())
