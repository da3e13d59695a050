"""Eigenbasis of the 1-D elliptic operator and the resonant splitting of the phase space.

Coordinates throughout the package are eigen-coordinates: a position u on the
grid is represented by its coefficients x_i = <u, e_i>, a phase-space point by
the pair (x, y) of position and velocity coefficients.  The phase-space
operator acts on every mode pair through the 2x2 block
B_i = [[0, -1], [mu_i - lambda, c mu_i]].
"""
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from dbt.adapters.events.logging import AdapterLogger
from dbt_common.dataclass_schema import dbtClassMixin
from scipy.linalg import LinAlgError, eigh_tridiagonal, expm

from dampwave.exceptions import (
    AmbiguousResonanceError,
    EigensolverError,
    EllipticityError,
    InconsistentDecompositionError,
    InvalidParameterError,
    NonResonantError,
)


logger = AdapterLogger("Dampwave")

Coefficient = Callable[[np.ndarray], np.ndarray]

DELTA_MARGIN = 0.05
OVERSHOOT_INFLATION = 1.05
# |Re xi| below this (relative to the largest block eigenvalue) counts as the center
HYPERBOLIC_FLOOR = 1e-12


def constant_coefficient(value: float) -> Coefficient:
    def coefficient(x: np.ndarray) -> np.ndarray:
        return np.full(np.shape(x), float(value))

    return coefficient


def tabulated_coefficient(nodes: np.ndarray, values: np.ndarray) -> Coefficient:
    """Piecewise-linear coefficient through tabulated (x, a) pairs."""
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    order = np.argsort(nodes)
    nodes, values = nodes[order], values[order]

    def coefficient(x: np.ndarray) -> np.ndarray:
        return np.interp(x, nodes, values)

    return coefficient


@dataclass(frozen=True)
class EllipticOperator1D:
    """-(a u')' on (0, interval_length) with Dirichlet boundary conditions."""

    interval_length: float
    coefficient: Coefficient
    n_grid: int
    ellipticity: float = 1e-6

    def __post_init__(self):
        if not self.interval_length > 0:
            raise InvalidParameterError("interval_length", self.interval_length, "a positive length")
        if self.n_grid < 16:
            raise InvalidParameterError("n_grid", self.n_grid, "at least 16 grid points")
        if not self.ellipticity > 0:
            raise InvalidParameterError("ellipticity", self.ellipticity, "a positive constant")

    @property
    def spacing(self) -> float:
        return self.interval_length / (self.n_grid - 1)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.interval_length, self.n_grid)

    @property
    def midpoints(self) -> np.ndarray:
        grid = self.grid
        return 0.5 * (grid[:-1] + grid[1:])

    def check_ellipticity(self) -> float:
        samples = np.concatenate(
            [self.coefficient(self.grid), self.coefficient(self.midpoints)]
        )
        minimum = float(np.min(samples))
        if not np.all(np.isfinite(samples)) or minimum < self.ellipticity:
            raise EllipticityError(minimum, self.ellipticity)
        return minimum


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    grid: np.ndarray
    eigenvalues: np.ndarray
    # shape (n_modes, n_grid), zero at both boundary nodes
    eigenvectors: np.ndarray
    quadrature_weights: np.ndarray
    interval_length: float

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def n_grid(self) -> int:
        return len(self.grid)

    def inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.sum(self.quadrature_weights * u * v, axis=-1)

    def project(self, u: np.ndarray) -> np.ndarray:
        return (np.asarray(u) * self.quadrature_weights) @ self.eigenvectors.T

    def synthesize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.eigenvectors

    def gram(self) -> np.ndarray:
        return (self.eigenvectors * self.quadrature_weights) @ self.eigenvectors.T


def build_basis(op: EllipticOperator1D, n_modes: int) -> SpectralBasis:
    """Lowest n_modes eigenpairs of the central-difference discretization of -(a u')'.

    The discrete operator is symmetric tridiagonal on the interior nodes; its
    eigenvectors are rescaled to be orthonormal under the trapezoidal weights and
    sign-normalized so that every e_i starts out positive next to x = 0.
    """
    if n_modes < 1 or n_modes > op.n_grid - 2:
        raise InvalidParameterError("n_modes", n_modes, f"1 <= n_modes <= {op.n_grid - 2}")
    op.check_ellipticity()

    h = op.spacing
    a_mid = op.coefficient(op.midpoints)
    diagonal = (a_mid[:-1] + a_mid[1:]) / h**2
    off_diagonal = -a_mid[1:-1] / h**2

    try:
        mu, vectors = eigh_tridiagonal(
            diagonal, off_diagonal, select="i", select_range=(0, n_modes - 1)
        )
    except (LinAlgError, ValueError) as exc:
        raise EigensolverError(str(exc)) from exc

    if len(mu) != n_modes or not np.all(np.isfinite(mu)):
        raise EigensolverError(f"expected {n_modes} finite eigenvalues, got {len(mu)}")
    if mu[0] <= 0:
        raise EigensolverError(f"lowest eigenvalue {mu[0]!r} is not positive")

    eigenvectors = np.zeros((n_modes, op.n_grid))
    eigenvectors[:, 1:-1] = vectors.T / math.sqrt(h)
    signs = np.sign(eigenvectors[:, 1])
    signs[signs == 0] = 1.0
    eigenvectors *= signs[:, None]

    weights = np.full(op.n_grid, h)
    weights[0] = weights[-1] = 0.5 * h

    logger.debug(f"Built {n_modes} modes on {op.n_grid} nodes, mu_1 = {float(mu[0]):.10g}")
    return SpectralBasis(
        grid=op.grid,
        eigenvalues=np.asarray(mu, dtype=float),
        eigenvectors=eigenvectors,
        quadrature_weights=weights,
        interval_length=float(op.interval_length),
    )


def _clusters(mu: np.ndarray, multiplicity_tol: float) -> List[List[int]]:
    clusters: List[List[int]] = []
    for i, value in enumerate(mu):
        if clusters and abs(value - mu[clusters[-1][0]]) <= multiplicity_tol * abs(value):
            clusters[-1].append(i)
        else:
            clusters.append([i])
    return clusters


@dataclass(frozen=True, eq=False)
class ResonanceDecomposition:
    lambda_: float
    k: int
    c: float
    alpha: float
    eigenvalues: np.ndarray
    # 0-based mode indices
    kernel_modes: Tuple[int, ...]
    minus_modes: Tuple[int, ...]
    plus_modes: Tuple[int, ...]
    # d[l] = number of modes whose eigenvalue is among the l lowest distinct ones
    d: Tuple[int, ...]
    distinct_eigenvalues: Tuple[float, ...]
    mode_blocks: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def kernel_dimension(self) -> int:
        return len(self.kernel_modes)

    @property
    def c_lambda(self) -> float:
        return self.c * self.lambda_

    @property
    def a(self) -> float:
        return 1.0 / math.sqrt(self.c_lambda**2 + 1.0)

    @property
    def dim_e_minus(self) -> int:
        return self.d[self.k - 1]

    def _mask(self, modes: Tuple[int, ...]) -> np.ndarray:
        mask = np.zeros(self.n_modes, dtype=bool)
        mask[list(modes)] = True
        return mask

    @property
    def kernel_mask(self) -> np.ndarray:
        return self._mask(self.kernel_modes)

    @property
    def minus_mask(self) -> np.ndarray:
        return self._mask(self.minus_modes)

    @property
    def plus_mask(self) -> np.ndarray:
        return self._mask(self.plus_modes)

    @property
    def hyperbolic_mask(self) -> np.ndarray:
        return ~self.kernel_mask

    @property
    def alpha_weights(self) -> np.ndarray:
        return self.eigenvalues**self.alpha

    def block_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of every B_i, shape (n_modes, 2), ordered by real part."""
        xi = np.linalg.eigvals(self.mode_blocks)
        order = np.argsort(xi.real, axis=1)
        return np.take_along_axis(xi, order, axis=1)

    def e_norm(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """||x||_alpha + ||y||, vectorized over leading axes."""
        return np.sqrt(np.sum((self.alpha_weights * x) ** 2, axis=-1)) + np.sqrt(
            np.sum(np.asarray(y) ** 2, axis=-1)
        )

    def q_norm(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        mask = self.hyperbolic_mask
        return self.e_norm(np.where(mask, x, 0.0), np.where(mask, y, 0.0))

    def summary(self) -> dict:
        return {
            "lambda": self.lambda_,
            "k": self.k,
            "c": self.c,
            "alpha": self.alpha,
            "kernel_modes": [i + 1 for i in self.kernel_modes],
            "minus_modes": [i + 1 for i in self.minus_modes],
            "plus_modes": [i + 1 for i in self.plus_modes],
            "d": list(self.d),
        }


def decompose(
    basis: SpectralBasis,
    lambda_: float,
    c: float,
    tol: float = 1e-8,
    alpha: float = 0.5,
    multiplicity_tol: float = 1e-12,
) -> ResonanceDecomposition:
    if not c > 0:
        raise InvalidParameterError("c", c, "a positive damping factor")
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError("alpha", alpha, "a value in (0, 1)")
    if not tol > 0:
        raise InvalidParameterError("tol", tol, "a positive relative tolerance")

    mu = basis.eigenvalues
    clusters = _clusters(mu, multiplicity_tol)
    levels = [float(mu[cluster[0]]) for cluster in clusters]
    matches = [j for j, level in enumerate(levels) if abs(lambda_ - level) <= tol * level]
    if not matches:
        nearest = float(mu[np.argmin(np.abs(mu - lambda_))])
        raise NonResonantError(lambda_, nearest, tol)
    if len(matches) > 1:
        raise AmbiguousResonanceError(lambda_, [j + 1 for j in matches])

    j = matches[0]
    lam = levels[j]
    kernel = tuple(clusters[j])
    minus = tuple(i for cluster in clusters[:j] for i in cluster)
    plus = tuple(i for cluster in clusters[j + 1 :] for i in cluster)
    d = (0,) + tuple(int(v) for v in np.cumsum([len(cluster) for cluster in clusters]))

    blocks = np.zeros((len(mu), 2, 2))
    blocks[:, 0, 1] = -1.0
    blocks[:, 1, 0] = mu - lam
    blocks[:, 1, 1] = c * mu
    blocks[list(kernel), 1, 0] = 0.0
    blocks[list(kernel), 1, 1] = c * lam

    decomp = ResonanceDecomposition(
        lambda_=lam,
        k=j + 1,
        c=float(c),
        alpha=float(alpha),
        eigenvalues=mu,
        kernel_modes=kernel,
        minus_modes=minus,
        plus_modes=plus,
        d=d,
        distinct_eigenvalues=tuple(levels),
        mode_blocks=blocks,
    )
    _check_dichotomy(decomp)
    logger.debug(
        f"Resonance at k = {decomp.k}: kernel {decomp.kernel_dimension}, "
        f"E- dimension {decomp.dim_e_minus}"
    )
    return decomp


def _check_dichotomy(decomp: ResonanceDecomposition) -> None:
    xi = decomp.block_eigenvalues()
    plus = list(decomp.plus_modes)
    minus = list(decomp.minus_modes)
    if plus and not np.all(xi[plus].real > 0):
        raise InconsistentDecompositionError("a plus-mode block has an eigenvalue with Re <= 0")
    if minus:
        negative = np.sum((xi[minus].real < 0) & (np.abs(xi[minus].imag) == 0), axis=1)
        if not np.all(negative == 1) or not np.all(xi[minus, 1].real > 0):
            raise InconsistentDecompositionError(
                "a minus-mode block does not have exactly one negative eigenvalue"
            )
    count = int(np.sum(xi[minus].real < 0)) if minus else 0
    if count != decomp.dim_e_minus:
        raise InconsistentDecompositionError(
            f"dim E- = {count} does not match d_(k-1) = {decomp.dim_e_minus}"
        )


def center_block(decomp: ResonanceDecomposition) -> np.ndarray:
    return np.array([[0.0, -1.0], [0.0, decomp.c_lambda]])


def semigroup(decomp: ResonanceDecomposition, t) -> np.ndarray:
    """exp(-B_i t) for every mode; shape (..., n_modes, 2, 2) for array-valued t."""
    t = np.asarray(t, dtype=float)
    generators = -decomp.mode_blocks * t[..., None, None, None]
    return expm(generators)


def _minus_mode_spectra(decomp: ResonanceDecomposition):
    for i in decomp.minus_modes:
        xi, vectors = np.linalg.eig(decomp.mode_blocks[i])
        xi = xi.real
        dual = np.linalg.inv(vectors)
        negative = int(np.argmin(xi))
        positive = 1 - negative
        projector = np.outer(vectors[:, negative], dual[negative, :]).real
        yield i, float(xi[negative]), float(xi[positive]), projector


def block_projectors(decomp: ResonanceDecomposition) -> Tuple[np.ndarray, np.ndarray]:
    """Per-mode spectral projectors onto the E+ and E- parts of each block.

    Kernel modes get zero in both; plus modes lie wholly in E+; a minus mode
    splits into its negative eigendirection (E-) and its positive one (E+).
    """
    n = decomp.n_modes
    identity = np.eye(2)
    pi_plus = np.zeros((n, 2, 2))
    pi_minus = np.zeros((n, 2, 2))
    pi_plus[list(decomp.plus_modes)] = identity
    for i, _, _, projector in _minus_mode_spectra(decomp):
        pi_minus[i] = projector
        pi_plus[i] = identity - projector
    return pi_plus, pi_minus


def stable_semigroup(decomp: ResonanceDecomposition, t) -> np.ndarray:
    """S(t) restricted to E+, per mode; zero on kernel modes.

    Minus modes use the rank-one form exp(-xi_+ t) Pi_+ so that the growing
    E- direction never enters the arithmetic.
    """
    t = np.asarray(t, dtype=float)
    result = np.zeros(t.shape + (decomp.n_modes, 2, 2))
    plus = list(decomp.plus_modes)
    if plus:
        generators = -decomp.mode_blocks[plus] * t[..., None, None, None]
        result[..., plus, :, :] = expm(generators)
    for i, _, xi_plus, projector in _minus_mode_spectra(decomp):
        result[..., i, :, :] = np.exp(-xi_plus * t)[..., None, None] * (np.eye(2) - projector)
    return result


def unstable_backward_semigroup(decomp: ResonanceDecomposition, t) -> np.ndarray:
    """S(-t) restricted to E-, per mode: exp(xi_- t) Pi_- on minus modes, zero elsewhere."""
    t = np.asarray(t, dtype=float)
    result = np.zeros(t.shape + (decomp.n_modes, 2, 2))
    for i, xi_minus, _, projector in _minus_mode_spectra(decomp):
        result[..., i, :, :] = np.exp(xi_minus * t)[..., None, None] * projector
    return result


def weighted_block_norm(matrices: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Operator norm of 2x2 blocks in the norm |x| w + |y| (max column sum after rescaling)."""
    column_x = np.abs(matrices[..., 0, 0]) + np.abs(matrices[..., 1, 0]) / weights
    column_y = weights * np.abs(matrices[..., 0, 1]) + np.abs(matrices[..., 1, 1])
    return np.maximum(column_x, column_y)


@dataclass(frozen=True)
class DecayConstants(dbtClassMixin):
    M: float
    delta: float
    spectral_gap: float
    t_max: float
    sampled_supremum: float


def decay_time_grid(decomp: ResonanceDecomposition, delta: float, n_times: int = 400) -> np.ndarray:
    fastest = float(np.max(np.abs(decomp.block_eigenvalues().real)))
    start = 1e-3 / fastest
    return np.concatenate([[0.0], np.geomspace(start, 50.0 / delta, n_times - 1)])


def decay_constants(
    decomp: ResonanceDecomposition,
    n_times: int = 400,
    n_probe: int = 100,
    seed: int = 0,
) -> DecayConstants:
    hyperbolic = np.flatnonzero(decomp.hyperbolic_mask)
    if len(hyperbolic) == 0:
        raise InvalidParameterError("n_modes", decomp.n_modes, "at least one hyperbolic mode")

    xi = decomp.block_eigenvalues()
    scale = float(np.max(np.abs(xi)))
    real_parts = np.abs(xi[hyperbolic].real)
    if np.any(real_parts <= HYPERBOLIC_FLOOR * scale):
        raise InconsistentDecompositionError("a kernel mode leaked into the hyperbolic set")
    gap = float(np.min(real_parts))
    delta = (1.0 - DELTA_MARGIN) * gap

    times = decay_time_grid(decomp, delta, n_times)
    growth = np.exp(delta * times)[:, None]
    weights = decomp.alpha_weights

    per_block = np.maximum(
        weighted_block_norm(stable_semigroup(decomp, times), weights),
        weighted_block_norm(unstable_backward_semigroup(decomp, times), weights),
    )
    block_supremum = max(1.0, float(np.max(per_block[:, hyperbolic] * growth)))
    M = OVERSHOOT_INFLATION * block_supremum

    sampled = _sampled_forward_supremum(decomp, times, delta, n_probe, seed)
    if sampled > M:
        logger.debug(f"Full E-norm supremum {sampled:.6g} exceeds block estimate {M:.6g}")
        M = OVERSHOOT_INFLATION * sampled

    logger.debug(f"Decay constants: M = {M:.6g}, delta = {delta:.6g}")
    return DecayConstants(
        M=M,
        delta=delta,
        spectral_gap=gap,
        t_max=float(times[-1]),
        sampled_supremum=sampled,
    )


def _sampled_forward_supremum(
    decomp: ResonanceDecomposition,
    times: np.ndarray,
    delta: float,
    n_probe: int,
    seed: int,
) -> float:
    pi_plus, _ = block_projectors(decomp)
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n_probe, decomp.n_modes, 2))
    z = np.einsum("nij,pnj->pni", pi_plus, raw)
    initial = decomp.e_norm(z[..., 0], z[..., 1])
    keep = initial > 0
    if not np.any(keep):
        return 0.0
    z, initial = z[keep], initial[keep]
    evolved = np.einsum("tnij,pnj->tpni", stable_semigroup(decomp, times), z)
    ratios = decomp.e_norm(evolved[..., 0], evolved[..., 1]) / initial
    return float(np.max(ratios * np.exp(delta * times)[:, None]))


def fractional_norm(x: np.ndarray, alpha: float, basis: SpectralBasis) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.sum(basis.eigenvalues ** (2 * alpha) * x**2)))


@dataclass(frozen=True)
class ProjectionNorms(dbtClassMixin):
    P: float
    Q_plus: float
    Q_minus: float
    P_E: float
    Q_plus_E: float
    Q_minus_E: float


def projection_norms(
    decomp: ResonanceDecomposition, alpha: Optional[float] = None
) -> ProjectionNorms:
    alpha = decomp.alpha if alpha is None else alpha
    weights = decomp.eigenvalues**alpha
    pi_plus, pi_minus = block_projectors(decomp)
    plus_norms = weighted_block_norm(pi_plus, weights)
    minus_norms = weighted_block_norm(pi_minus, weights)
    has_plus = bool(decomp.plus_modes or decomp.minus_modes)
    return ProjectionNorms(
        P=1.0,
        Q_plus=1.0 if decomp.plus_modes else 0.0,
        Q_minus=1.0 if decomp.minus_modes else 0.0,
        P_E=1.0,
        Q_plus_E=float(np.max(plus_norms)) if has_plus else 0.0,
        Q_minus_E=float(np.max(minus_norms)) if decomp.minus_modes else 0.0,
    )
