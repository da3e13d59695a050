"""Isolating block construction, verification and the Conley index report.

The block is N = N1 + N2: N1 is the E-ball of radius R1 + ball_margin on the
hyperbolic modes, N2 the box {|w1| <= R4, |w2| <= R2} in the W chart of the
center space.  Under (G1) the |w1| = R4 face is strict egress and the
|w2| = R2 face strict ingress; under (G2) both faces are ingress.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from dbt.adapters.events.logging import AdapterLogger
from dbt_common.dataclass_schema import StrEnum, dbtClassMixin
from scipy.linalg import LinAlgError, eigvals, lstsq, solve

from dampwave.exceptions import (
    BlockConstructionError,
    BlockVerificationError,
    InconclusiveConditionError,
    InconsistentDecompositionError,
    InvalidParameterError,
    MissingAsymptoticsError,
    NewtonConvergenceError,
)
from dampwave.resonance import ConditionReport, Verdict, check_G
from dampwave.semiflow import (
    Nonlinearity,
    StateE,
    homotopy_field,
    integrate_batch,
    nemitskii,
)
from dampwave.spectral import (
    DecayConstants,
    ProjectionNorms,
    ResonanceDecomposition,
    SpectralBasis,
    projection_norms,
)
from dampwave.workers import map_chunks


logger = AdapterLogger("Dampwave")

R2_FACTOR = 1.1
BOUNDARY_TOL = 1e-9
CENSUS_HORIZON = 50.0
SEED_SHRINK = 0.9


@dataclass
class PreliminaryRadii(dbtClassMixin):
    m0: float
    m1: float
    R1: float
    R2: float
    b1_radius: float
    b2_radius: float


def preliminary_radii(
    decomp: ResonanceDecomposition,
    decay: DecayConstants,
    norms: ProjectionNorms,
    f: Nonlinearity,
    basis: SpectralBasis,
    ball_margin: float = 1.0,
) -> PreliminaryRadii:
    """m0, m1, R1 and R2, and the ball radii the G check needs before R3 exists."""
    root_length = np.sqrt(basis.interval_length)
    m1 = f.bound * root_length
    m0 = 2.0 * f.bound * root_length
    R1 = m0 * decay.M * (norms.Q_plus_E + norms.Q_minus_E) / decay.delta
    R2 = R2_FACTOR * m1 / decomp.c_lambda
    return PreliminaryRadii(
        m0=float(m0),
        m1=float(m1),
        R1=float(R1),
        R2=float(R2),
        b1_radius=float(R1 + ball_margin),
        b2_radius=float(R2 / decomp.c_lambda),
    )


@dataclass(frozen=True)
class IsolatingBlock(dbtClassMixin):
    R1: float
    R2: float
    R3: float
    R4: float
    a: float
    m0: float
    m1: float
    rho: float
    which: str
    c_lambda: float
    kernel_modes: List[int]
    ball_margin: float
    M: float
    delta: float
    q_plus_norm: float
    q_minus_norm: float

    @property
    def n1_radius(self) -> float:
        return self.R1 + self.ball_margin

    @property
    def first_kind(self) -> bool:
        return Verdict(self.which).sign > 0

    def radii_invariants(self) -> Dict[str, bool]:
        return {
            "w2_face_inward": -self.c_lambda * self.R2**2 + self.m1 * self.R2 < 0,
            "R4_formula": self.R4 == self.a * self.c_lambda * self.R3 + self.a * self.R2,
            "R1_lemma_bound": self.R1
            >= self.m0 * self.M * (self.q_plus_norm + self.q_minus_norm) / self.delta,
        }

    def w_norms(self, X: np.ndarray, Y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x0 = np.asarray(X)[..., self.kernel_modes]
        y0 = np.asarray(Y)[..., self.kernel_modes]
        w1 = self.a * (self.c_lambda * x0 + y0)
        return np.linalg.norm(w1, axis=-1), np.linalg.norm(y0, axis=-1)

    def contains_batch(
        self, X: np.ndarray, Y: np.ndarray, decomp: ResonanceDecomposition, tol: float = BOUNDARY_TOL
    ) -> np.ndarray:
        w1, w2 = self.w_norms(X, Y)
        q = decomp.q_norm(X, Y)
        return (
            (q <= self.n1_radius * (1 + tol))
            & (w1 <= self.R4 * (1 + tol))
            & (w2 <= self.R2 * (1 + tol))
        )

    def contains(self, state: StateE, decomp: ResonanceDecomposition) -> bool:
        return bool(self.contains_batch(state.x[None], state.y[None], decomp)[0])

    def interior(self, state: StateE, decomp: ResonanceDecomposition) -> bool:
        return bool(self.contains_batch(state.x[None], state.y[None], decomp, tol=-BOUNDARY_TOL)[0])


def derive_radii(
    decomp: ResonanceDecomposition,
    decay: DecayConstants,
    f: Nonlinearity,
    g_report: ConditionReport,
    basis: SpectralBasis,
    norms: Optional[ProjectionNorms] = None,
    ball_margin: float = 1.0,
    n_jobs: Optional[int] = None,
) -> IsolatingBlock:
    if g_report.check != "G" or not g_report.certified:
        raise InconclusiveConditionError("G", "an isolating block needs a certified G1 or G2 verdict")
    norms = projection_norms(decomp) if norms is None else norms
    radii = preliminary_radii(decomp, decay, norms, f, basis, ball_margin)

    same_balls = (
        g_report.b1_radius is not None
        and g_report.b2_radius is not None
        and np.isclose(g_report.b1_radius, radii.b1_radius, rtol=1e-12, atol=0.0)
        and np.isclose(g_report.b2_radius, radii.b2_radius, rtol=1e-12, atol=0.0)
    )
    if same_balls:
        report = g_report
    else:
        report = check_G(
            basis,
            decomp,
            f,
            radii.b1_radius,
            radii.b2_radius,
            R_grid=g_report.r_grid or None,
            n_samples=g_report.samples_used,
            seed=g_report.seed if g_report.seed is not None else 0,
            n_jobs=n_jobs,
        )
    if not report.certified or report.R3 is None:
        raise BlockConstructionError("R3 is not certified on the R grid for the block's ball radii")
    if report.verdict != g_report.verdict:
        raise BlockConstructionError(
            f"the G verdict changed from {g_report.verdict.value} to {report.verdict.value} on the block's balls"
        )

    a = decomp.a
    c_lambda = decomp.c_lambda
    R3 = float(report.R3)
    block = IsolatingBlock(
        R1=radii.R1,
        R2=radii.R2,
        R3=R3,
        R4=a * c_lambda * R3 + a * radii.R2,
        a=a,
        m0=radii.m0,
        m1=radii.m1,
        rho=report.rho,
        which=report.verdict.value,
        c_lambda=c_lambda,
        kernel_modes=list(decomp.kernel_modes),
        ball_margin=float(ball_margin),
        M=decay.M,
        delta=decay.delta,
        q_plus_norm=norms.Q_plus_E,
        q_minus_norm=norms.Q_minus_E,
    )
    logger.info(
        f"Isolating block ({block.which}): R1 = {block.R1:.6g}, R2 = {block.R2:.6g}, "
        f"R3 = {block.R3:.6g}, R4 = {block.R4:.6g}"
    )
    return block


class Stratum(StrEnum):
    EGRESS = "egress"
    INGRESS = "ingress"
    BOUNCE = "bounce"
    INTERIOR = "interior"
    EXTERIOR = "exterior"


@dataclass(frozen=True)
class BoundaryClass:
    stratum: Stratum
    w1_norm: float
    w2_norm: float


def classify_boundary(block: IsolatingBlock, state: StateE) -> BoundaryClass:
    w1, w2 = (float(v) for v in block.w_norms(state.x, state.y))
    if w1 > block.R4 * (1 + BOUNDARY_TOL) or w2 > block.R2 * (1 + BOUNDARY_TOL):
        stratum = Stratum.EXTERIOR
    else:
        on_w1 = abs(w1 - block.R4) <= BOUNDARY_TOL * block.R4
        on_w2 = abs(w2 - block.R2) <= BOUNDARY_TOL * block.R2
        if on_w1 and on_w2:
            stratum = Stratum.BOUNCE
        elif on_w1:
            stratum = Stratum.EGRESS
        elif on_w2:
            stratum = Stratum.INGRESS
        else:
            stratum = Stratum.INTERIOR
    return BoundaryClass(stratum=stratum, w1_norm=w1, w2_norm=w2)


@dataclass
class BlockVerification(dbtClassMixin):
    which: str
    s: float
    seed: int
    dt: float
    n_boundary_samples: int
    sign_violations: Dict[str, int]
    flow_violations: Dict[str, int]
    # min of sign(G) * d/dt |w1|^2 / 2 on the w1 faces; max of d/dt |w2|^2 / 2 on the w2 faces
    worst_w1_rate: float
    worst_w2_rate: float

    @property
    def total_violations(self) -> int:
        return sum(self.sign_violations.values()) + sum(self.flow_violations.values())

    @property
    def valid(self) -> bool:
        return self.total_violations == 0


def _sphere(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    directions = rng.standard_normal((n, dim))
    return radius * directions / np.linalg.norm(directions, axis=1, keepdims=True)


def _ball(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    return _sphere(rng, n, dim, radius) * rng.uniform(size=(n, 1)) ** (1.0 / dim)


def _kernel_states(block: IsolatingBlock, w1: np.ndarray, w2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return (w1 / block.a - w2) / block.c_lambda, w2


def verify_block(
    block: IsolatingBlock,
    decomp: ResonanceDecomposition,
    basis: SpectralBasis,
    f: Nonlinearity,
    n_boundary_samples: int = 1000,
    dt: float = 1e-3,
    seed: int = 0,
    s: float = 0.0,
    raise_on_violation: bool = False,
    n_jobs: Optional[int] = None,
) -> BlockVerification:
    """Sign and short-flow tests on the three boundary strata of the W box.

    Hyperbolic positions are drawn from the ball that bounded orbits occupy
    (radius R1); they only matter for s > 0 since G(0, .) decouples.
    """
    if n_boundary_samples < 1:
        raise InvalidParameterError("n_boundary_samples", n_boundary_samples, "a positive sample count")
    rng = np.random.default_rng(seed)
    kernel = list(decomp.kernel_modes)
    others = list(np.flatnonzero(decomp.hyperbolic_mask))
    dim = len(kernel)
    n = n_boundary_samples
    outward = 1.0 if block.first_kind else -1.0

    faces = {
        Stratum.EGRESS: (_sphere(rng, n, dim, block.R4), _ball(rng, n, dim, block.R2)),
        Stratum.INGRESS: (_ball(rng, n, dim, block.R4), _sphere(rng, n, dim, block.R2)),
        Stratum.BOUNCE: (_sphere(rng, n, dim, block.R4), _sphere(rng, n, dim, block.R2)),
    }
    weights = decomp.alpha_weights[others]
    hyperbolic_positions = {
        stratum: _sphere(rng, n, len(others), 1.0) * block.R1 * rng.uniform(size=(n, 1)) ** (1.0 / max(1, len(others))) / weights
        for stratum in faces
    }

    def kernel_field(x0: np.ndarray, xq: np.ndarray) -> np.ndarray:
        positions = np.zeros((len(x0), decomp.n_modes))
        positions[:, kernel] = x0
        positions[:, others] = xq
        return homotopy_field(decomp, basis, f, s, positions)[:, kernel]

    def rk4(x0: np.ndarray, y0: np.ndarray, xq: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
        def rhs(x, y):
            return y, -block.c_lambda * y + kernel_field(x, xq)

        k1 = rhs(x0, y0)
        k2 = rhs(x0 + 0.5 * h * k1[0], y0 + 0.5 * h * k1[1])
        k3 = rhs(x0 + 0.5 * h * k2[0], y0 + 0.5 * h * k2[1])
        k4 = rhs(x0 + h * k3[0], y0 + h * k3[1])
        x1 = x0 + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y1 = y0 + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        return x1, y1

    sign_violations: Dict[str, int] = {}
    flow_violations: Dict[str, int] = {}
    worst_w1 = np.inf
    worst_w2 = -np.inf
    for stratum, (w1, w2) in faces.items():
        x0, y0 = _kernel_states(block, w1, w2)
        xq = hyperbolic_positions[stratum]

        def evaluate(rows: slice):
            pg = kernel_field(x0[rows], xq[rows])
            w2_rate = -block.c_lambda * np.sum(y0[rows] ** 2, axis=1) + np.sum(pg * y0[rows], axis=1)
            w1_rate = block.a**2 * np.sum((block.c_lambda * x0[rows] + y0[rows]) * pg, axis=1)
            forward = _face_norms(block, *rk4(x0[rows], y0[rows], xq[rows], dt))
            backward = _face_norms(block, *rk4(x0[rows], y0[rows], xq[rows], -dt))
            return w1_rate, w2_rate, forward, backward

        parts = map_chunks(evaluate, n, n_jobs)
        w1_rate = np.concatenate([p[0] for p in parts])
        w2_rate = np.concatenate([p[1] for p in parts])
        fw1 = np.concatenate([p[2][0] for p in parts])
        fw2 = np.concatenate([p[2][1] for p in parts])
        bw1 = np.concatenate([p[3][0] for p in parts])
        bw2 = np.concatenate([p[3][1] for p in parts])

        bad_sign = np.zeros(n, dtype=bool)
        bad_flow = np.zeros(n, dtype=bool)
        if stratum in (Stratum.EGRESS, Stratum.BOUNCE):
            bad_sign |= outward * w1_rate <= 0
            if block.first_kind:
                bad_flow |= (fw1 <= block.R4) | (bw1 >= block.R4)
            else:
                bad_flow |= (fw1 >= block.R4) | (bw1 <= block.R4)
            worst_w1 = min(worst_w1, float(np.min(outward * w1_rate)))
        if stratum in (Stratum.INGRESS, Stratum.BOUNCE):
            bad_sign |= w2_rate >= 0
            bad_flow |= (fw2 >= block.R2) | (bw2 <= block.R2)
            worst_w2 = max(worst_w2, float(np.max(w2_rate)))
        sign_violations[stratum.value] = int(np.sum(bad_sign))
        flow_violations[stratum.value] = int(np.sum(bad_flow))

    report = BlockVerification(
        which=block.which,
        s=float(s),
        seed=seed,
        dt=dt,
        n_boundary_samples=n,
        sign_violations=sign_violations,
        flow_violations=flow_violations,
        worst_w1_rate=worst_w1,
        worst_w2_rate=worst_w2,
    )
    if report.valid:
        logger.info(f"Block verified at s = {s:g}: no violations in {3 * n} boundary samples")
    else:
        logger.warning(f"Block verification at s = {s:g} found {report.total_violations} violations")
        if raise_on_violation:
            raise BlockVerificationError(report.total_violations, s)
    return report


def _face_norms(block: IsolatingBlock, x0: np.ndarray, y0: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    w1 = block.a * (block.c_lambda * x0 + y0)
    return np.linalg.norm(w1, axis=-1), np.linalg.norm(y0, axis=-1)


def verify_block_family(
    block: IsolatingBlock,
    decomp: ResonanceDecomposition,
    basis: SpectralBasis,
    f: Nonlinearity,
    s_values: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
    **kwargs,
) -> List[BlockVerification]:
    return [verify_block(block, decomp, basis, f, s=s, **kwargs) for s in s_values]


@dataclass
class IndexReport(dbtClassMixin):
    exponent: int
    formula: str
    rendered: str
    condition_used: str
    nonempty: bool
    d_table: List[int]
    k: int
    kernel_dimension: int
    dim_e_minus: int


def conley_index(decomp: ResonanceDecomposition, which: Union[Verdict, str]) -> IndexReport:
    """Sigma^{d_k} under first-kind conditions, Sigma^{d_(k-1)} under second-kind ones."""
    verdict = Verdict(which)
    if verdict is Verdict.INCONCLUSIVE:
        raise InconclusiveConditionError("index", "no condition was certified")
    first_kind = verdict.sign > 0
    n_kernel = decomp.kernel_dimension
    exponent = decomp.d[decomp.k - 1] + (n_kernel if first_kind else 0)

    negative = int(np.sum(decomp.block_eigenvalues()[list(decomp.minus_modes)].real < 0))
    if negative + (n_kernel if first_kind else 0) != exponent:
        raise InconsistentDecompositionError(
            f"index exponent {exponent} disagrees with dim E- = {negative} plus the exit directions"
        )
    formula = "Sigma^d_k" if first_kind else "Sigma^d_(k-1)"
    logger.info(f"Conley index of K_infty: Sigma^{exponent} ({verdict.value})")
    return IndexReport(
        exponent=int(exponent),
        formula=formula,
        rendered=f"Sigma^{exponent}",
        condition_used=verdict.value,
        nonempty=True,
        d_table=list(decomp.d),
        k=decomp.k,
        kernel_dimension=n_kernel,
        dim_e_minus=decomp.dim_e_minus,
    )


@dataclass
class CensusRecord(dbtClassMixin):
    seed_index: int
    stayed: bool
    exit_time: Optional[float]
    final_Enorm: float
    max_Qnorm: float


@dataclass
class OrbitCensus(dbtClassMixin):
    records: List[CensusRecord]
    n_stayed: int
    n_exited: int
    T: float
    dt: float
    seed: int
    s: float
    R1: float
    lemma_violations: int

    @property
    def empty(self) -> bool:
        return self.n_stayed == 0


def census_seeds(
    block: IsolatingBlock, decomp: ResonanceDecomposition, n_initial: int, seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Initial states with ||Qw||_E <= R1 / (2M) and W coordinates within 90% of the box."""
    rng = np.random.default_rng(seed)
    hyperbolic = decomp.hyperbolic_mask
    X = np.where(hyperbolic, rng.standard_normal((n_initial, decomp.n_modes)), 0.0)
    Y = np.where(hyperbolic, rng.standard_normal((n_initial, decomp.n_modes)), 0.0)
    scale = decomp.e_norm(X, Y)
    scale[scale == 0] = 1.0
    radius = block.R1 / (2.0 * block.M) * rng.uniform(size=n_initial)
    X *= (radius / scale)[:, None]
    Y *= (radius / scale)[:, None]

    dim = decomp.kernel_dimension
    w1 = _ball(rng, n_initial, dim, SEED_SHRINK * block.R4)
    w2 = _ball(rng, n_initial, dim, SEED_SHRINK * block.R2)
    x0, y0 = _kernel_states(block, w1, w2)
    X[:, list(decomp.kernel_modes)] = x0
    Y[:, list(decomp.kernel_modes)] = y0
    return X, Y


def detect_bounded_orbits(
    block: IsolatingBlock,
    decomp: ResonanceDecomposition,
    basis: SpectralBasis,
    f: Nonlinearity,
    n_initial: int = 32,
    T: Optional[float] = None,
    dt: float = 1e-2,
    seed: int = 0,
    extra_states: Sequence[StateE] = (),
    s: float = 1.0,
    n_jobs: Optional[int] = None,
) -> OrbitCensus:
    """Finite-horizon census of the orbits that stay in N over [0, T]."""
    T = CENSUS_HORIZON / block.delta if T is None else T
    X0, Y0 = census_seeds(block, decomp, n_initial, seed)
    if extra_states:
        X0 = np.concatenate([X0, np.array([state.x for state in extra_states])])
        Y0 = np.concatenate([Y0, np.array([state.y for state in extra_states])])
    total = len(X0)

    def run(rows: slice):
        count = rows.stop - rows.start
        inside = np.ones(count, dtype=bool)
        exit_time = np.full(count, np.nan)
        max_q = np.zeros(count)

        def monitor(t: float, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
            now_inside = block.contains_batch(X, Y, decomp)
            still = inside & now_inside
            q = decomp.q_norm(X, Y)
            max_q[still] = np.maximum(max_q[still], q[still])
            exit_time[inside & ~now_inside] = t
            inside[:] = still
            return inside.copy()

        X, Y = integrate_batch(X0[rows], Y0[rows], T, dt, s, decomp, basis, f, monitor=monitor)
        return inside, exit_time, max_q, decomp.e_norm(X, Y)

    parts = map_chunks(run, total, n_jobs)
    inside = np.concatenate([p[0] for p in parts])
    exit_time = np.concatenate([p[1] for p in parts])
    max_q = np.concatenate([p[2] for p in parts])
    final = np.concatenate([p[3] for p in parts])

    records = [
        CensusRecord(
            seed_index=i,
            stayed=bool(inside[i]),
            exit_time=None if inside[i] else float(exit_time[i]),
            final_Enorm=float(final[i]),
            max_Qnorm=float(max_q[i]),
        )
        for i in range(total)
    ]
    lemma_violations = int(np.sum(inside & (max_q > block.R1 * (1 + BOUNDARY_TOL))))
    if lemma_violations:
        logger.warning(f"{lemma_violations} stayers exceed the bound ||Qw||_E <= R1 = {block.R1:.6g}")
    n_stayed = int(np.sum(inside))
    logger.info(f"Census over T = {T:.6g}: {n_stayed} of {total} orbits stayed in the block")
    return OrbitCensus(
        records=records,
        n_stayed=n_stayed,
        n_exited=total - n_stayed,
        T=float(T),
        dt=dt,
        seed=seed,
        s=float(s),
        R1=block.R1,
        lemma_violations=lemma_violations,
    )


def stationary_residual(
    decomp: ResonanceDecomposition, basis: SpectralBasis, f: Nonlinearity, x: np.ndarray
) -> np.ndarray:
    """(mu_i - lambda) x_i - F_i(x); batched over leading axes."""
    return decomp.mode_blocks[:, 1, 0] * x - nemitskii(basis, f, x)


def field_jacobian(basis: SpectralBasis, f: Nonlinearity, x: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian DF(x) of the Nemitskii operator in mode coordinates."""
    n = len(x)
    steps = 1e-6 * np.maximum(1.0, np.abs(x))
    shifts = np.diag(steps)
    values = nemitskii(basis, f, np.concatenate([x + shifts, x - shifts]))
    return ((values[:n] - values[n:]) / (2.0 * steps[:, None])).T


def linearization(
    decomp: ResonanceDecomposition, basis: SpectralBasis, f: Nonlinearity, x: np.ndarray
) -> np.ndarray:
    """The 2n x 2n matrix A - DF at (x, 0), ordered (x, y); w' = -L w near the equilibrium."""
    n = decomp.n_modes
    blocks = decomp.mode_blocks
    L = np.zeros((2 * n, 2 * n))
    modes = np.arange(n)
    L[modes, n + modes] = blocks[:, 0, 1]
    L[n + modes, modes] = blocks[:, 1, 0]
    L[n + modes, n + modes] = blocks[:, 1, 1]
    L[n:, :n] -= field_jacobian(basis, f, x)
    return L


@dataclass
class EquilibriumRecord(dbtClassMixin):
    x: List[float]
    residual: float
    iterations: int
    e_norm: float
    unstable_dimension: int
    linearization_real: List[float]
    linearization_imag: List[float]
    in_block: Optional[bool] = None


def equilibrium_solve(
    decomp: ResonanceDecomposition,
    basis: SpectralBasis,
    f: Nonlinearity,
    x0: Optional[np.ndarray] = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    block: Optional[IsolatingBlock] = None,
) -> EquilibriumRecord:
    """Damped Newton on the Galerkin stationary system with a finite-difference Jacobian."""
    if not tol > 0:
        raise InvalidParameterError("tol", tol, "a positive tolerance")
    x = np.zeros(decomp.n_modes) if x0 is None else np.array(x0, dtype=float)
    diagonal = np.diag(decomp.mode_blocks[:, 1, 0])

    residual = stationary_residual(decomp, basis, f, x)
    norm = float(np.linalg.norm(residual))
    iterations = 0
    while norm >= tol:
        if iterations >= max_iter:
            raise NewtonConvergenceError(iterations, norm)
        jacobian = diagonal - field_jacobian(basis, f, x)
        try:
            direction = solve(jacobian, -residual)
        except LinAlgError:
            direction = lstsq(jacobian, -residual)[0]
        damping = 1.0
        while True:
            candidate = x + damping * direction
            candidate_residual = stationary_residual(decomp, basis, f, candidate)
            candidate_norm = float(np.linalg.norm(candidate_residual))
            if candidate_norm <= (1.0 - 1e-4 * damping) * norm or damping < 1e-4:
                break
            damping *= 0.5
        x, residual, norm = candidate, candidate_residual, candidate_norm
        iterations += 1
        logger.debug(f"Newton iteration {iterations}: residual {norm:.3e}, damping {damping:g}")

    spectrum = eigvals(linearization(decomp, basis, f, x))
    scale = max(1.0, float(np.max(np.abs(spectrum))))
    unstable = int(np.sum(spectrum.real < -1e-12 * scale))
    state = StateE(x, np.zeros_like(x))
    order = np.lexsort((spectrum.imag, spectrum.real))
    logger.info(f"Equilibrium found after {iterations} Newton steps (residual {norm:.3e})")
    return EquilibriumRecord(
        x=x.tolist(),
        residual=norm,
        iterations=iterations,
        e_norm=state.e_norm(decomp),
        unstable_dimension=unstable,
        linearization_real=spectrum.real[order].tolist(),
        linearization_imag=spectrum.imag[order].tolist(),
        in_block=None if block is None else block.interior(state, decomp),
    )


LL_CLAUSES = ("i", "ii", "iii", "iv")


@dataclass
class CriterionReport(dbtClassMixin):
    verdict: str
    family: Optional[str]
    nu: float
    shifted: float
    position: Optional[int]
    resonant_at_zero: bool
    beyond_spectrum: bool
    clauses_checked: Dict[str, bool]
    clause: Optional[str]
    zero_index_exponent: Optional[int]
    k_infinity_exponent: Optional[int]
    indices_differ: Optional[bool]
    conclusion: str


def _clause_table(family: str, first_kind: bool, position: int, k: int) -> Dict[str, bool]:
    """The four clauses for LL (or SR) verdicts; position p means L_p < lambda + nu < L_(p+1)."""
    return {
        "i": first_kind and position >= 1 and position != k,
        "ii": first_kind and position == 0,
        "iii": (not first_kind) and position >= 1 and position + 1 != k,
        # the SR variant drops the requirement lambda != L_1
        "iv": (not first_kind) and position == 0 and (family == "SR" or k != 1),
    }


def connecting_orbit_criteria(
    decomp: ResonanceDecomposition,
    f: Nonlinearity,
    verdict: Union[Verdict, str],
    tol: float = 1e-8,
) -> CriterionReport:
    """Locate lambda + nu in the spectrum and walk the connecting-orbit clause table."""
    if f.nu is None:
        raise MissingAsymptoticsError(f.name, "the slope nu = D_s f(x, 0)")
    verdict = Verdict(verdict)
    levels = np.asarray(decomp.distinct_eigenvalues)
    shifted = decomp.lambda_ + f.nu
    family = verdict.value[:2] if verdict.value[:2] in ("LL", "SR") else None

    resonant = bool(np.any(np.abs(levels - shifted) <= tol * np.abs(levels)))
    position = None if resonant else int(np.sum(levels < shifted))
    beyond = position is not None and position == len(levels)
    if beyond:
        logger.warning(
            f"lambda + nu = {shifted:.6g} lies beyond the retained spectrum; raise n_modes to resolve its position"
        )

    clauses = {name: False for name in LL_CLAUSES}
    zero_exponent = None
    if position is not None and not beyond:
        zero_exponent = 0 if position == 0 else int(decomp.d[position])
        if family is not None:
            clauses = _clause_table(family, verdict.sign > 0, position, decomp.k)
    k_exponent = None
    if verdict is not Verdict.INCONCLUSIVE:
        k_exponent = int(decomp.d[decomp.k - 1] + (decomp.kernel_dimension if verdict.sign > 0 else 0))
    matched = [name for name in LL_CLAUSES if clauses[name]]
    clause = matched[0] if matched else None

    if resonant:
        conclusion = "resonant at zero - criteria inapplicable"
    elif family is None:
        conclusion = "no LL or SR verdict - criteria inapplicable"
    elif beyond:
        conclusion = "lambda + nu beyond the retained spectrum - undecided"
    elif clause is not None:
        conclusion = "nonzero orbit with w(R) in K_infty and limit 0 at one end exists"
    else:
        conclusion = "no clause applies"
    return CriterionReport(
        verdict=verdict.value,
        family=family,
        nu=float(f.nu),
        shifted=float(shifted),
        position=position,
        resonant_at_zero=resonant,
        beyond_spectrum=beyond,
        clauses_checked=clauses,
        clause=clause,
        zero_index_exponent=zero_exponent,
        k_infinity_exponent=k_exponent,
        indices_differ=None if zero_exponent is None or k_exponent is None else zero_exponent != k_exponent,
        conclusion=conclusion,
    )


@dataclass
class ProbeRecord(dbtClassMixin):
    direction: int
    sign: int
    stayed: bool
    exit_time: Optional[float]
    final_Enorm: float


@dataclass
class ProbeReport(dbtClassMixin):
    epsilon: float
    unstable_dimension: int
    records: List[ProbeRecord] = field(default_factory=list)

    @property
    def nonzero_stayers(self) -> int:
        return sum(1 for r in self.records if r.stayed and r.final_Enorm > 10 * self.epsilon)


def connecting_orbit_probe(
    block: IsolatingBlock,
    decomp: ResonanceDecomposition,
    basis: SpectralBasis,
    f: Nonlinearity,
    epsilon: float = 1e-3,
    T: Optional[float] = None,
    dt: float = 1e-2,
) -> ProbeReport:
    """Launch +-epsilon trajectories along the unstable eigenvectors of the linearization at 0.

    Numerical evidence only: a trajectory that stays in N away from 0 hints at a
    connecting orbit.
    """
    if not epsilon > 0:
        raise InvalidParameterError("probe_epsilon", epsilon, "a positive radius")
    n = decomp.n_modes
    L = linearization(decomp, basis, f, np.zeros(n))
    values, vectors = np.linalg.eig(L)
    unstable = np.flatnonzero(values.real < -1e-12 * max(1.0, float(np.max(np.abs(values)))))
    unstable = unstable[np.argsort(values[unstable].real)]

    starts, labels = [], []
    for j, index in enumerate(unstable):
        v = vectors[:, index].real
        if not np.any(v):
            v = vectors[:, index].imag
        v = v / float(decomp.e_norm(v[:n], v[n:]))
        for sign in (1, -1):
            starts.append(sign * epsilon * v)
            labels.append((j, sign))
    report = ProbeReport(epsilon=epsilon, unstable_dimension=len(unstable))
    if not starts:
        return report

    T = CENSUS_HORIZON / block.delta if T is None else T
    W = np.array(starts)
    inside = np.ones(len(W), dtype=bool)
    exit_time = np.full(len(W), np.nan)

    def monitor(t: float, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        now_inside = block.contains_batch(X, Y, decomp)
        exit_time[inside & ~now_inside] = t
        inside[:] = inside & now_inside
        return inside.copy()

    X, Y = integrate_batch(W[:, :n], W[:, n:], T, dt, 1.0, decomp, basis, f, monitor=monitor)
    final = decomp.e_norm(X, Y)
    report.records = [
        ProbeRecord(
            direction=j,
            sign=sign,
            stayed=bool(inside[i]),
            exit_time=None if inside[i] else float(exit_time[i]),
            final_Enorm=float(final[i]),
        )
        for i, (j, sign) in enumerate(labels)
    ]
    return report
