"""Nemitskii operator, homotopy family and time integration of the damped wave system.

In eigen-coordinates every mode pair w_i = (x_i, y_i) obeys

    x_i' = y_i
    y_i' = -(mu_i - lambda) x_i - c mu_i y_i + G_i(s, x)

i.e. w_i' = -B_i w_i + (0, G_i).  The linear part is integrated exactly by the
2x2 block exponentials; the nonlinear part enters through a second-order
exponential Runge-Kutta quadrature of the variation-of-constants formula.
"""
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from dbt.adapters.events.logging import AdapterLogger
from dbt_common.dataclass_schema import dbtClassMixin
from scipy.linalg import expm

from dampwave.exceptions import (
    InvalidParameterError,
    KernelElementError,
    NonlinearityConditionError,
    StepSizeError,
)
from dampwave.spectral import ResonanceDecomposition, SpectralBasis, fractional_norm


logger = AdapterLogger("Dampwave")

ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]
Profile = Callable[[np.ndarray], np.ndarray]

# a predicted state larger than this (relative to the current one) counts as divergence
DIVERGENCE_FACTOR = 1e8
KERNEL_SPAN_TOL = 1e-10
SLOPE_TOLERANCE = 1e-3


def _negate(profile: Optional[Profile]) -> Optional[Profile]:
    if profile is None:
        return None
    return lambda x: -profile(x)


def _scale(profile: Optional[Profile], factor: float) -> Optional[Profile]:
    if profile is None:
        return None
    return lambda x: factor * profile(x)


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """A bounded, globally Lipschitz f(x, s) together with its known asymptotics.

    f is called with grid positions x and values s that broadcast against each
    other.  f_plus/f_minus are the limits s -> +-inf, f_infinity the limit of
    f(x, s) s, and nu the slope D_s f(x, 0) (only meaningful when f(x, 0) = 0).
    """

    name: str
    f: ScalarField
    lipschitz: float
    bound: float
    f_plus: Optional[Profile] = None
    f_minus: Optional[Profile] = None
    f_infinity: Optional[Profile] = None
    nu: Optional[float] = None

    def __post_init__(self):
        if not self.lipschitz > 0:
            raise InvalidParameterError("lipschitz", self.lipschitz, "a positive constant")
        if not self.bound > 0:
            raise InvalidParameterError("bound", self.bound, "a positive constant")

    def __call__(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        return self.f(x, s)

    def negated(self) -> "Nonlinearity":
        f = self.f
        name = self.name[4:] if self.name.startswith("neg_") else f"neg_{self.name}"
        return Nonlinearity(
            name=name,
            f=lambda x, s: -f(x, s),
            lipschitz=self.lipschitz,
            bound=self.bound,
            # the limits of -f at +inf and -inf are the negated limits of f
            f_plus=_negate(self.f_plus),
            f_minus=_negate(self.f_minus),
            f_infinity=_negate(self.f_infinity),
            nu=None if self.nu is None else -self.nu,
        )

    def scaled(self, factor: float) -> "Nonlinearity":
        if not factor > 0:
            raise InvalidParameterError("scale", factor, "a positive factor")
        if factor == 1.0:
            return self
        f = self.f
        return Nonlinearity(
            name=self.name,
            f=lambda x, s: factor * f(x, s),
            lipschitz=factor * self.lipschitz,
            bound=factor * self.bound,
            f_plus=_scale(self.f_plus, factor),
            f_minus=_scale(self.f_minus, factor),
            f_infinity=_scale(self.f_infinity, factor),
            nu=None if self.nu is None else factor * self.nu,
        )

    def check_conditions(
        self, grid: np.ndarray, n_samples: int = 1000, seed: int = 0, s_range: float = 1e3
    ) -> None:
        """Sample the bound, Lipschitz and f(x, 0) = 0 conditions; raise on the first violation."""
        rng = np.random.default_rng(seed)
        x = rng.choice(grid, size=n_samples)
        s1 = rng.uniform(-s_range, s_range, size=n_samples)
        # half the pairs close together, half far apart
        gap = np.where(np.arange(n_samples) % 2 == 0, 1e-3, s_range) * rng.standard_normal(n_samples)
        s2 = s1 + gap

        values = np.asarray(self.f(x, s1), dtype=float)
        excess = float(np.max(np.abs(values) - self.bound))
        if excess > 1e-12 * self.bound:
            raise NonlinearityConditionError(self.name, "the bound |f| <= m", excess)

        slope_excess = np.abs(values - self.f(x, s2)) - self.lipschitz * np.abs(s1 - s2)
        worst = float(np.max(slope_excess))
        if worst > 1e-9 * self.lipschitz * s_range + 1e-14:
            raise NonlinearityConditionError(self.name, "the Lipschitz bound", worst)

        if self.nu is not None:
            at_zero = float(np.max(np.abs(self.f(grid, np.zeros_like(grid)))))
            if at_zero > 1e-14 * self.bound:
                raise NonlinearityConditionError(self.name, "f(x, 0) = 0", at_zero)
            h = 1e-6
            derivative = (self.f(grid, np.full_like(grid, h)) - self.f(grid, np.full_like(grid, -h))) / (2 * h)
            mismatch = float(np.max(np.abs(derivative - self.nu)))
            if mismatch > 1e-4 * max(1.0, abs(self.nu)):
                raise NonlinearityConditionError(self.name, "D_s f(x, 0) = nu", mismatch)


@dataclass(frozen=True, eq=False)
class StateE:
    """A phase-space point: position coefficients x and velocity coefficients y."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise InvalidParameterError("state", (x.shape, y.shape), "two coefficient vectors of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidParameterError("state", "non-finite", "finite coefficients")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def zeros(cls, n_modes: int) -> "StateE":
        return cls(np.zeros(n_modes), np.zeros(n_modes))

    def e_norm(self, decomp: ResonanceDecomposition) -> float:
        return float(decomp.e_norm(self.x, self.y))

    def q_norm(self, decomp: ResonanceDecomposition) -> float:
        return float(decomp.q_norm(self.x, self.y))

    def h_norms(self) -> Tuple[float, float]:
        return float(np.linalg.norm(self.x)), float(np.linalg.norm(self.y))

    def fractional_norm(self, basis: SpectralBasis, alpha: float) -> float:
        return fractional_norm(self.x, alpha, basis)


@dataclass(frozen=True, eq=False)
class KernelCoords:
    w1: np.ndarray
    w2: np.ndarray

    @property
    def w1_norm(self) -> float:
        return float(np.linalg.norm(self.w1))

    @property
    def w2_norm(self) -> float:
        return float(np.linalg.norm(self.w2))


def w_coordinates(
    decomp: ResonanceDecomposition, x: np.ndarray, y: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Batched W chart: (w1, w2) with shape (..., kernel_dimension)."""
    kernel = list(decomp.kernel_modes)
    x0 = np.asarray(x)[..., kernel]
    y0 = np.asarray(y)[..., kernel]
    return decomp.a * (decomp.c_lambda * x0 + y0), y0


def kernel_coordinates(decomp: ResonanceDecomposition, state: StateE) -> KernelCoords:
    w1, w2 = w_coordinates(decomp, state.x, state.y)
    return KernelCoords(w1=w1, w2=w2)


def state_from_kernel_coordinates(decomp: ResonanceDecomposition, coords: KernelCoords) -> StateE:
    """Inverse W chart: the point of E_0 with the given (w1, w2)."""
    w1 = np.asarray(coords.w1, dtype=float)
    w2 = np.asarray(coords.w2, dtype=float)
    if w1.shape != (decomp.kernel_dimension,) or w2.shape != w1.shape:
        raise KernelElementError(
            f"expected {decomp.kernel_dimension} kernel coordinates, got {w1.shape} and {w2.shape}"
        )
    x = np.zeros(decomp.n_modes)
    y = np.zeros(decomp.n_modes)
    kernel = list(decomp.kernel_modes)
    x[kernel] = (w1 / decomp.a - w2) / decomp.c_lambda
    y[kernel] = w2
    return StateE(x, y)


def nemitskii(basis: SpectralBasis, f: Nonlinearity, x: np.ndarray) -> np.ndarray:
    """F_i(x) = <f(., u), e_i> with u = sum x_i e_i, by trapezoidal quadrature; batched over rows."""
    u = np.asarray(x, dtype=float) @ basis.eigenvectors
    values = f(basis.grid, u)
    return (values * basis.quadrature_weights) @ basis.eigenvectors.T


def homotopy_field(
    decomp: ResonanceDecomposition,
    basis: SpectralBasis,
    f: Nonlinearity,
    s: float,
    x: np.ndarray,
) -> np.ndarray:
    """G(s, x) = P F(sQx + Px) + s Q F(sQx + Px)."""
    if not 0.0 <= s <= 1.0:
        raise InvalidParameterError("s", s, "a homotopy parameter in [0, 1]")
    kernel = decomp.kernel_mask
    field = nemitskii(basis, f, np.where(kernel, x, s * np.asarray(x)))
    return np.where(kernel, field, s * field)


def constant_field(basis: SpectralBasis, coefficients: np.ndarray, name: str = "const_kernel") -> Nonlinearity:
    """f(x, s) = y0(x) for the grid function y0 with the given mode coefficients."""
    grid = basis.grid
    values = basis.synthesize(np.asarray(coefficients, dtype=float))

    def profile(x: np.ndarray) -> np.ndarray:
        return np.interp(x, grid, values)

    def f(x: np.ndarray, s: np.ndarray) -> np.ndarray:
        return profile(x) + np.zeros_like(s)

    eps = float(np.finfo(float).eps)
    return Nonlinearity(
        name=name,
        f=f,
        lipschitz=eps,
        bound=max(float(np.max(np.abs(values))), eps),
        f_plus=profile,
        f_minus=profile,
    )


def _phi_blocks(blocks: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """exp(-B h), phi_1(-B h), phi_2(-B h) per mode from one batched 6x6 exponential."""
    n = len(blocks)
    identity = np.eye(2)
    augmented = np.zeros((n, 6, 6))
    augmented[:, 0:2, 0:2] = -blocks * h
    augmented[:, 0:2, 2:4] = identity
    augmented[:, 2:4, 4:6] = identity
    top = expm(augmented)[:, 0:2, :]
    return top[:, :, 0:2], top[:, :, 2:4], top[:, :, 4:6]


@dataclass(frozen=True, eq=False)
class Propagator:
    dt: float
    full: np.ndarray
    half: np.ndarray
    # weights of the forcing (0, G) in the predictor and in the final update, shape (n_modes, 2)
    half_forcing: np.ndarray
    start_weight: np.ndarray
    midpoint_weight: np.ndarray

    @classmethod
    def build(cls, decomp: ResonanceDecomposition, dt: float) -> "Propagator":
        full, phi1, phi2 = _phi_blocks(decomp.mode_blocks, dt)
        half, phi1_half, _ = _phi_blocks(decomp.mode_blocks, 0.5 * dt)
        return cls(
            dt=dt,
            full=full,
            half=half,
            half_forcing=0.5 * dt * phi1_half[:, :, 1],
            start_weight=dt * (phi1 - 2.0 * phi2)[:, :, 1],
            midpoint_weight=2.0 * dt * phi2[:, :, 1],
        )


class ExponentialIntegrator:
    """Exponential Runge-Kutta stepper with a midpoint predictor and a step-halving monitor."""

    def __init__(
        self,
        decomp: ResonanceDecomposition,
        basis: SpectralBasis,
        f: Nonlinearity,
        s: float,
        dt: float,
        max_halvings: int = 4,
    ) -> None:
        if not dt > 0:
            raise InvalidParameterError("dt", dt, "a positive time step")
        if not 0.0 <= s <= 1.0:
            raise InvalidParameterError("s", s, "a homotopy parameter in [0, 1]")
        self.decomp = decomp
        self.basis = basis
        self.f = f
        self.s = float(s)
        self.dt = float(dt)
        self.max_halvings = max_halvings
        self._propagators: Dict[int, Propagator] = {}

    def propagator(self, level: int = 0) -> Propagator:
        if level not in self._propagators:
            self._propagators[level] = Propagator.build(self.decomp, self.dt / 2**level)
        return self._propagators[level]

    def field(self, x: np.ndarray) -> np.ndarray:
        return homotopy_field(self.decomp, self.basis, self.f, self.s, x)

    def advance(self, W: np.ndarray) -> np.ndarray:
        """One step of size dt for a batch W of shape (batch, n_modes, 2)."""
        return self._advance(W, 0)

    def _advance(self, W: np.ndarray, level: int) -> np.ndarray:
        result = self._attempt(W, self.propagator(level))
        if result is not None:
            return result
        if level >= self.max_halvings:
            raise StepSizeError(self.dt, level)
        logger.debug(f"Predictor diverged at dt = {self.dt / 2**level:.3g}, halving")
        return self._advance(self._advance(W, level + 1), level + 1)

    def _attempt(self, W: np.ndarray, prop: Propagator) -> Optional[np.ndarray]:
        limit = DIVERGENCE_FACTOR * (1.0 + np.max(np.abs(W)))
        g0 = self.field(W[..., 0])
        predicted = np.einsum("nij,bnj->bni", prop.half, W) + prop.half_forcing * g0[..., None]
        if not np.all(np.isfinite(predicted)) or np.max(np.abs(predicted)) > limit:
            return None
        gm = self.field(predicted[..., 0])
        updated = (
            np.einsum("nij,bnj->bni", prop.full, W)
            + prop.start_weight * g0[..., None]
            + prop.midpoint_weight * gm[..., None]
        )
        if not np.all(np.isfinite(updated)) or np.max(np.abs(updated)) > limit:
            return None
        return updated


def step_count(T: float, dt: float) -> int:
    ratio = T / dt
    nearest = round(ratio)
    if nearest >= 1 and abs(ratio - nearest) <= 1e-9 * ratio:
        return int(nearest)
    return max(1, math.ceil(ratio))


def step(
    state: StateE,
    dt: float,
    s: float,
    decomp: ResonanceDecomposition,
    basis: SpectralBasis,
    f: Nonlinearity,
) -> StateE:
    integrator = ExponentialIntegrator(decomp, basis, f, s, dt)
    W = integrator.advance(np.stack([state.x, state.y], axis=-1)[None])
    return StateE(W[0, :, 0], W[0, :, 1])


Monitor = Callable[[float, np.ndarray, np.ndarray], Optional[np.ndarray]]


def integrate_batch(
    X0: np.ndarray,
    Y0: np.ndarray,
    T: float,
    dt: float,
    s: float,
    decomp: ResonanceDecomposition,
    basis: SpectralBasis,
    f: Nonlinearity,
    monitor: Optional[Monitor] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Advance a batch of initial states (rows of X0, Y0) to time T.

    monitor(t, X, Y) is called at t = 0 and after every step; when it returns a
    boolean row mask, rows outside the mask are frozen from then on.
    """
    if not T > 0:
        raise InvalidParameterError("T", T, "a positive time horizon")
    n_steps = step_count(T, dt)
    integrator = ExponentialIntegrator(decomp, basis, f, s, T / n_steps)
    W = np.stack([np.asarray(X0, dtype=float), np.asarray(Y0, dtype=float)], axis=-1)
    active = np.ones(len(W), dtype=bool)

    def observe(t: float) -> None:
        nonlocal active
        if monitor is None:
            return
        mask = monitor(t, W[..., 0], W[..., 1])
        if mask is not None:
            active = active & np.asarray(mask, dtype=bool)

    observe(0.0)
    for n in range(1, n_steps + 1):
        if not np.any(active):
            break
        W[active] = integrator.advance(W[active])
        observe(n * integrator.dt)
    return W[..., 0].copy(), W[..., 1].copy()


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    s: float
    e_norm: np.ndarray
    q_norm: np.ndarray
    u_norm: np.ndarray
    v_norm: np.ndarray
    w1_norm: np.ndarray
    w2_norm: np.ndarray
    phi_functional: np.ndarray

    @property
    def states(self) -> List[StateE]:
        return [StateE(x, y) for x, y in zip(self.x, self.y)]

    @property
    def final_state(self) -> StateE:
        return StateE(self.x[-1], self.y[-1])

    def kernel_coordinates(self, decomp: ResonanceDecomposition) -> List[KernelCoords]:
        return [kernel_coordinates(decomp, state) for state in self.states]


def integrate(
    state: StateE,
    T: float,
    dt: float,
    s: float,
    decomp: ResonanceDecomposition,
    basis: SpectralBasis,
    f: Nonlinearity,
    sample_every: int = 1,
    probe_direction: Optional[np.ndarray] = None,
) -> Trajectory:
    """Integrate one initial state, recording a sample every sample_every steps.

    phi_functional is c lambda <x, yhat> + <y, yhat>; yhat defaults to the
    first kernel eigenfunction.
    """
    if sample_every < 1:
        raise InvalidParameterError("sample_every", sample_every, "a positive integer")
    if probe_direction is None:
        probe_direction = np.zeros(decomp.n_modes)
        probe_direction[decomp.kernel_modes[0]] = 1.0
    probe_direction = np.asarray(probe_direction, dtype=float)

    n_steps = step_count(T, dt) if T > 0 else 0
    times: List[float] = []
    xs: List[np.ndarray] = []
    ys: List[np.ndarray] = []
    counter = {"step": 0}

    def record(t: float, X: np.ndarray, Y: np.ndarray) -> None:
        index = counter["step"]
        if index % sample_every == 0 or index == n_steps:
            times.append(t)
            xs.append(X[0].copy())
            ys.append(Y[0].copy())
        counter["step"] = index + 1

    integrate_batch(state.x[None], state.y[None], T, dt, s, decomp, basis, f, monitor=record)

    x = np.array(xs)
    y = np.array(ys)
    w1, w2 = w_coordinates(decomp, x, y)
    return Trajectory(
        times=np.array(times),
        x=x,
        y=y,
        s=float(s),
        e_norm=decomp.e_norm(x, y),
        q_norm=decomp.q_norm(x, y),
        u_norm=np.linalg.norm(x, axis=-1),
        v_norm=np.linalg.norm(y, axis=-1),
        w1_norm=np.linalg.norm(w1, axis=-1),
        w2_norm=np.linalg.norm(w2, axis=-1),
        phi_functional=decomp.c_lambda * (x @ probe_direction) + y @ probe_direction,
    )


def rk4_reference(
    state: StateE,
    T: float,
    dt: float,
    s: float,
    decomp: ResonanceDecomposition,
    basis: SpectralBasis,
    f: Nonlinearity,
) -> StateE:
    """Classical fourth-order Runge-Kutta on the full Galerkin system; an oracle for small dt."""
    blocks = decomp.mode_blocks

    def rhs(W: np.ndarray) -> np.ndarray:
        forcing = np.zeros_like(W)
        forcing[:, 1] = homotopy_field(decomp, basis, f, s, W[:, 0])
        return -np.einsum("nij,nj->ni", blocks, W) + forcing

    n_steps = step_count(T, dt)
    h = T / n_steps
    W = np.stack([state.x, state.y], axis=-1)
    for _ in range(n_steps):
        k1 = rhs(W)
        k2 = rhs(W + 0.5 * h * k1)
        k3 = rhs(W + 0.5 * h * k2)
        k4 = rhs(W + h * k3)
        W = W + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return StateE(W[:, 0], W[:, 1])


@dataclass
class SlopeReport(dbtClassMixin):
    slope: float
    expected: float
    relative_error: float
    window_start: float
    window_end: float
    y0_norm: float
    unbounded: bool


def divergence_probe(
    decomp: ResonanceDecomposition,
    basis: SpectralBasis,
    y0: np.ndarray,
    state0: Optional[StateE] = None,
    T: float = 10.0,
    dt: float = 1e-2,
) -> SlopeReport:
    """Integrate with F = y0 and fit the growth rate of c lambda <u_0, y0> + <v_0, y0>.

    For a nonzero kernel element y0 the functional grows like t |y0|^2 from any
    initial state, so no orbit of this field is bounded.
    """
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (decomp.n_modes,):
        raise KernelElementError(f"expected {decomp.n_modes} coefficients, got shape {y0.shape}")
    norm = float(np.linalg.norm(y0))
    if norm == 0.0:
        raise KernelElementError("y0 is zero")
    leak = float(np.linalg.norm(y0[decomp.hyperbolic_mask]))
    if leak > KERNEL_SPAN_TOL * norm:
        raise KernelElementError(f"y0 is not in the kernel span (off-kernel part {leak:.3g})")

    state0 = StateE.zeros(decomp.n_modes) if state0 is None else state0
    field = constant_field(basis, y0)
    trajectory = integrate(state0, T, dt, 1.0, decomp, basis, field, probe_direction=y0)

    window = trajectory.times >= 0.5 * T
    slope = float(np.polyfit(trajectory.times[window], trajectory.phi_functional[window], 1)[0])
    expected = norm**2
    relative_error = abs(slope - expected) / expected
    logger.debug(f"Divergence probe slope {slope:.12g} (expected {expected:.12g})")
    return SlopeReport(
        slope=slope,
        expected=expected,
        relative_error=relative_error,
        window_start=float(trajectory.times[window][0]),
        window_end=float(trajectory.times[-1]),
        y0_norm=norm,
        unbounded=bool(slope > 0 and relative_error <= SLOPE_TOLERANCE),
    )
