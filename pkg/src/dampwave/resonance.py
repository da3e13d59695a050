"""Numerical checks of the resonance conditions.

The geometric conditions (G1)/(G2) quantify over whole balls; here they are
certified by seeded Monte-Carlo sampling with a 0.9 safety factor on rho.  The
Landesman-Lazer (LL) and strong-resonance (SR) conditions reduce to quadratures
of the asymptotic profiles of f and are checked directly.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from dbt.adapters.events.logging import AdapterLogger
from dbt_common.dataclass_schema import StrEnum, dbtClassMixin

from dampwave.exceptions import InvalidParameterError, KernelElementError, MissingAsymptoticsError
from dampwave.semiflow import Nonlinearity, nemitskii
from dampwave.spectral import ResonanceDecomposition, SpectralBasis
from dampwave.workers import map_chunks


logger = AdapterLogger("Dampwave")

RHO_SAFETY = 0.9


class Verdict(StrEnum):
    G1 = "G1"
    G2 = "G2"
    LL1 = "LL1"
    LL2 = "LL2"
    SR1 = "SR1"
    SR2 = "SR2"
    INCONCLUSIVE = "inconclusive"

    @property
    def sign(self) -> int:
        """+1 for the first-kind conditions, -1 for the second kind, 0 if inconclusive."""
        if self is Verdict.INCONCLUSIVE:
            return 0
        return 1 if self.value.endswith("1") else -1

    def flipped(self) -> "Verdict":
        if self is Verdict.INCONCLUSIVE:
            return self
        return Verdict(self.value[:-1] + ("2" if self.sign > 0 else "1"))


@dataclass
class ConditionReport(dbtClassMixin):
    check: str
    verdict: Verdict
    margin: float
    rho: float = 0.0
    R3: Optional[float] = None
    integral: Optional[float] = None
    samples_used: int = 0
    seed: Optional[int] = None
    r_grid: List[float] = field(default_factory=list)
    b1_radius: Optional[float] = None
    b2_radius: Optional[float] = None
    worst_case: Dict[str, List[float]] = field(default_factory=dict)
    rigorous: bool = False

    @property
    def certified(self) -> bool:
        return self.verdict is not Verdict.INCONCLUSIVE


def _sign_verdict(value: float, first: Verdict, second: Verdict) -> Verdict:
    if value > 0:
        return first
    if value < 0:
        return second
    return Verdict.INCONCLUSIVE


def kernel_sphere(decomp: ResonanceDecomposition, n_sphere: int, rng: np.random.Generator) -> np.ndarray:
    """Unit vectors of the kernel coordinates; exactly {+1, -1} for a simple eigenvalue."""
    dim = decomp.kernel_dimension
    if dim == 0:
        raise KernelElementError("the decomposition has an empty kernel")
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    directions = rng.standard_normal((max(1, n_sphere // 2), dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return np.concatenate([directions, -directions])


def check_LL(
    basis: SpectralBasis,
    decomp: ResonanceDecomposition,
    f: Nonlinearity,
    n_sphere: int = 2,
    seed: int = 0,
) -> ConditionReport:
    """I(u) = int_{u>0} f_+ u + int_{u<0} f_- u over unit kernel elements u."""
    if f.f_plus is None or f.f_minus is None:
        raise MissingAsymptoticsError(f.name, "the limits f_plus and f_minus")
    rng = np.random.default_rng(seed)
    directions = kernel_sphere(decomp, n_sphere, rng)
    kernel_functions = basis.eigenvectors[list(decomp.kernel_modes)]
    u = directions @ kernel_functions

    f_plus = f.f_plus(basis.grid)
    f_minus = f.f_minus(basis.grid)
    integrand = np.where(u > 0, f_plus * u, 0.0) + np.where(u < 0, f_minus * u, 0.0)
    integrals = integrand @ basis.quadrature_weights

    low, high = float(np.min(integrals)), float(np.max(integrals))
    if low > 0:
        verdict = Verdict.LL1
    elif high < 0:
        verdict = Verdict.LL2
    else:
        verdict = Verdict.INCONCLUSIVE
    worst = int(np.argmin(np.abs(integrals)))
    margin = float(np.min(np.abs(integrals))) if verdict is not Verdict.INCONCLUSIVE else 0.0
    logger.info(f"LL check for {f.name}: {verdict.value} (margin {margin:.6g})")
    return ConditionReport(
        check="LL",
        verdict=verdict,
        margin=margin,
        rho=RHO_SAFETY * margin,
        integral=float(integrals[worst]),
        samples_used=len(directions),
        seed=seed,
        worst_case={"direction": directions[worst].tolist(), "integral": [float(integrals[worst])]},
    )


def check_SR(
    basis: SpectralBasis,
    f: Nonlinearity,
    s_min: float = 1e-3,
    s_max: float = 1e6,
    n_s: int = 64,
) -> ConditionReport:
    """Sign of int f_infinity, with the minorant (or majorant) of f(x, s) s checked on a log grid."""
    if f.f_infinity is None:
        raise MissingAsymptoticsError(f.name, "the limit f_infinity of f(x, s) s")
    integral = float(f.f_infinity(basis.grid) @ basis.quadrature_weights)

    magnitudes = np.geomspace(s_min, s_max, n_s)
    s = np.concatenate([-magnitudes[::-1], magnitudes])
    products = f(basis.grid[:, None], s[None, :]) * s[None, :]
    lower = np.min(products, axis=1)
    upper = np.max(products, axis=1)

    verdict = _sign_verdict(integral, Verdict.SR1, Verdict.SR2)
    if verdict is Verdict.SR1 and not np.all(np.isfinite(lower)):
        verdict = Verdict.INCONCLUSIVE
    if verdict is Verdict.SR2 and not np.all(np.isfinite(upper)):
        verdict = Verdict.INCONCLUSIVE
    margin = abs(integral) if verdict is not Verdict.INCONCLUSIVE else 0.0
    envelope = lower if verdict is Verdict.SR1 else upper
    logger.info(f"SR check for {f.name}: {verdict.value} (integral {integral:.6g})")
    return ConditionReport(
        check="SR",
        verdict=verdict,
        margin=margin,
        rho=RHO_SAFETY * margin,
        integral=integral,
        samples_used=len(s) * basis.n_grid,
        worst_case={
            "envelope_integral": [float(envelope @ basis.quadrature_weights)],
            "envelope_min": [float(np.min(envelope))],
        },
    )


def default_r_grid(r_min: float = 1.0, r_max: float = 1e3, n_points: int = 16) -> np.ndarray:
    return np.geomspace(r_min, r_max, n_points)


def _ball_samples(
    rng: np.random.Generator, n: int, weights: np.ndarray, radius: float
) -> np.ndarray:
    """Uniform samples of the ball {sum (w_i y_i)^2 <= radius^2}."""
    dim = len(weights)
    if dim == 0:
        return np.zeros((n, 0))
    directions = rng.standard_normal((n, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(size=n) ** (1.0 / dim)
    return directions * radii[:, None] / weights


def check_G(
    basis: SpectralBasis,
    decomp: ResonanceDecomposition,
    f: Nonlinearity,
    B1_radius: float,
    B2_radius: float,
    R_grid: Optional[Sequence[float]] = None,
    n_samples: int = 1000,
    seed: int = 0,
    n_jobs: Optional[int] = None,
) -> ConditionReport:
    """Sample D = <F(R xhat + y), R xhat> + <F(R xhat + y), z> over the balls for each R.

    G1 is certified at the smallest R with min D > 0 over all samples, G2 at the
    smallest R with max D < 0.  Samples are drawn once, independently of R_grid.
    """
    if not (B1_radius > 0 and B2_radius > 0):
        raise InvalidParameterError("radii", (B1_radius, B2_radius), "positive ball radii")
    r_grid = default_r_grid() if R_grid is None else np.asarray(R_grid, dtype=float)
    if r_grid.size == 0 or np.any(r_grid <= 0) or np.any(np.diff(r_grid) <= 0):
        raise InvalidParameterError("R_grid", list(r_grid), "a nonempty increasing grid of positive radii")
    if n_samples < 1:
        raise InvalidParameterError("n_samples", n_samples, "a positive sample count")

    rng = np.random.default_rng(seed)
    kernel = list(decomp.kernel_modes)
    others = list(np.flatnonzero(decomp.hyperbolic_mask))
    dim = decomp.kernel_dimension
    if dim == 0:
        raise KernelElementError("the decomposition has an empty kernel")

    y = _ball_samples(rng, n_samples, decomp.alpha_weights[others], B1_radius)
    z = _ball_samples(rng, n_samples, np.ones(dim), B2_radius)
    if dim == 1:
        x_hat = np.where(np.arange(n_samples) % 2 == 0, 1.0, -1.0)[:, None]
    else:
        x_hat = rng.standard_normal((n_samples, dim))
        x_hat /= np.linalg.norm(x_hat, axis=1, keepdims=True)

    def evaluate(rows: slice) -> np.ndarray:
        values = np.empty((len(r_grid), rows.stop - rows.start))
        positions = np.zeros((rows.stop - rows.start, decomp.n_modes))
        positions[:, others] = y[rows]
        for j, R in enumerate(r_grid):
            positions[:, kernel] = R * x_hat[rows]
            F_kernel = nemitskii(basis, f, positions)[:, kernel]
            values[j] = np.sum(F_kernel * (R * x_hat[rows] + z[rows]), axis=1)
        return values

    D = np.concatenate(map_chunks(evaluate, n_samples, n_jobs), axis=1)
    lows = np.min(D, axis=1)
    highs = np.max(D, axis=1)

    verdict = Verdict.INCONCLUSIVE
    index = None
    for j in range(len(r_grid)):
        if lows[j] > 0:
            verdict, index = Verdict.G1, j
            break
        if highs[j] < 0:
            verdict, index = Verdict.G2, j
            break

    if index is None:
        slack = np.maximum(lows, -highs)
        index = int(np.argmax(slack))
        margin = float(slack[index])
        rho, R3 = 0.0, None
    else:
        margin = float(lows[index]) if verdict is Verdict.G1 else float(-highs[index])
        rho, R3 = RHO_SAFETY * margin, float(r_grid[index])

    worst = int(np.argmin(D[index])) if verdict is not Verdict.G2 else int(np.argmax(D[index]))
    if verdict is Verdict.INCONCLUSIVE:
        logger.info(f"G check for {f.name}: inconclusive on the R grid (best slack {margin:.6g})")
    else:
        logger.info(f"G check for {f.name}: {verdict.value} at R3 = {R3:.6g}, rho = {rho:.6g}")
        logger.warning("The G certificate is a sampled estimate, not a rigorous bound")
    return ConditionReport(
        check="G",
        verdict=verdict,
        margin=margin,
        rho=rho,
        R3=R3,
        samples_used=n_samples,
        seed=seed,
        r_grid=[float(R) for R in r_grid],
        b1_radius=float(B1_radius),
        b2_radius=float(B2_radius),
        worst_case={
            "R": [float(r_grid[index])],
            "x_hat": x_hat[worst].tolist(),
            "y": y[worst].tolist(),
            "z": z[worst].tolist(),
            "D": [float(D[index, worst])],
        },
    )


def condition_verdict(
    basis: SpectralBasis,
    decomp: ResonanceDecomposition,
    f: Nonlinearity,
    B1_radius: Optional[float] = None,
    B2_radius: Optional[float] = None,
    R_grid: Optional[Sequence[float]] = None,
    n_samples: int = 1000,
    n_sphere: int = 2,
    seed: int = 0,
    n_jobs: Optional[int] = None,
) -> List[ConditionReport]:
    """Run every check the nonlinearity supports: LL if f_plus/f_minus exist, SR if f_infinity
    exists, G if ball radii are given."""
    reports = []
    if f.f_plus is not None and f.f_minus is not None:
        reports.append(check_LL(basis, decomp, f, n_sphere=n_sphere, seed=seed))
    if f.f_infinity is not None:
        reports.append(check_SR(basis, f))
    if B1_radius is not None and B2_radius is not None:
        reports.append(
            check_G(basis, decomp, f, B1_radius, B2_radius, R_grid, n_samples=n_samples, seed=seed, n_jobs=n_jobs)
        )
    return reports


def decisive_verdict(reports: Sequence[ConditionReport]) -> Verdict:
    """The G verdict when certified, otherwise the first certified LL/SR verdict."""
    for report in reports:
        if report.check == "G" and report.certified:
            return report.verdict
    for report in reports:
        if report.certified:
            return report.verdict
    return Verdict.INCONCLUSIVE
