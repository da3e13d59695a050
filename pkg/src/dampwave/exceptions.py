from typing import Any, Iterable, Optional

from dbt_common.exceptions import (
    DbtConfigError,
    DbtInternalError,
    DbtRuntimeError,
    DbtValidationError,
)


class EllipticityError(DbtValidationError):
    def __init__(self, minimum: float, ellipticity: float) -> None:
        self.minimum = minimum
        self.ellipticity = ellipticity
        super().__init__(msg=self.get_message())

    def get_message(self) -> str:
        return (
            f"Coefficient is not uniformly elliptic: min a(x) = {self.minimum!r} "
            f"is below the ellipticity constant {self.ellipticity!r}"
        )


class EigensolverError(DbtRuntimeError):
    def __init__(self, reason: str) -> None:
        self.reason = reason
        super().__init__(msg=self.get_message())

    def get_message(self) -> str:
        return f"Tridiagonal eigensolver failed: {self.reason}"


class InvalidParameterError(DbtValidationError):
    def __init__(self, name: str, value: Any, expected: str) -> None:
        self.name = name
        self.value = value
        self.expected = expected
        super().__init__(msg=self.get_message())

    def get_message(self) -> str:
        return f"Invalid value for {self.name}: got {self.value!r}, expected {self.expected}"


class NonResonantError(DbtValidationError):
    def __init__(self, lam: float, nearest: float, tol: float) -> None:
        self.lam = lam
        self.nearest = nearest
        self.tol = tol
        super().__init__(msg=self.get_message())

    def get_message(self) -> str:
        return (
            f"non-resonant lambda: {self.lam!r} is not within relative tolerance {self.tol!r} "
            f"of any retained eigenvalue (nearest {self.nearest!r}). "
            "The non-resonant regime is not handled by this tool; select lambda by eigenvalue index."
        )


class AmbiguousResonanceError(DbtValidationError):
    def __init__(self, lam: float, candidates: Iterable[int]) -> None:
        self.lam = lam
        self.candidates = list(candidates)
        super().__init__(msg=self.get_message())

    def get_message(self) -> str:
        indices = ", ".join(str(i) for i in self.candidates)
        return (
            f"Ambiguous resonance: lambda = {self.lam!r} is within tolerance of "
            f"several distinct eigenvalues (indices {indices}); tighten tol"
        )


class InconsistentDecompositionError(DbtInternalError):
    def __init__(self, detail: str) -> None:
        self.detail = detail
        super().__init__(msg=self.get_message())

    def get_message(self) -> str:
        return f"Inconsistent resonance decomposition: {self.detail}"


class KernelElementError(DbtValidationError):
    def __init__(self, detail: str) -> None:
        self.detail = detail
        super().__init__(msg=self.get_message())

    def get_message(self) -> str:
        return f"Invalid kernel element: {self.detail}"


class MissingAsymptoticsError(DbtValidationError):
    def __init__(self, nonlinearity: str, missing: str) -> None:
        self.nonlinearity = nonlinearity
        self.missing = missing
        super().__init__(msg=self.get_message())

    def get_message(self) -> str:
        return f"Nonlinearity '{self.nonlinearity}' does not provide {self.missing}"


class NonlinearityConditionError(DbtValidationError):
    def __init__(self, nonlinearity: str, condition: str, worst: float) -> None:
        self.nonlinearity = nonlinearity
        self.condition = condition
        self.worst = worst
        super().__init__(msg=self.get_message())

    def get_message(self) -> str:
        return (
            f"Nonlinearity '{self.nonlinearity}' violates {self.condition} on sampled points "
            f"(worst excess {self.worst!r})"
        )


class StepSizeError(DbtRuntimeError):
    def __init__(self, dt: float, halvings: int) -> None:
        self.dt = dt
        self.halvings = halvings
        super().__init__(msg=self.get_message())

    def get_message(self) -> str:
        return (
            f"Predictor diverged with dt = {self.dt!r} after {self.halvings} step halvings; "
            "reduce dt"
        )


class NewtonConvergenceError(DbtRuntimeError):
    def __init__(self, iterations: int, residual: float) -> None:
        self.iterations = iterations
        self.residual = residual
        super().__init__(msg=self.get_message())

    def get_message(self) -> str:
        return (
            f"Damped Newton did not converge after {self.iterations} iterations "
            f"(residual {self.residual!r})"
        )


class InconclusiveConditionError(DbtRuntimeError):
    def __init__(self, check: str, detail: Optional[str] = None) -> None:
        self.check = check
        self.detail = detail
        super().__init__(msg=self.get_message())

    def get_message(self) -> str:
        msg = f"Condition check {self.check} is inconclusive"
        if self.detail:
            msg += f": {self.detail}"
        return msg


class BlockConstructionError(DbtRuntimeError):
    def __init__(self, detail: str) -> None:
        self.detail = detail
        super().__init__(msg=self.get_message())

    def get_message(self) -> str:
        return f"Could not construct the isolating block: {self.detail}"


class BlockVerificationError(DbtRuntimeError):
    def __init__(self, violations: int, s: float) -> None:
        self.violations = violations
        self.s = s
        super().__init__(msg=self.get_message())

    def get_message(self) -> str:
        return (
            f"Block invalid at this sampling resolution: {self.violations} boundary "
            f"violations at s = {self.s!r}; enlarge the R grid"
        )


class RunConfigError(DbtConfigError):
    def __init__(self, detail: str, path: Optional[str] = None) -> None:
        self.detail = detail
        super().__init__(msg=self.get_message(), path=path)

    def get_message(self) -> str:
        return f"Invalid run configuration: {self.detail}"
