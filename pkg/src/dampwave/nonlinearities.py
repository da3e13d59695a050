"""Built-in nonlinearities, addressable by name from a run configuration."""
import math
from typing import Callable, Dict, Optional

import numpy as np

from dampwave.exceptions import InvalidParameterError
from dampwave.semiflow import Nonlinearity, constant_field
from dampwave.spectral import ResonanceDecomposition, SpectralBasis


def _autonomous(g: Callable[[np.ndarray], np.ndarray]):
    def f(x: np.ndarray, s: np.ndarray) -> np.ndarray:
        return g(s) + np.zeros_like(x)

    return f


def _constant(value: float):
    def profile(x: np.ndarray) -> np.ndarray:
        return np.full(np.shape(x), float(value))

    return profile


def arctan() -> Nonlinearity:
    return Nonlinearity(
        name="arctan",
        f=_autonomous(np.arctan),
        lipschitz=1.0,
        bound=math.pi / 2,
        f_plus=_constant(math.pi / 2),
        f_minus=_constant(-math.pi / 2),
        f_infinity=None,
        nu=1.0,
    )


def rational_sr() -> Nonlinearity:
    """f(s) = s / (1 + s^2): vanishes at infinity, with s f(s) -> 1."""
    return Nonlinearity(
        name="rational_sr",
        f=_autonomous(lambda s: s / (1.0 + s * s)),
        lipschitz=1.0,
        bound=0.5,
        f_plus=_constant(0.0),
        f_minus=_constant(0.0),
        f_infinity=_constant(1.0),
        nu=1.0,
    )


def zero() -> Nonlinearity:
    tiny = float(np.finfo(float).tiny)
    return Nonlinearity(
        name="zero",
        f=_autonomous(np.zeros_like),
        lipschitz=tiny,
        bound=tiny,
        f_plus=_constant(0.0),
        f_minus=_constant(0.0),
        f_infinity=_constant(0.0),
        nu=0.0,
    )


def const_kernel(basis: SpectralBasis, decomp: ResonanceDecomposition, amplitude: float = 1.0) -> Nonlinearity:
    """F = amplitude * e_k: a constant forcing in the kernel direction."""
    coefficients = np.zeros(basis.n_modes)
    coefficients[decomp.kernel_modes[0]] = amplitude
    return constant_field(basis, coefficients, name="const_kernel")


BUILTINS: Dict[str, Callable[[], Nonlinearity]] = {
    "arctan": arctan,
    "neg_arctan": lambda: arctan().negated(),
    "rational_sr": rational_sr,
    "neg_rational_sr": lambda: rational_sr().negated(),
    "zero": zero,
}

NAMES = tuple(sorted(list(BUILTINS) + ["const_kernel"]))


def build_nonlinearity(
    name: str,
    basis: Optional[SpectralBasis] = None,
    decomp: Optional[ResonanceDecomposition] = None,
    scale: float = 1.0,
    amplitude: float = 1.0,
) -> Nonlinearity:
    if name == "const_kernel":
        if basis is None or decomp is None:
            raise InvalidParameterError("nonlinearity", name, "a basis and a decomposition to build on")
        if amplitude == 0:
            raise InvalidParameterError("amplitude", amplitude, "a nonzero amplitude")
        return const_kernel(basis, decomp, amplitude).scaled(scale)
    if name not in BUILTINS:
        raise InvalidParameterError("nonlinearity", name, f"one of {', '.join(NAMES)}")
    return BUILTINS[name]().scaled(scale)
