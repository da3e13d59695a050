from dampwave.__version__ import version as __version__
from dampwave.config import RunConfig, load_config
from dampwave.resonance import Verdict
from dampwave.semiflow import Nonlinearity, StateE
from dampwave.spectral import EllipticOperator1D, build_basis, decompose
