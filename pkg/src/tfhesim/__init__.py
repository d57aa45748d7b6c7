"""tfhesim: multi-bit TFHE pipeline, dedup compiler, and accelerator model."""

__version__ = "0.1.0"

from .params import PARAMETER_SETS, TfheParams, get_params  # noqa: F401
from .torus import GadgetParams  # noqa: F401
