"""Small-noise large deviations for stochastic reaction-diffusion equations:
noise construction, mild solvers, skeleton equations and numerical checks."""

from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .grid import Control, Field, GridSpec
from .kernel import KernelModel, heat_kernel
from .noise import BasisSpec
from .presets import get_preset, list_presets

__all__ = ["BasisSpec", "Control", "Field", "GridSpec", "KernelModel", "__version__",
           "get_preset", "heat_kernel", "list_presets"]
