"""Rate functions, Laplace functionals, the variational representation and the
change-of-measure check."""

from .girsanov import GirsanovResult, girsanov_check
from .laplace import LaplaceEstimate, LaplaceSpec, laplace_functional, verify_laplace
from .rate import RateOptions, RateResult, minimum_action_fd, rate_function, rate_function_fd
from .representation import RepresentationResult, verify_representation, verify_representation_sheet

__all__ = ["GirsanovResult", "LaplaceEstimate", "LaplaceSpec", "RateOptions", "RateResult",
           "RepresentationResult", "girsanov_check", "laplace_functional", "minimum_action_fd",
           "rate_function", "rate_function_fd", "verify_laplace", "verify_representation",
           "verify_representation_sheet"]
