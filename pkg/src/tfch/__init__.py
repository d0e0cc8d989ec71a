"""Variable-step L1-type solvers and kernel analysis for the time-fractional Cahn-Hilliard equation."""

__version__ = "0.1.0"

from .errors import (DomainError, NumericalError, ParameterError, SingularKernelError, SolverError,
                     SplittingError, StepRestrictionError, TFCHError, UsageError)
from .kernels import Family, KernelTable, check_criteria, companion_kernels, kernel_row
from .quadform import lambda_min, sigma_l1, sigma_star, sigma_star_polylog
from .solver import ModelParams, Scheme, run, step
from .spectral import Field2D, Grid2D
from .timemesh import (TimeMesh, make_composite, make_fixed_ratio, make_graded, make_random,
                       make_uniform)
