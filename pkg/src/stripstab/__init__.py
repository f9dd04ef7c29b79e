"""Linear and weakly nonlinear stability of plane channel flow."""

__version__ = "0.1.0"

from .amplitude import NormalForm, integrate, limit_cycle, reconstruct_roll
from .config import RunConfig, load_config
from .greenfn import green_approx, resolvent_via_iteration, verify_resolvent_bound
from .hopf import Classification, Gauge, HopfCoefficients, hopf_coefficients
from .neutral import (NeutralPoint, audit_H, find_alpha_plus, find_critical_point,
                      fit_scaling, locate_neutral, trace_neutral_curve)
from .orrsomm import EigenPair, OrrSommerfeldPencil, assemble, eigen_spectrum, leading_eigen
from .profiles import ShearProfile, check_admissibility, make_profile
from .specgrid import SpectralDiscretization, build_discretization

__all__ = [
    "Classification", "EigenPair", "Gauge", "HopfCoefficients", "NeutralPoint", "NormalForm",
    "OrrSommerfeldPencil", "RunConfig", "ShearProfile", "SpectralDiscretization", "assemble",
    "audit_H", "build_discretization", "check_admissibility", "eigen_spectrum",
    "find_alpha_plus", "find_critical_point", "fit_scaling", "green_approx",
    "hopf_coefficients", "integrate", "leading_eigen", "limit_cycle", "load_config",
    "locate_neutral", "make_profile", "reconstruct_roll", "resolvent_via_iteration",
    "trace_neutral_curve", "verify_resolvent_bound",
]
