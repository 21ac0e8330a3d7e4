"""Structured coverings of punctured frequency space, their partitions of unity,
tight frames and decomposition-space norms."""

from .anorm import Anisotropy, QuasiNormContext, aniso_norm, dilation, estimate_K, quasi_dist
from .bapu import Bapu, BumpFunction, bump_eval
from .covering import (AffineMap, Covering, Patch, besov_covering, build_covering, check_admissible,
                       load_covering, packing_report, save_covering)
from .errors import ConstructionError, CoveringMismatch, DomainError
from .frame import CoefficientSet, FrameGeometry, analyze, eta_hat_eval, parseval_check, synthesize
from .pipeline import RunConfig, run_pipeline
from .registry import TestFunctionSpec, registry_instantiate
from .regulation import HybridRegulation, RampFunction, alpha_regulation, hybrid_eval
from .spaces import (SpaceParams, coefficient_norm, compression_curve, decomposition_norm, dilation_scaling_check,
                     frame_norm, nikolskii_check, norm_report, reconstruct_error, threshold)
from .spectral import SpectralFunction

__version__ = "0.1.0"
