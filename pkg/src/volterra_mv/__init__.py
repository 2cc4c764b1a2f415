"""Particle simulation and verification of distribution-dependent stochastic Volterra equations."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .kernels import (Constant, ExpSum, Fractional, Gamma, KernelCertificate, LipschitzConvolution,
                      QuadratureConfig, Tabulated, certify, evaluate, integrate_abs_power, integrate_increment,
                      kernel_from_dict)
from .measures import EmpiricalMeasure, moment, path_wasserstein_bound_check, wasserstein
from .models import (CoefficientModel, eval_diffusion, eval_drift, from_catalog, growth_check, mean_field_ou,
                     modulus_check, pure_noise, scalar_interaction)
from .solver import (EmpiricalInitial, Gaussian, Partition, PointMass, kappa, precompute_weights, reconstruct,
                     simulate)
from .testfunctions import TestFunction, default_test_functions
