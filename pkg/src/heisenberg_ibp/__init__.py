"""Monte Carlo verification of quasi-invariance and integration-by-parts formulas
for Brownian motion on finite-dimensional Heisenberg-like groups."""
from .group import ConfigurationError, GroupPoint, OmegaForm, bracket, inverse, multiply
from .paths import CMPath, GroupPath, TimeGrid, WienerPath, build_xi, sample_wiener
from .densities import alpha_coeffs, j_h, log_j_h
from .zfunc import ZContext, beta_expansion, lemma_checks, z_any
from .ibp import Partition, enumerate_lambda, phi, psi
from .testfuncs import CylinderFunction, TestFunction, evaluate, iterated_left_derive, iterated_right_derive
from .harness import RunConfig, VerificationReport

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "GroupPoint", "OmegaForm", "bracket", "inverse", "multiply",
    "CMPath", "GroupPath", "TimeGrid", "WienerPath", "build_xi", "sample_wiener",
    "alpha_coeffs", "j_h", "log_j_h",
    "ZContext", "beta_expansion", "lemma_checks", "z_any",
    "Partition", "enumerate_lambda", "phi", "psi",
    "CylinderFunction", "TestFunction", "evaluate", "iterated_left_derive", "iterated_right_derive",
    "RunConfig", "VerificationReport",
]
