"""Barriers, maximum principles and boundary estimates for degenerate elliptic equations.

Growth functions and their integral tests live in :mod:`.nonlinearity`,
Pucci operators in :mod:`.spectral`, radial barriers in :mod:`.barriers`,
the counterexamples H and F in :mod:`.counterexamples`, grid domains in
:mod:`.geometry`, the p(x)-Laplacian solver in :mod:`.solver` and the
empirical checks in :mod:`.verification`.
"""

from .barriers import (BarrierEstimator, RadialBarrier, StructureBounds, build_barrier,
                       build_exp_barrier, choose_C, eval_barrier, verify_strictness)
from .counterexamples import build_gradient_blowup, build_smap_counterexample, ode_residual
from .exceptions import *  # noqa: F401,F403
from .geometry import Annulus, Ball, Stadium, boundary_band, contact_points, make_grid
from .nonlinearity import (GrowthFunction, check_integral_condition, check_phi_B,
                           power_law_closed_form)
from .solver import (DirichletSolver, ExponentField, GridFunction, SolverConfig,
                     check_weak_comparison, radial_reference, residual_norm, solve)
from .spectral import EllipticityPair, SymmetricMatrix, pucci
from .verification import (LineFunction, VerificationReport, boundary_harnack_quotient,
                           check_hopf_slope, check_smap, compare_with_barrier,
                           distance_comparability)

__version__ = "0.1.0"
