"""Stochastic-Lagrangian representations of incompressible flow.

Backward noisy characteristics with wall absorption, Jacobian transport,
transported-momentum (Weber) averaging with boundary weights, Feynman-Kac
scalar transport, vorticity representations and circulation transport,
validated against analytic and finite-difference references.
"""

from .domain import (CHANNELX, RECTANGLE, TORUS, CrossingRecord, DomainSpec,
                     boundary_crossing, channel_x, contains, on_boundary,
                     rectangle, torus, wrap)
from .errors import NumericError, UsageError
from .estimator import (BoundaryData, CurveSpec, FieldEstimate, McEstimate,
                        WallTrace, check_martingale_identity,
                        estimate_circulation, estimate_scalar_fk,
                        estimate_scalar_fk_many, estimate_vorticity,
                        estimate_vorticity_many, estimate_weber_velocity)
from .field import (FieldSeries, ScalarField, VectorField, curl, divergence,
                    gradient, grid_points, grid_spacing, interpolate,
                    inverse_curl, leray_project, read_grid_dump,
                    sample_velocity, vector_gradient, write_grid_dump)
from .flow import (PathRecord, RngStream, run_ensemble, simulate_backward,
                   transport_jacobian)
from .solver import (CheckResult, SolverConfig, VerificationReport, rel_l2,
                     solve_periodic_ns, solve_wbar_pde, verify_representation)

__version__ = "0.1.0"
