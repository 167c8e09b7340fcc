"""Numerical laboratory for the 2D complex Gross-Pitaevskii equation.

Stationary radial states by Lobatto collocation, linear (Bogoliubov-type)
stability scans, pseudo-arclength branch continuation, and Strang-splitting
Fourier time integration with vortex diagnostics.
"""

from .collocation import NonConvergenceError, SingularJacobianError
from .model import (HarmonicTrap, ModelParams, RadialMesh, TabulatedTrap,
                    graded_mesh, manufactured_potential, pump_profile,
                    smoothed_heaviside, uniform_mesh)
from .radial import (BvpState, RadialProfile, central_vortex_guess,
                     multi_bump_guess, rhs_at_origin, solve_stationary,
                     thomas_fermi_guess)
from .bdg import (BdgOperator, StabilityReport, assemble_bdg,
                  central_vortex_stability, eigen_spectrum, stability_curve,
                  stability_scan)
from .continuation import (Branch, BranchPoint, fold_report,
                           trace_branch, trace_stationary_branch)
from .splitstep import (Field2D, StepPlan, build_plan, evolve,
                        field_from_profile, fourier_full_step,
                        nonlinear_half_step, oscillator_ground_state,
                        square_domain, strang_step)
from .diagnostics import (CurrentField, VortexCensus, chemical_potential_integral,
                          current, mass, mass_balance_residual,
                          phase_gradient_magnitude, radial_extract, vortex_census)

__version__ = "0.1.0"
