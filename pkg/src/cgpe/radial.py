"""Radially symmetric stationary states by collocation with Newton iteration.

The stationary ansatz psi = exp(-i mu t) phi(r) exp(i m theta) leads, after
factoring out the winding behavior phi = r^m chi(r), to a boundary value
problem for the 7-component real vector

    u = (theta, phi_r, eta, zeta, xi, mu, rho)

on the rescaled interval [0, 1], where theta/eta are Re/Im of chi, phi_r/zeta
their radial derivatives, xi the running pump-decay balance integral, mu the
(unknown, constant) chemical potential and rho the physical radius. The system
is autonomous with a singularity of the first kind at rho = 0, regularized by
the analytic limit of the right-hand side there. Boundary conditions:

    phi_r(0) = 0,  zeta(0) = 0,  eta(0) = 0 (phase gauge),  rho(0) = 0,
    theta(1) = 0,  eta(1) = 0,  xi(1) = 0.

For m = 0 this is exactly the symmetric-state system; for m >= 1 the same
seven conditions encode psi_m(0) = 0 and a real leading vortex amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .collocation import CollocationGrid, CollocationProblem, newton_solve
from .model import (LOBATTO4, ModelParams, RadialMesh, graded_mesh,
                    smoothed_heaviside)

# state component indices
THETA, PHI, ETA, ZETA, XI, MU, RHO = range(7)

ORIGIN_GUARD = 1e-12   # rho < ORIGIN_GUARD * b switches to the regularized RHS


@dataclass
class BvpState:
    """Solution values at every collocation point of a radial mesh."""

    mesh: RadialMesh
    values: np.ndarray          # (n_points, 7)
    m: int = 0

    @property
    def r(self) -> np.ndarray:
        return self.mesh.collocation_points()

    def copy(self) -> "BvpState":
        return BvpState(self.mesh, self.values.copy(), self.m)


@dataclass
class RadialProfile:
    """Converged stationary radial solution on a dense uniform output mesh."""

    r: np.ndarray               # uniform radii, r[0] = 0, r[-1] = b
    phi: np.ndarray             # complex amplitude phi(r) = r^m chi(r)
    mu: float
    m: int
    residual_norm: float
    params: ModelParams
    state: Optional[BvpState] = field(default=None, repr=False)

    def phi_at(self, r_query):
        r_query = np.asarray(r_query, dtype=float)
        re = np.interp(r_query, self.r, self.phi.real)
        im = np.interp(r_query, self.r, self.phi.imag)
        return re + 1j * im

    def density_at(self, r_query):
        return np.abs(self.phi_at(r_query)) ** 2


def _pump_rate_derivative(params: ModelParams, r):
    """d/dr of alpha * Theta(R - r)."""
    t = np.tanh(params.kappa * (params.pump_radius - np.asarray(r, float)))
    return -0.5 * params.alpha * params.kappa * (1.0 - t * t)


def gp_rhs(U, params: ModelParams, m: int = 0):
    """Right-hand side of the rescaled system, d/d(r/b) units; (n, 7) -> (n, 7)."""
    U = np.atleast_2d(U)
    th, ph, et, ze = U[:, THETA], U[:, PHI], U[:, ETA], U[:, ZETA]
    mu, rho = U[:, MU], U[:, RHO]
    b = params.b
    guard = ORIGIN_GUARD * b
    at0 = rho < guard
    rho_s = np.where(at0, 1.0, rho)

    w = rho_s ** (2 * m) if m else np.ones_like(rho)
    s2 = th * th + et * et
    G = params.pump_rate(rho_s) - params.sigma * w * s2
    lin = params.potential(rho_s) - mu

    f = np.empty_like(U)
    f[:, THETA] = ph
    f[:, PHI] = -(2 * m + 1) * ph / rho_s + lin * th + w * s2 * th - G * et
    f[:, ETA] = ze
    f[:, ZETA] = -(2 * m + 1) * ze / rho_s + lin * et + w * s2 * et + G * th
    f[:, XI] = G * w * s2 * rho_s
    f[:, MU] = 0.0
    f[:, RHO] = 1.0

    if np.any(at0):
        w0 = 1.0 if m == 0 else 0.0
        V0 = float(params.potential(0.0))
        G0 = params.alpha * float(smoothed_heaviside(params.pump_radius, params.kappa)) \
            - params.sigma * w0 * s2[at0]
        lin0 = V0 - mu[at0]
        inv = 1.0 / (2 * m + 2)
        f[at0, PHI] = (lin0 * th[at0] + w0 * s2[at0] * th[at0] - G0 * et[at0]) * inv
        f[at0, ZETA] = (lin0 * et[at0] + w0 * s2[at0] * et[at0] + G0 * th[at0]) * inv
        f[at0, XI] = 0.0
    return f * b


def gp_rhs_jacobian(U, params: ModelParams, m: int = 0):
    """State Jacobian of gp_rhs; (n, 7) -> (n, 7, 7)."""
    U = np.atleast_2d(U)
    n = U.shape[0]
    th, ph, et, ze = U[:, THETA], U[:, PHI], U[:, ETA], U[:, ZETA]
    mu, rho = U[:, MU], U[:, RHO]
    b = params.b
    sg = params.sigma
    guard = ORIGIN_GUARD * b
    at0 = rho < guard
    rho_s = np.where(at0, 1.0, rho)

    if m:
        w = rho_s ** (2 * m)
        dw = 2 * m * rho_s ** (2 * m - 1)
    else:
        w = np.ones_like(rho)
        dw = np.zeros_like(rho)
    s2 = th * th + et * et
    W = params.pump_rate(rho_s)
    dW = _pump_rate_derivative(params, rho_s)
    G = W - sg * w * s2
    dG_drho = dW - sg * dw * s2
    lin = params.potential(rho_s) - mu
    dV = params.trap.derivative(rho_s)
    c = 2 * m + 1

    J = np.zeros((n, 7, 7))
    J[:, THETA, PHI] = 1.0
    J[:, PHI, THETA] = lin + w * (s2 + 2 * th * th) + 2 * sg * w * th * et
    J[:, PHI, PHI] = -c / rho_s
    J[:, PHI, ETA] = 2 * w * th * et - G + 2 * sg * w * et * et
    J[:, PHI, MU] = -th
    J[:, PHI, RHO] = c * ph / rho_s ** 2 + dV * th + dw * s2 * th - et * dG_drho
    J[:, ETA, ZETA] = 1.0
    J[:, ZETA, THETA] = 2 * w * th * et + G - 2 * sg * w * th * th
    J[:, ZETA, ETA] = lin + w * (s2 + 2 * et * et) - 2 * sg * w * th * et
    J[:, ZETA, ZETA] = -c / rho_s
    J[:, ZETA, MU] = -et
    J[:, ZETA, RHO] = c * ze / rho_s ** 2 + dV * et + dw * s2 * et + th * dG_drho
    J[:, XI, THETA] = 2 * th * rho_s * w * (G - sg * w * s2)
    J[:, XI, ETA] = 2 * et * rho_s * w * (G - sg * w * s2)
    J[:, XI, RHO] = dG_drho * w * s2 * rho_s + G * dw * s2 * rho_s + G * w * s2

    if np.any(at0):
        w0 = 1.0 if m == 0 else 0.0
        V0 = float(params.potential(0.0))
        G0 = params.alpha * float(smoothed_heaviside(params.pump_radius, params.kappa)) \
            - sg * w0 * s2[at0]
        lin0 = V0 - mu[at0]
        inv = 1.0 / (2 * m + 2)
        for row in (PHI, ZETA, XI):
            J[at0, row, :] = 0.0
        J[at0, PHI, THETA] = (lin0 + w0 * (s2[at0] + 2 * th[at0] ** 2)
                              + 2 * sg * w0 * th[at0] * et[at0]) * inv
        J[at0, PHI, ETA] = (2 * w0 * th[at0] * et[at0] - G0
                            + 2 * sg * w0 * et[at0] ** 2) * inv
        J[at0, PHI, MU] = -th[at0] * inv
        J[at0, ZETA, THETA] = (2 * w0 * th[at0] * et[at0] + G0
                               - 2 * sg * w0 * th[at0] ** 2) * inv
        J[at0, ZETA, ETA] = (lin0 + w0 * (s2[at0] + 2 * et[at0] ** 2)
                             - 2 * sg * w0 * th[at0] * et[at0]) * inv
        J[at0, ZETA, MU] = -et[at0] * inv
    return J * b


def gp_rhs_dparam(U, params: ModelParams, m: int, name: str):
    """Derivative of gp_rhs with respect to a continuation parameter."""
    U = np.atleast_2d(U)
    th, et, rho = U[:, THETA], U[:, ETA], U[:, RHO]
    b = params.b
    guard = ORIGIN_GUARD * b
    at0 = rho < guard
    rho_s = np.where(at0, 1.0, rho)
    w = rho_s ** (2 * m) if m else np.ones_like(rho)
    s2 = th * th + et * et

    if name == "sigma":
        dG = -w * s2
    elif name == "alpha":
        dG = smoothed_heaviside(params.pump_radius - rho_s, params.kappa)
    elif name == "R":
        t = np.tanh(params.kappa * (params.pump_radius - rho_s))
        dG = 0.5 * params.alpha * params.kappa * (1.0 - t * t)
    else:
        raise ValueError(f"unknown continuation parameter {name!r}")

    d = np.zeros_like(U)
    d[:, PHI] = -et * dG
    d[:, ZETA] = th * dG
    d[:, XI] = dG * w * s2 * rho_s

    if np.any(at0):
        w0 = 1.0 if m == 0 else 0.0
        if name == "sigma":
            dG0 = -w0 * s2[at0]
        elif name == "alpha":
            dG0 = float(smoothed_heaviside(params.pump_radius, params.kappa)) \
                * np.ones(np.count_nonzero(at0))
        else:
            t0 = np.tanh(params.kappa * params.pump_radius)
            dG0 = 0.5 * params.alpha * params.kappa * (1.0 - t0 * t0) \
                * np.ones(np.count_nonzero(at0))
        inv = 1.0 / (2 * m + 2)
        d[at0, PHI] = -et[at0] * dG0 * inv
        d[at0, ZETA] = th[at0] * dG0 * inv
        d[at0, XI] = 0.0
    return d * b


def rhs_at_origin(u0, params: ModelParams, m: int = 0):
    """Regularized right-hand side at rho = 0, in physical d/dr units.

    The 1/rho terms are replaced by their limit, which contributes the factor
    1/(2m+2) to the second-derivative rows. Requires phi_r(0) = zeta(0) = 0.
    """
    u0 = np.asarray(u0, dtype=float)
    scale = max(1.0, float(np.max(np.abs(u0))))
    if abs(u0[PHI]) > 1e-9 * scale or abs(u0[ZETA]) > 1e-9 * scale:
        raise ValueError("origin limit requires phi_r(0) = 0 and zeta(0) = 0")
    f = gp_rhs(u0[None, :] * np.array([1.0] * 6 + [0.0]), params, m)[0]
    return f / params.b


def gp_boundary_conditions(u0, u1):
    return np.array([u0[PHI], u0[ZETA], u0[ETA], u0[RHO],
                     u1[THETA], u1[ETA], u1[XI]])


_BC0 = np.zeros((7, 7))
_BC1 = np.zeros((7, 7))
_BC0[0, PHI] = _BC0[1, ZETA] = _BC0[2, ETA] = _BC0[3, RHO] = 1.0
_BC1[4, THETA] = _BC1[5, ETA] = _BC1[6, XI] = 1.0


def gp_bc_jacobian(u0, u1):
    return _BC0, _BC1


def build_problem(params: ModelParams, mesh: RadialMesh, m: int = 0) -> CollocationProblem:
    grid = CollocationGrid(mesh.nodes / mesh.b, mesh.abscissae)
    return CollocationProblem(
        f=lambda U: gp_rhs(U, params, m),
        f_jac=lambda U: gp_rhs_jacobian(U, params, m),
        bc=gp_boundary_conditions,
        bc_jac=gp_bc_jacobian,
        grid=grid,
        dim=7,
    )


# -- initial guesses --------------------------------------------------------

def _blank_state(mesh: RadialMesh, m: int) -> BvpState:
    r = mesh.collocation_points()
    vals = np.zeros((r.size, 7))
    vals[:, RHO] = r
    return BvpState(mesh, vals, m)


def thomas_fermi_guess(params: ModelParams, mesh: RadialMesh) -> BvpState:
    """Kinetic-energy-free starting profile |phi|^2 = mu_tf - r^2 (clipped)."""
    if params.sigma <= 0:
        raise ValueError("Thomas-Fermi guess undefined for sigma = 0")
    mu_tf = 1.5 * params.alpha / params.sigma
    state = _blank_state(mesh, 0)
    r = state.r
    inside = r * r < mu_tf
    state.values[:, THETA] = np.sqrt(np.maximum(mu_tf - r * r, 0.0))
    # slope capped near the turning point, where the square root is vertical
    denom = np.sqrt(np.maximum(mu_tf - r * r, 1e-4 * mu_tf))
    state.values[:, PHI] = np.where(inside, -r / denom, 0.0)
    state.values[:, MU] = mu_tf
    return state


def central_vortex_guess(params: ModelParams, mesh: RadialMesh, m: int) -> BvpState:
    """Thomas-Fermi envelope with an r^m core, expressed in chi = phi / r^m."""
    if m < 1:
        raise ValueError("central vortex guess needs winding m >= 1")
    if params.sigma <= 0:
        raise ValueError("vortex guess undefined for sigma = 0")
    mu_tf = 1.5 * params.alpha / params.sigma
    state = _blank_state(mesh, m)
    r = state.r
    env = np.sqrt(np.maximum(mu_tf - r * r, 0.0))
    w0 = 2.0   # core width; normalized so chi(0) keeps the TF amplitude
    chi = env / ((r * r + w0 * w0) / (1.0 + w0 * w0)) ** (m / 2.0)
    state.values[:, THETA] = chi
    state.values[:, PHI] = np.gradient(chi, r)
    state.values[:, MU] = mu_tf
    return state


def multi_bump_guess(params: ModelParams, mesh: RadialMesh, n_bumps: int) -> BvpState:
    """Radial profile whose amplitude has n_bumps humps inside the TF radius.

    Seeds excited stationary states: adjacent humps carry alternating signs
    (nodal rings), which is what Newton needs to leave the ground-state basin.
    n_bumps = 1 reduces to a smoothed Thomas-Fermi profile.
    """
    if n_bumps < 1:
        raise ValueError("n_bumps must be >= 1")
    if params.sigma <= 0:
        raise ValueError("multi-bump guess undefined for sigma = 0")
    mu_tf = 1.5 * params.alpha / params.sigma
    state = _blank_state(mesh, 0)
    r = state.r
    if n_bumps == 1:
        delta = 0.02 * mu_tf
        arg = mu_tf - r * r
        smooth = 0.5 * (arg + np.sqrt(arg * arg + delta * delta))
        state.values[:, THETA] = np.sqrt(smooth)
        state.values[:, PHI] = np.gradient(state.values[:, THETA], r)
    else:
        r_tf = np.sqrt(mu_tf)
        spacing = 0.9 * r_tf / n_bumps
        centers = (np.arange(n_bumps) + 0.5) * spacing
        widths = 0.3 * spacing
        prof = np.zeros_like(r)
        slope = np.zeros_like(r)
        for j, ck in enumerate(centers):
            amp = (-1.0) ** j * np.sqrt(max(mu_tf - ck * ck, 0.0))
            bump = amp * np.exp(-0.5 * ((r - ck) / widths) ** 2)
            prof += bump
            slope += bump * (-(r - ck) / widths ** 2)
        state.values[:, THETA] = prof
        state.values[:, PHI] = slope
    state.values[:, MU] = mu_tf
    return state


# -- solve -------------------------------------------------------------------

DEFAULT_INTERVALS = 1200
DENSE_POINTS = 6000       # even interval count, so Simpson's rule applies


def default_mesh(params: ModelParams, n_intervals: int = DEFAULT_INTERVALS) -> RadialMesh:
    return graded_mesh(params.b, n_intervals, params.pump_radius)


def canonicalize_sign(values: np.ndarray) -> np.ndarray:
    """Fix the leftover +-1 gauge: real amplitude at the origin nonnegative."""
    if values[0, THETA] < 0:
        values = values.copy()
        values[:, (THETA, PHI, ETA, ZETA)] *= -1.0
    return values


def state_to_profile(state: BvpState, params: ModelParams, residual_norm: float,
                     problem: Optional[CollocationProblem] = None,
                     n_dense: int = DENSE_POINTS) -> RadialProfile:
    """Sample the collocation polynomial on a uniform mesh and map chi -> phi."""
    if problem is None:
        problem = build_problem(params, state.mesh, state.m)
    r_dense = np.linspace(0.0, params.b, n_dense + 1)
    vals, _ = problem.evaluate(state.values, r_dense / params.b)
    chi = vals[:, THETA] + 1j * vals[:, ETA]
    phi = chi * r_dense ** state.m if state.m else chi
    return RadialProfile(r=r_dense, phi=phi, mu=float(state.values[0, MU]),
                         m=state.m, residual_norm=residual_norm, params=params,
                         state=state)


def solve_stationary(params: ModelParams, guess: Optional[BvpState] = None,
                     m: int = 0, mesh: Optional[RadialMesh] = None,
                     n_intervals: int = DEFAULT_INTERVALS,
                     tol: float = 1e-10, max_iter: int = 50,
                     n_dense: int = DENSE_POINTS) -> RadialProfile:
    """Newton-converge a stationary state from a guess (Thomas-Fermi default).

    Raises NonConvergenceError / SingularJacobianError from the Newton loop.
    """
    if m < 0:
        raise ValueError("winding index must be nonnegative")
    if guess is not None:
        mesh = guess.mesh
        if guess.m != m:
            raise ValueError("guess winding does not match requested winding")
    if mesh is None:
        mesh = default_mesh(params, n_intervals)
    if guess is None:
        if params.alpha == 0.0:
            guess = _blank_state(mesh, m)
        elif m == 0:
            guess = thomas_fermi_guess(params, mesh)
        else:
            guess = central_vortex_guess(params, mesh, m)

    problem = build_problem(params, mesh, m)
    U, rnorm, _ = newton_solve(problem, guess.values, tol=tol, max_iter=max_iter)
    U = canonicalize_sign(U)
    state = BvpState(mesh, U, m)
    return state_to_profile(state, params, rnorm, problem, n_dense)
