"""Pseudo-arclength continuation of F(u, lambda) = 0 with bordered solves.

Branches are parameterized by an approximate arclength nu rather than by the
physical parameter, so folds (where F_u is singular) are traversed without
special casing. Each step solves the augmented system

    F(u, lambda) = 0,
    N(u, lambda) = <du0, u - u0> + dlam0 (lambda - lambda0) - nu = 0,

by Newton iteration with the bordered Jacobian [[F_u, F_lam], [du0^T, dlam0]];
the linear solves use block elimination on F_u (one factorization, two solves)
and fall back to factorizing the full bordered matrix when F_u is singular.

For discretized PDE branches the u-inner product is scaled by 1/dim(u), so
step sizes stay mesh-independent; scalar test problems reduce to the plain
dot product.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace as dc_replace
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.linalg as dla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .collocation import NonConvergenceError
from .model import ModelParams, RadialMesh
from .radial import (MU, BvpState, RadialProfile, build_problem,
                     gp_rhs_dparam, state_to_profile)


class CorrectorError(RuntimeError):
    """Arclength corrector failed to converge at the attempted step."""


class RankDeficientError(RuntimeError):
    """Bordered system is rank deficient (not a regular or simple fold point)."""


# -- linear algebra helpers --------------------------------------------------

def _make_solver(J):
    if sp.issparse(J):
        lu = splu(J.tocsc())
        return lu.solve
    J = np.atleast_2d(np.asarray(J, dtype=float))
    lu_piv = dla.lu_factor(J)
    return lambda rhs: dla.lu_solve(lu_piv, rhs)


def _solve_bordered(J, f_lam, v, w, rhs_top, rhs_bot, weight):
    """Solve [[J, f_lam], [weight*v^T, w]] (du, dlam) = (rhs_top, rhs_bot)."""
    try:
        solve = _make_solver(J)
        a = solve(f_lam)
        c = solve(rhs_top)
        if np.all(np.isfinite(a)) and np.all(np.isfinite(c)):
            denom = w - weight * np.dot(v, a)
            if abs(denom) > 1e-14 * max(1.0, abs(w)):
                dlam = (rhs_bot - weight * np.dot(v, c)) / denom
                return c - dlam * a, float(dlam)
    except (RuntimeError, dla.LinAlgError):
        pass
    # fold (or near-fold): factorize the full bordered matrix
    n = f_lam.size
    if sp.issparse(J):
        M = sp.bmat([[J, f_lam.reshape(-1, 1)],
                     [sp.csr_matrix(weight * v.reshape(1, -1)), np.array([[w]])]],
                    format="csc")
        try:
            sol = splu(M).solve(np.concatenate([rhs_top, [rhs_bot]]))
        except RuntimeError as exc:
            raise RankDeficientError(f"bordered factorization failed: {exc}") from exc
    else:
        M = np.zeros((n + 1, n + 1))
        M[:n, :n] = np.atleast_2d(J)
        M[:n, n] = f_lam
        M[n, :n] = weight * v
        M[n, n] = w
        try:
            sol = dla.solve(M, np.concatenate([rhs_top, [rhs_bot]]))
        except dla.LinAlgError as exc:
            raise RankDeficientError(f"bordered solve failed: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise RankDeficientError("bordered solve produced non-finite values")
    return sol[:-1], float(sol[-1])


# -- data types ---------------------------------------------------------------

@dataclass
class BranchPoint:
    """One converged point of a branch, with its unit tangent."""

    lam: float
    u: np.ndarray
    tangent_u: np.ndarray
    tangent_lam: float
    mu: Optional[float] = None
    fold: bool = False
    residual_norm: float = 0.0
    nu: float = 0.0              # arclength step used to reach this point
    anchor_dir: int = 0          # +1: anchored at previous stored point, -1: next


@dataclass
class Branch:
    points: List[BranchPoint]
    param: str
    fixed_params: dict = field(default_factory=dict)
    termination: str = ""

    def __len__(self):
        return len(self.points)

    def lambdas(self):
        return np.array([pt.lam for pt in self.points])

    def mus(self):
        return np.array([pt.mu if pt.mu is not None else np.nan
                         for pt in self.points])

    def folds(self):
        return [pt for pt in self.points if pt.fold]


# -- core algorithm -----------------------------------------------------------

def tangent_at(problem, u, lam, prev: Optional[tuple] = None):
    """Unit tangent (du, dlam) along the branch at a converged point.

    Without a previous tangent, solves F_u du = -F_lam directly (regular
    points only) and orients toward increasing lambda; with one, solves the
    bordered system (valid through folds) and keeps the marching direction.
    """
    w = problem.weight
    f_lam = np.asarray(problem.jacobian_lam(u, lam), dtype=float)
    J = problem.jacobian_u(u, lam)
    if prev is None:
        solve = _make_solver(J)
        du = solve(-f_lam)
        if not np.all(np.isfinite(du)):
            raise RankDeficientError("tangent solve failed; supply a previous tangent")
        dlam = 1.0
    else:
        du, dlam = _solve_bordered(J, f_lam, prev[0], prev[1],
                                   np.zeros_like(f_lam), 1.0, w)
    norm = np.sqrt(w * np.dot(du, du) + dlam * dlam)
    du, dlam = du / norm, dlam / norm
    if prev is not None and w * np.dot(du, prev[0]) + dlam * prev[1] < 0:
        du, dlam = -du, -dlam
    return du, dlam


def corrector(problem, u_pred, lam_pred, anchor: BranchPoint, nu: float,
              tol: float = 1e-10, max_iter: int = 12):
    """Newton-converge (F, N) = 0 from the predicted point; returns (u, lam, iters)."""
    w = problem.weight
    u = np.array(u_pred, dtype=float)
    lam = float(lam_pred)
    best = np.inf
    for it in range(max_iter + 1):
        F = problem.residual(u, lam)
        N = (w * np.dot(anchor.tangent_u, u - anchor.u)
             + anchor.tangent_lam * (lam - anchor.lam) - nu)
        err = max(float(np.max(np.abs(F))), abs(N))
        if err < tol:
            return u, lam, it
        if not np.isfinite(err) or err > 1e8 * max(best, 1.0) or it == max_iter:
            raise CorrectorError(f"corrector diverged (residual {err:.3e})")
        best = min(best, err)
        J = problem.jacobian_u(u, lam)
        f_lam = np.asarray(problem.jacobian_lam(u, lam), dtype=float)
        du, dlam = _solve_bordered(J, f_lam, anchor.tangent_u,
                                   anchor.tangent_lam, -F, -N, w)
        u = u + du
        lam = lam + dlam
    raise CorrectorError("corrector did not converge")


def newton_fixed_lambda(problem, u, lam, tol: float = 1e-10, max_iter: int = 20):
    """Plain Newton on F(., lam) = 0; used for branch starts and re-solves."""
    u = np.array(u, dtype=float)
    for _ in range(max_iter):
        F = problem.residual(u, lam)
        err = float(np.max(np.abs(F)))
        if err < tol:
            return u
        solve = _make_solver(problem.jacobian_u(u, lam))
        step = solve(-F)
        if not np.all(np.isfinite(step)):
            raise NonConvergenceError("fixed-parameter Newton failed", residual_norm=err)
        u = u + step
    err = float(np.max(np.abs(problem.residual(u, lam))))
    if err < tol:
        return u
    raise NonConvergenceError("fixed-parameter Newton did not converge",
                              residual_norm=err)


def _make_point(problem, u, lam, prev_tangent, nu, residual_norm):
    du, dlam = tangent_at(problem, u, lam, prev=prev_tangent)
    mu = problem.extract_mu(u) if hasattr(problem, "extract_mu") else None
    return BranchPoint(lam=lam, u=u, tangent_u=du, tangent_lam=dlam, mu=mu,
                       nu=nu, residual_norm=residual_norm)


def _march(problem, start: BranchPoint, lam_range, nu_max, nu_min, tol,
           max_points, max_newton):
    """Walk one direction from `start`; returns (points, termination reason)."""
    lam_lo, lam_hi = lam_range
    points = []
    anchor = start
    nu = nu_max / 8.0
    while len(points) < max_points:
        u_pred = anchor.u + nu * anchor.tangent_u
        lam_pred = anchor.lam + nu * anchor.tangent_lam
        try:
            u, lam, iters = corrector(problem, u_pred, lam_pred, anchor, nu,
                                      tol=tol, max_iter=max_newton)
        except (CorrectorError, RankDeficientError):
            nu *= 0.5
            if nu < nu_min:
                return points, "step failure"
            continue
        if not (lam_lo - 1e-12 <= lam <= lam_hi + 1e-12):
            # land exactly on the exhausted bound when reachable
            bound = lam_lo if lam < lam_lo else lam_hi
            try:
                frac = ((bound - anchor.lam)
                        / (lam - anchor.lam)) if lam != anchor.lam else 0.0
                u_land = anchor.u + frac * (u - anchor.u)
                u_b = newton_fixed_lambda(problem, u_land, bound, tol=tol)
                F = problem.residual(u_b, bound)
                pt = _make_point(problem, u_b, bound,
                                 (anchor.tangent_u, anchor.tangent_lam),
                                 nu, float(np.max(np.abs(F))))
                points.append(pt)
            except (NonConvergenceError, RankDeficientError):
                pass
            return points, "range exhausted"
        F = problem.residual(u, lam)
        pt = _make_point(problem, u, lam, (anchor.tangent_u, anchor.tangent_lam),
                         nu, float(np.max(np.abs(F))))
        if np.sign(pt.tangent_lam) != np.sign(anchor.tangent_lam) \
                and abs(anchor.tangent_lam) > 1e-12:
            pt.fold = True
        points.append(pt)
        anchor = pt
        if iters <= 3 and nu < nu_max:
            nu = min(2.0 * nu, nu_max)
    return points, "max points"


def trace_branch(problem, u0, lam0, lam_range: Sequence[float],
                 nu_max: float = 1e-2, nu_min: float = 1e-6,
                 max_points: int = 2000, tol: float = 1e-10,
                 max_newton: int = 12, param: str = "lambda",
                 fixed_params: Optional[dict] = None) -> Branch:
    """Trace the branch through (u0, lam0) across lam_range in both directions."""
    lam_lo, lam_hi = float(lam_range[0]), float(lam_range[1])
    if not (lam_lo <= lam0 <= lam_hi):
        raise ValueError("start parameter must lie inside the range")
    u0 = newton_fixed_lambda(problem, np.asarray(u0, dtype=float), lam0, tol=tol)
    F0 = problem.residual(u0, lam0)
    start = _make_point(problem, u0, lam0, None, 0.0, float(np.max(np.abs(F0))))

    fwd, term_fwd = _march(problem, start, (lam_lo, lam_hi), nu_max, nu_min,
                           tol, max_points, max_newton)
    back_start = dc_replace(start, tangent_u=-start.tangent_u,
                            tangent_lam=-start.tangent_lam)
    bwd, term_bwd = _march(problem, back_start, (lam_lo, lam_hi), nu_max, nu_min,
                           tol, max_points, max_newton)
    for pt in fwd:
        pt.anchor_dir = 1
    for pt in bwd:   # store tangents in the forward (increasing-index) orientation
        pt.tangent_u = -pt.tangent_u
        pt.tangent_lam = -pt.tangent_lam
        pt.anchor_dir = -1
    points = list(reversed(bwd)) + [start] + fwd
    for prev, pt in zip(points[:-1], points[1:]):
        pt.fold = (np.sign(pt.tangent_lam) != np.sign(prev.tangent_lam)
                   and abs(prev.tangent_lam) > 1e-12)
    return Branch(points=points, param=param, fixed_params=fixed_params or {},
                  termination=f"low:{term_bwd} high:{term_fwd}")


def fold_report(problem, branch: Branch, tol_lambda: float = 1e-4,
                max_bisect: int = 60):
    """Localize each fold (sign change of dlambda/ds) along the branch.

    Near a quadratic fold, lambda(s) - lambda_fold = O((s - s_fold)^2) while
    dlambda/ds vanishes linearly, so the refinement runs a bracket-safeguarded
    secant iteration on the tangent slope: the returned parameter is accurate
    to O(tol^2) when the bracket width reaches tol_lambda. Returns a list of
    (lambda_fold, u_fold) pairs.
    """
    w = problem.weight
    out = []
    pts = branch.points
    for a, b in zip(pts[:-1], pts[1:]):
        if np.sign(a.tangent_lam) == np.sign(b.tangent_lam) \
                or abs(a.tangent_lam) <= 1e-12:
            continue
        # arclength separation of the pair, measured along a's tangent
        nu_ab = (w * np.dot(a.tangent_u, b.u - a.u)
                 + a.tangent_lam * (b.lam - a.lam))
        sign0 = np.sign(a.tangent_lam)
        lo_nu, lo_slope, lo_pt = 0.0, abs(a.tangent_lam), a
        hi_nu, hi_slope, hi_pt = nu_ab, -abs(b.tangent_lam), b
        best = a if abs(a.tangent_lam) < abs(b.tangent_lam) else b
        for _ in range(max_bisect):
            if abs(best.tangent_lam) < 1e-9 or abs(hi_pt.lam - lo_pt.lam) < 1e-3 * tol_lambda:
                break
            if lo_slope - hi_slope > 0:
                mid = lo_nu + lo_slope * (hi_nu - lo_nu) / (lo_slope - hi_slope)
                margin = 0.05 * (hi_nu - lo_nu)
                if not (lo_nu + margin <= mid <= hi_nu - margin):
                    mid = 0.5 * (lo_nu + hi_nu)
            else:
                mid = 0.5 * (lo_nu + hi_nu)
            try:
                u, lam, _ = corrector(problem, a.u + mid * a.tangent_u,
                                      a.lam + mid * a.tangent_lam, a, mid)
                du, dlam = tangent_at(problem, u, lam,
                                      prev=(a.tangent_u, a.tangent_lam))
            except (CorrectorError, RankDeficientError):
                hi_nu = 0.5 * (lo_nu + hi_nu)
                continue
            cand = BranchPoint(lam=lam, u=u, tangent_u=du, tangent_lam=dlam)
            if abs(dlam) < abs(best.tangent_lam):
                best = cand
            if np.sign(dlam) == sign0:
                lo_nu, lo_slope, lo_pt = mid, abs(dlam), cand
            else:
                hi_nu, hi_slope, hi_pt = mid, -abs(dlam), cand
        out.append((float(best.lam), best.u))
    return out


# -- stationary-problem adapter ----------------------------------------------

_PARAM_FIELDS = {"sigma": "sigma", "R": "pump_radius", "alpha": "alpha"}


class StationaryContinuation:
    """F(u, lambda) for the discretized stationary problem.

    u is the flattened collocation vector (all components at all points,
    chemical potential included); lambda is one of sigma, R, alpha. The phase
    gauge stays in the boundary conditions, so F_u is square.
    """

    def __init__(self, params: ModelParams, mesh: RadialMesh, m: int, param: str):
        if param not in _PARAM_FIELDS:
            raise ValueError(f"continuation parameter must be one of {set(_PARAM_FIELDS)}")
        self.base_params = params
        self.mesh = mesh
        self.m = m
        self.param = param
        self._params_cache = {}
        self._problem = build_problem(params, mesh, m)
        self.n_points = self._problem.grid.n_points
        self.weight = 1.0 / (7 * self.n_points)

    def params_at(self, lam: float) -> ModelParams:
        key = float(lam)
        if key not in self._params_cache:
            self._params_cache[key] = self.base_params.with_(
                **{_PARAM_FIELDS[self.param]: key})
        return self._params_cache[key]

    def _with_params(self, lam):
        params = self.params_at(lam)
        from . import radial as _radial
        self._problem.f = lambda U: _radial.gp_rhs(U, params, self.m)
        self._problem.f_jac = lambda U: _radial.gp_rhs_jacobian(U, params, self.m)
        return params

    def residual(self, u, lam):
        self._with_params(lam)
        return self._problem.residual(u.reshape(self.n_points, 7))

    def jacobian_u(self, u, lam):
        self._with_params(lam)
        return self._problem.jacobian(u.reshape(self.n_points, 7))

    def jacobian_lam(self, u, lam):
        params = self._with_params(lam)
        U = u.reshape(self.n_points, 7)
        df = gp_rhs_dparam(U, params, self.m, self.param)
        return self._problem.parameter_derivative(df)

    def extract_mu(self, u):
        return float(u.reshape(self.n_points, 7)[0, MU])

    def state_at(self, point: BranchPoint) -> BvpState:
        return BvpState(self.mesh, point.u.reshape(self.n_points, 7).copy(), self.m)

    def profile_at(self, point: BranchPoint) -> RadialProfile:
        params = self.params_at(point.lam)
        self._with_params(point.lam)
        return state_to_profile(self.state_at(point), params,
                                point.residual_norm, self._problem)


def trace_stationary_branch(start: RadialProfile, param: str,
                            lam_range: Sequence[float], nu_max: float = 1e-2,
                            **kwargs) -> tuple:
    """Trace a branch of stationary states from a converged profile.

    Returns (problem, branch); the problem object converts branch points back
    into BvpStates/RadialProfiles.
    """
    if start.state is None:
        raise ValueError("profile lacks its collocation state; re-solve first")
    problem = StationaryContinuation(start.params, start.state.mesh,
                                     start.m, param)
    lam0 = float(getattr(start.params, _PARAM_FIELDS[param]))
    branch = trace_branch(problem, start.state.values.ravel(), lam0, lam_range,
                          nu_max=nu_max, param=param,
                          fixed_params={k: getattr(start.params, v)
                                        for k, v in _PARAM_FIELDS.items()
                                        if k != param},
                          **kwargs)
    return problem, branch
