"""Piecewise-polynomial collocation for first-order autonomous BVPs.

Solves u'(x) = f(u), x in [x0, xN], with boundary conditions g(u(x0), u(xN)) = 0,
for vector-valued u. On every mesh interval the solution is the polynomial
collocated at the 4-point Lobatto abscissae (both interval endpoints included),
written in the equivalent implicit Runge-Kutta form

    (y_i - y_0)/h - sum_j A[i, j] f(y_j) = 0,   i = 1..3,

with unknowns the solution values at all distinct collocation points. The
composite solution is C^1 and the scheme handles singular-at-the-left-endpoint
systems as long as `f` supplies a regularized value there.

The Jacobian is assembled analytically in sparse form; the nonlinear system is
solved by damped Newton with step halving.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu, LinearOperator, onenormest


class NonConvergenceError(RuntimeError):
    """Newton iteration exhausted its budget without meeting the tolerance."""

    def __init__(self, message, residual_norm=None):
        super().__init__(message)
        self.residual_norm = residual_norm


class SingularJacobianError(RuntimeError):
    """Collocation Jacobian factorization failed."""

    def __init__(self, message, condition_estimate=None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


def lagrange_coefficients(c):
    """Monomial coefficients (ascending) of the Lagrange basis on nodes c."""
    c = np.asarray(c, dtype=float)
    m = c.size
    coeffs = np.zeros((m, m))
    for j in range(m):
        poly = np.array([1.0])
        for k in range(m):
            if k != j:
                poly = np.convolve(poly, np.array([-c[k], 1.0]))
        coeffs[j] = poly / np.prod(c[j] - np.delete(c, j))
    return coeffs


def irk_weights(c):
    """Runge-Kutta weights A[i, j] = integral_0^{c_i} L_j for collocation at c."""
    c = np.asarray(c, dtype=float)
    m = c.size
    coeffs = lagrange_coefficients(c)
    # antiderivative coefficients: x^{k+1}/(k+1)
    anti = coeffs / np.arange(1, m + 1)
    powers = c[:, None] ** np.arange(1, m + 1)[None, :]
    return powers @ anti.T


@dataclass
class CollocationGrid:
    """Precomputed index structure for one mesh (breakpoints + abscissae)."""

    breakpoints: np.ndarray
    abscissae: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.breakpoints, dtype=float)
        c = np.asarray(self.abscissae, dtype=float)
        if c[0] != 0.0 or c[-1] != 1.0:
            raise ValueError("abscissae must include both interval endpoints")
        self.breakpoints = x
        self.abscissae = c
        self.n_intervals = x.size - 1
        self.stages = c.size
        self.h = np.diff(x)
        self.A = irk_weights(c)[1:]                      # rows for c_2..c_m
        self._anti = lagrange_coefficients(c) / np.arange(1, self.stages + 1)
        # global collocation points; endpoints shared between intervals
        step = self.stages - 1
        pts = (x[:-1, None] + np.outer(self.h, c[:-1])).ravel()
        self.points = np.append(pts, x[-1])
        self.n_points = self.points.size
        # node indices of each interval's stages: shape (N, stages)
        base = step * np.arange(self.n_intervals)[:, None]
        self.stage_index = base + np.arange(self.stages)[None, :]

    def interval_of(self, x_eval):
        idx = np.searchsorted(self.breakpoints, x_eval, side="right") - 1
        return np.clip(idx, 0, self.n_intervals - 1)


class CollocationProblem:
    """First-order autonomous BVP, d equations, with its discretization data.

    f(u)        : (n, d) -> (n, d), right-hand side at a batch of states
    f_jac(u)    : (n, d) -> (n, d, d), its state Jacobian
    bc(u0, u1)  : (d,), (d,) -> (d,)
    bc_jac(u0, u1) -> pair of (d, d) Jacobians w.r.t. u0 and u1
    """

    def __init__(self, f, f_jac, bc, bc_jac, grid: CollocationGrid, dim: int):
        self.f = f
        self.f_jac = f_jac
        self.bc = bc
        self.bc_jac = bc_jac
        self.grid = grid
        self.dim = dim
        self._pattern = None

    # -- residual ---------------------------------------------------------

    def residual(self, U):
        """Stacked collocation equations plus boundary conditions.

        U has shape (n_points, d). Collocation rows are in integrated
        Runge-Kutta form: y_i - y_0 - h * sum_j A[i,j] f(y_j).
        """
        g = self.grid
        fU = np.asarray(self.f(U))
        Y = U[g.stage_index]                       # (N, s, d)
        F = fU[g.stage_index]                      # (N, s, d)
        diff = Y[:, 1:, :] - Y[:, :1, :]
        quad = g.h[:, None, None] * np.einsum("ij,njd->nid", g.A, F)
        res = (diff - quad).reshape(-1)
        bc = np.asarray(self.bc(U[0], U[-1]), dtype=float)
        return np.concatenate([res, bc])

    # -- jacobian ---------------------------------------------------------

    def jacobian(self, U):
        g = self.grid
        d = self.dim
        s = g.stages
        N = g.n_intervals
        J = np.asarray(self.f_jac(U))              # (n_points, d, d)
        Jst = J[g.stage_index]                     # (N, s, d, d)

        # block (i, j) of interval n: (delta_ij - delta_0j) I - h A[i,j] Jf(y_j)
        blocks = -(g.h[:, None, None, None, None]
                   * g.A[None, :, :, None, None] * Jst[:, None, :, :, :])
        eye = np.eye(d)
        idx = np.arange(s - 1)
        blocks[:, idx, idx + 1, :, :] += eye[None, None]
        blocks[:, :, 0, :, :] -= eye[None, None]

        if self._pattern is None:
            self._pattern = self._build_pattern()
        rows, cols, bc_rows, bc_cols = self._pattern

        B0, B1 = self.bc_jac(U[0], U[-1])
        data = np.concatenate([blocks.ravel(), np.asarray(B0).ravel(),
                               np.asarray(B1).ravel()])
        n = g.n_points * d
        return sp.csc_matrix((data, (np.concatenate([rows, bc_rows]),
                                     np.concatenate([cols, bc_cols]))), shape=(n, n))

    def _build_pattern(self):
        g = self.grid
        d = self.dim
        s = g.stages
        N = g.n_intervals
        row_base = (np.arange(N)[:, None] * (s - 1) + np.arange(s - 1)[None, :]) * d
        rows = (row_base[:, :, None, None, None]
                + np.arange(d)[None, None, None, :, None]).astype(np.int64)
        rows = np.broadcast_to(rows, (N, s - 1, s, d, d)).ravel()
        col_base = g.stage_index[:, None, :, None, None] * d
        cols = (col_base + np.arange(d)[None, None, None, None, :]).astype(np.int64)
        cols = np.broadcast_to(cols, (N, s - 1, s, d, d)).ravel()

        nbc = N * (s - 1) * d
        bc_rows = (nbc + np.repeat(np.arange(d), d)).astype(np.int64)
        bc_rows = np.concatenate([bc_rows, bc_rows])
        first = np.tile(np.arange(d), d).astype(np.int64)
        last = ((g.n_points - 1) * d + np.tile(np.arange(d), d)).astype(np.int64)
        bc_cols = np.concatenate([first, last])
        return rows, cols, bc_rows, bc_cols

    def parameter_derivative(self, dfU):
        """Residual derivative w.r.t. a scalar parameter, given df/dp at all points."""
        g = self.grid
        F = np.asarray(dfU)[g.stage_index]
        quad = -g.h[:, None, None] * np.einsum("ij,njd->nid", g.A, F)
        return np.concatenate([quad.ravel(), np.zeros(self.dim)])

    # -- dense evaluation ---------------------------------------------------

    def evaluate(self, U, x_eval):
        """Evaluate the C^1 collocation polynomial (and slope) at x_eval.

        Returns (values, derivatives), each shaped (len(x_eval), d).
        """
        g = self.grid
        x_eval = np.asarray(x_eval, dtype=float)
        fU = np.asarray(self.f(U))
        iv = g.interval_of(x_eval)
        delta = (x_eval - g.breakpoints[iv]) / g.h[iv]
        # alpha_j(delta) = integral_0^delta L_j; L_j(delta) for the slope
        m = g.stages
        pw = delta[:, None] ** np.arange(1, m + 1)[None, :]
        alph = pw @ g._anti.T                                     # (n_eval, s)
        lag = (delta[:, None] ** np.arange(m)[None, :]) @ lagrange_coefficients(g.abscissae).T
        Fst = fU[g.stage_index][iv]                               # (n_eval, s, d)
        y0 = U[g.stage_index[iv, 0]]
        vals = y0 + g.h[iv][:, None] * np.einsum("ns,nsd->nd", alph, Fst)
        derivs = np.einsum("ns,nsd->nd", lag, Fst)
        return vals, derivs


def newton_solve(problem: CollocationProblem, U0, tol=1e-10, max_iter=50,
                 max_halvings=30):
    """Damped Newton on the collocation system; returns (U, residual_norm, iters)."""
    U = np.array(U0, dtype=float)
    shape = U.shape
    res = problem.residual(U)
    rnorm = float(np.max(np.abs(res)))
    for it in range(max_iter):
        if rnorm < tol:
            return U, rnorm, it
        J = problem.jacobian(U)
        try:
            lu = splu(J)
        except RuntimeError as exc:
            raise SingularJacobianError(
                f"Jacobian factorization failed: {exc}",
                condition_estimate=_condition_estimate(J)) from exc
        step = lu.solve(-res)
        if not np.all(np.isfinite(step)):
            raise SingularJacobianError(
                "Jacobian solve produced non-finite Newton step",
                condition_estimate=_condition_estimate(J))
        t = 1.0
        for _ in range(max_halvings + 1):
            U_new = U + t * step.reshape(shape)
            res_new = problem.residual(U_new)
            rnorm_new = float(np.max(np.abs(res_new)))
            if np.isfinite(rnorm_new) and (rnorm_new < rnorm or rnorm_new < tol):
                break
            t *= 0.5
        else:
            raise NonConvergenceError(
                f"Newton stalled at residual {rnorm:.3e}", residual_norm=rnorm)
        U, res, rnorm = U_new, res_new, rnorm_new
    if rnorm < tol:
        return U, rnorm, max_iter
    raise NonConvergenceError(
        f"Newton did not reach tol={tol:.1e} in {max_iter} iterations "
        f"(residual {rnorm:.3e})", residual_norm=rnorm)


def _condition_estimate(J):
    try:
        lu = splu(J.tocsc() + sp.eye(J.shape[0], format="csc") * 0.0)
        inv = LinearOperator(J.shape, matvec=lu.solve)
        return float(onenormest(J) * onenormest(inv))
    except Exception:
        return float("inf")
