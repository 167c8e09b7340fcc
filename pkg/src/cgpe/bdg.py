"""Linear stability of stationary states: the two-component eigenproblem.

An azimuthal perturbation of a stationary background phi(r) e^{i m theta}
with sideband amplitudes u(r), v(r) obeys the block eigenproblem

    [[ L1p,  L2 ],      [u]     [u]
     [-L2*, -L1q*]]  @  [v] = w [v],

    L1p = -mu - d^2/dr^2 - (1/r) d/dr + p^2/r^2 + V(r)
          + 2 (1 - i sigma) |phi|^2 + i w_pump(r),
    L2  = (1 - i sigma) phi^2,

where p and q are the angular indices of the two sidebands: p = q = n for a
symmetric (m = 0) background probed with mode n, and p = m + n, q = m - n for
a central vortex of winding m. The state is linearly unstable iff some
eigenvalue has positive imaginary part.

Radial operators are discretized by centered differences on a staggered grid
r_k = (k - 1/2) h (no node at the coordinate singularity), with Dirichlet
behavior at r = 0 enforced by odd ghost reflection (even for a zero angular
index) and a homogeneous Dirichlet outer boundary at r = b.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .collocation import NonConvergenceError, SingularJacobianError
from .model import ModelParams
from .radial import RadialProfile, solve_stationary, thomas_fermi_guess

DEFAULT_GRID = 600

# Dense eigensolves carry a backward error ~ eps * ||M|| (||M|| ~ 1/h^2 here),
# which shows up as +-1e-12-scale imaginary parts on real grid modes. Growth
# rates below this floor are treated as zero when calling a verdict.
IM_NOISE_FLOOR = 1e-9


class EigenSolverError(RuntimeError):
    """Dense eigensolver failed to converge."""


def _radial_second_order_block(r, h, angular_index, profile_sq_abs, mu, params):
    """Dense matrix of L1 for one angular index on the staggered grid."""
    n = r.size
    idx = abs(int(angular_index))
    diag = (2.0 / h ** 2 + idx ** 2 / r ** 2 + params.potential(r) - mu
            + 2.0 * (1.0 - 1j * params.sigma) * profile_sq_abs
            + 1j * params.pump_rate(r))
    upper = -1.0 / h ** 2 - 1.0 / (2.0 * h * r[:-1])
    lower = -1.0 / h ** 2 + 1.0 / (2.0 * h * r[1:])
    L = np.diag(diag.astype(complex))
    L += np.diag(upper.astype(complex), k=1)
    L += np.diag(lower.astype(complex), k=-1)
    # inner ghost: u(-h/2) = s u(h/2), s = +1 for angular index 0, else -1
    s_in = 1.0 if idx == 0 else -1.0
    L[0, 0] += s_in * (-1.0 / h ** 2 + 1.0 / (2.0 * h * r[0]))
    # outer ghost: u(b + h/2) = -u(b - h/2), i.e. u(b) = 0
    L[-1, -1] += -(-1.0 / h ** 2 - 1.0 / (2.0 * h * r[-1]))
    return L


@dataclass
class BdgOperator:
    """Assembled perturbation operator around one stationary profile."""

    r: np.ndarray
    L1: np.ndarray               # upper-left block (angular index p)
    L1_minus: np.ndarray         # lower-right block before conjugation (index q)
    L2: np.ndarray               # coupling diagonal (1 - i sigma) phi^2
    mode: int
    profile: RadialProfile = field(repr=False, default=None)

    def matrix(self) -> np.ndarray:
        n = self.r.size
        M = np.empty((2 * n, 2 * n), dtype=complex)
        M[:n, :n] = self.L1
        M[:n, n:] = np.diag(self.L2)
        M[n:, :n] = -np.diag(np.conj(self.L2))
        M[n:, n:] = -np.conj(self.L1_minus)
        return M


def assemble_bdg(profile: RadialProfile, m: int, n_grid: int = DEFAULT_GRID,
                 angular: Optional[tuple] = None) -> BdgOperator:
    """Operator for perturbation mode m around a profile.

    For winding backgrounds the sideband angular indices are m_bg + m and
    m_bg - m; `angular` overrides them explicitly if given.
    """
    if n_grid < 100:
        raise ValueError("n_grid must be at least 100")
    if m < 1:
        raise ValueError("perturbation mode must be >= 1")
    params = profile.params
    b = params.b
    if profile.r[-1] < b - 1e-9:
        raise ValueError("profile does not cover the radial domain")
    h = b / n_grid
    r = (np.arange(n_grid) + 0.5) * h
    phi = profile.phi_at(r)
    dens = np.abs(phi) ** 2
    if angular is None:
        p, q = profile.m + m, profile.m - m
    else:
        p, q = angular
    L1 = _radial_second_order_block(r, h, p, dens, profile.mu, params)
    L1m = _radial_second_order_block(r, h, q, dens, profile.mu, params)
    L2 = (1.0 - 1j * params.sigma) * phi ** 2
    return BdgOperator(r=r, L1=L1, L1_minus=L1m, L2=L2, mode=m, profile=profile)


def eigen_spectrum(op: BdgOperator) -> np.ndarray:
    """All eigenvalues of the block operator, sorted by descending Im."""
    M = op.matrix()
    if not np.all(np.isfinite(M)):
        raise EigenSolverError("operator contains non-finite entries")
    try:
        w = sla.eigvals(M, check_finite=False, overwrite_a=True)
    except sla.LinAlgError as exc:           # pragma: no cover - LAPACK failure
        raise EigenSolverError(f"dense eigensolve failed: {exc}") from exc
    return w[np.argsort(-w.imag)]


@dataclass
class ModeResult:
    m: int
    max_im: float
    leading: np.ndarray          # eigenvalues with the largest imaginary parts
    spectrum: Optional[np.ndarray] = None


@dataclass
class StabilityReport:
    """Outcome of a scan over azimuthal perturbation modes."""

    modes: list
    n_grid: int
    profile: RadialProfile = field(repr=False, default=None)

    @property
    def max_im(self) -> float:
        return max(mode.max_im for mode in self.modes)

    @property
    def stable(self) -> bool:
        """Stable iff the largest growth rate is negative (above rounding)."""
        return self.max_im < IM_NOISE_FLOOR

    @property
    def verdict(self) -> str:
        return "stable" if self.stable else "unstable"

    def mode_table(self) -> np.ndarray:
        return np.array([(mode.m, mode.max_im) for mode in self.modes])


def _scan(profile, mode_values, n_grid, keep, keep_spectra, workers, early_exit,
          angular_for=None):
    def one(m):
        ang = angular_for(m) if angular_for else None
        spec = eigen_spectrum(assemble_bdg(profile, m, n_grid, angular=ang))
        return ModeResult(m=m, max_im=float(spec[0].imag), leading=spec[:keep],
                          spectrum=spec if keep_spectra else None)

    modes = []
    mode_values = list(mode_values)
    if early_exit:
        for m in mode_values:
            res = one(m)
            modes.append(res)
            if res.max_im > 0:
                break
    elif workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            modes = list(pool.map(one, mode_values))
    else:
        modes = [one(m) for m in mode_values]
    return StabilityReport(modes=modes, n_grid=n_grid, profile=profile)


def stability_scan(profile: RadialProfile, modes: Iterable[int] = range(1, 51),
                   n_grid: int = DEFAULT_GRID, keep: int = 8,
                   keep_spectra: bool = False, workers: int = 2,
                   early_exit: bool = False) -> StabilityReport:
    """Max Im(w) per azimuthal mode for a symmetric (m = 0) background."""
    modes = list(modes)
    if not modes or min(modes) < 1:
        raise ValueError("mode range must be nonempty with modes >= 1")
    if profile.m != 0:
        raise ValueError("use central_vortex_stability for winding backgrounds")
    return _scan(profile, modes, n_grid, keep, keep_spectra, workers, early_exit)


def central_vortex_stability(profile: RadialProfile,
                             modes: Iterable[int] = range(1, 51),
                             n_grid: int = DEFAULT_GRID, keep: int = 8,
                             keep_spectra: bool = False, workers: int = 2,
                             early_exit: bool = False) -> StabilityReport:
    """Scan for winding backgrounds; sidebands carry indices m_bg +- n."""
    modes = list(modes)
    if not modes or min(modes) < 1:
        raise ValueError("mode range must be nonempty with modes >= 1")
    if profile.m < 1:
        raise ValueError("profile must have winding >= 1")
    return _scan(profile, modes, n_grid, keep, keep_spectra, workers,
                 early_exit, angular_for=lambda n: (profile.m + n, profile.m - n))


@dataclass
class CurvePoint:
    R: float
    max_im: Optional[float]      # None marks a failed stationary solve
    mu: Optional[float] = None


@dataclass
class StabilityCurve:
    points: list
    threshold_bracket: Optional[tuple] = None

    @property
    def threshold(self) -> Optional[float]:
        if self.threshold_bracket is None:
            return None
        return 0.5 * (self.threshold_bracket[0] + self.threshold_bracket[1])


def _max_im_at(params, R, modes, n_grid, workers, early_exit, solver_kwargs):
    pr = params.with_(pump_radius=R)
    prof = solve_stationary(pr, **solver_kwargs)
    rep = _scan(prof, modes, n_grid, keep=1, keep_spectra=False,
                workers=workers, early_exit=early_exit)
    return prof, rep.max_im


def stability_curve(params: ModelParams, R_values: Sequence[float],
                    modes: Iterable[int] = range(1, 51),
                    n_grid: int = DEFAULT_GRID, workers: int = 2,
                    refine_threshold: bool = True, bracket_width: float = 0.1,
                    solver_kwargs: Optional[dict] = None) -> StabilityCurve:
    """Stability verdicts along a grid of pump radii, plus the upper threshold.

    Each point solves the stationary problem from the Thomas-Fermi guess and
    scans the requested modes; solve failures are recorded as gaps, not fatal.
    When the scan changes sign between consecutive radii, the instability
    threshold is localized by bisection to the requested bracket width (the
    bisection scan stops at the first unstable mode, which only affects
    runtime, not the sign).
    """
    modes = list(modes)
    solver_kwargs = solver_kwargs or {}
    points = []
    for R in R_values:
        try:
            prof, max_im = _max_im_at(params, R, modes, n_grid, workers,
                                      False, solver_kwargs)
            points.append(CurvePoint(R=float(R), max_im=max_im, mu=prof.mu))
        except (NonConvergenceError, SingularJacobianError):
            points.append(CurvePoint(R=float(R), max_im=None))

    bracket = None
    if refine_threshold:
        ok = [pt for pt in points if pt.max_im is not None]
        for lo_pt, hi_pt in zip(ok[:-1], ok[1:]):
            if lo_pt.max_im < IM_NOISE_FLOOR <= hi_pt.max_im:
                lo, hi = lo_pt.R, hi_pt.R
                while hi - lo > bracket_width:
                    mid = 0.5 * (lo + hi)
                    try:
                        _, max_im = _max_im_at(params, mid, modes, n_grid,
                                               workers, True, solver_kwargs)
                    except (NonConvergenceError, SingularJacobianError):
                        break
                    if max_im < IM_NOISE_FLOOR:
                        lo = mid
                    else:
                        hi = mid
                bracket = (lo, hi)
                break
    return StabilityCurve(points=points, threshold_bracket=bracket)
