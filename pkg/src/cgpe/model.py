"""Model definition: pumped-decaying Gross-Pitaevskii parameters, traps, meshes.

The equation solved throughout the package is

    i psi_t = -Lap psi + V(x) psi + |psi|^2 psi + i (w(x) - sigma |psi|^2) psi

on the plane, with a harmonic trap V(r) = r^2 by default and a pump
w(r) = alpha * Theta(R - r), where Theta is a tanh-smoothed step.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np
from scipy.interpolate import CubicSpline


def smoothed_heaviside(x, kappa):
    """Smoothed unit step (1 + tanh(kappa*x)) / 2; equals 1/2 at x = 0."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return 0.5 * (1.0 + np.tanh(kappa * np.asarray(x, dtype=float)))


class HarmonicTrap:
    """V(r) = r^2, evaluated exactly."""

    name = "harmonic"

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return r * r

    def derivative(self, r):
        return 2.0 * np.asarray(r, dtype=float)


class TabulatedTrap:
    """Trap defined by (r, V) samples on [0, r_max], cubic-spline interpolated.

    The spline keeps V twice continuously differentiable, which the spectral
    time stepper needs; plain linear interpolation would inject grid-scale
    phase noise.
    """

    name = "tabulated"

    def __init__(self, r, V, source=""):
        r = np.asarray(r, dtype=float)
        V = np.asarray(V, dtype=float)
        if r.ndim != 1 or r.shape != V.shape or r.size < 4:
            raise ValueError("need matching 1D r, V arrays with >= 4 samples")
        if np.any(np.diff(r) <= 0):
            raise ValueError("trap radii must be strictly increasing")
        self.r = r
        self.V = V
        self.source = source
        self._spline = CubicSpline(r, V, bc_type="natural")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self._spline(np.clip(r, self.r[0], self.r[-1]))

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        return self._spline(np.clip(r, self.r[0], self.r[-1]), 1)


Trap = Union[HarmonicTrap, TabulatedTrap]


@dataclass(frozen=True)
class ModelParams:
    """One problem instance. Immutable; safe to share across worker threads.

    alpha   : pump strength (> 0 for driven runs; 0 gives the trivial branch)
    sigma   : decay strength (>= 0)
    pump_radius : radius R of the pumped disk
    kappa   : steepness of the smoothed step at the pump edge
    b       : radial truncation radius of the computational domain (> R)
    trap    : potential; HarmonicTrap() unless a tabulated/manufactured V is set
    """

    alpha: float = 4.4
    sigma: float = 0.3
    pump_radius: float = 2.0
    kappa: float = 10.0
    b: float = 15.0
    trap: Trap = field(default_factory=HarmonicTrap)

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.pump_radius <= 0:
            raise ValueError("pump radius must be positive")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.b <= self.pump_radius:
            raise ValueError("domain radius b must exceed the pump radius")

    def potential(self, r):
        return self.trap(r)

    def pump_rate(self, r):
        """alpha * Theta(R - r): local gain rate."""
        return self.alpha * smoothed_heaviside(self.pump_radius - np.asarray(r, float), self.kappa)

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


def pump_profile(r, params: ModelParams):
    """Pump profile w(r) = alpha * Theta(R - r); monotone nonincreasing in r."""
    return params.pump_rate(r)


def _fd4_derivative(f, h):
    """First derivative of uniform samples, 4th-order stencils incl. edges."""
    f = np.asarray(f, dtype=float)
    n = f.size
    if n < 5:
        raise ValueError("need at least 5 samples")
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    return d


def manufactured_potential(omega_profile: Callable, sigma: float, C: float = 0.0,
                           r_max: float = 15.0, num: int = 8001) -> TabulatedTrap:
    """Trap for which rho = w(r)/sigma, J = 0 is an exact stationary state.

    Given a smooth, strictly positive pump profile w(r), returns the tabulated
    potential

        V(r) = C + Lap sqrt(w) / sqrt(w) - w(r)/sigma

    with the radial Laplacian (1/r)(r f')' evaluated by 4th-order finite
    differences on a fine uniform auxiliary grid. The stationary state then
    has chemical potential C.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = np.linspace(0.0, r_max, num)
    w = np.asarray(omega_profile(r), dtype=float)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("pump profile must be strictly positive on [0, r_max]")
    h = r[1] - r[0]
    s = np.sqrt(w)
    s1 = _fd4_derivative(s, h)
    s2 = _fd4_derivative(s1, h)
    lap = np.empty_like(s)
    lap[1:] = s2[1:] + s1[1:] / r[1:]
    # radial limit at the origin: f'/r -> f''(0)
    lap[0] = 2.0 * s2[0]
    V = C + lap / s - w / sigma
    return TabulatedTrap(r, V, source="manufactured")


# Collocation abscissae: 4-point Lobatto family on [0, 1] (endpoints included).
LOBATTO4 = np.array([0.0, 0.5 - np.sqrt(5.0) / 10.0, 0.5 + np.sqrt(5.0) / 10.0, 1.0])


@dataclass(frozen=True)
class RadialMesh:
    """Breakpoints on [0, b] plus the per-interval collocation abscissae."""

    nodes: np.ndarray
    abscissae: np.ndarray = field(default_factory=lambda: LOBATTO4.copy())

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes[0] != 0.0:
            raise ValueError("first mesh node must be exactly 0")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        c = np.asarray(self.abscissae, dtype=float)
        object.__setattr__(self, "abscissae", c)
        if c[0] != 0.0 or c[-1] != 1.0 or np.any(np.diff(c) <= 0):
            raise ValueError("abscissae must satisfy 0 = c1 < ... < cm = 1")

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_intervals(self) -> int:
        return self.nodes.size - 1

    def collocation_points(self) -> np.ndarray:
        """All distinct collocation radii (interval endpoints shared)."""
        nodes, c = self.nodes, self.abscissae
        h = np.diff(nodes)
        pts = (nodes[:-1, None] + np.outer(h, c[:-1])).ravel()
        return np.append(pts, nodes[-1])


def uniform_mesh(b: float, n_intervals: int) -> RadialMesh:
    return RadialMesh(np.linspace(0.0, b, n_intervals + 1))


def graded_mesh(b: float, n_intervals: int, focus: float, width: float = 1.5,
                boost: float = 3.0) -> RadialMesh:
    """Mesh refined around r = focus (the pump edge, where Theta varies fast).

    Interval density is `boost` times higher on [focus-width, focus+width];
    reverts to a uniform mesh when the focus window leaves the domain.
    """
    lo, hi = focus - width, focus + width
    if lo <= 0.0 or hi >= b or boost <= 1.0:
        return uniform_mesh(b, n_intervals)
    seg_len = np.array([lo, hi - lo, b - hi])
    weight = seg_len * np.array([1.0, boost, 1.0])
    counts = np.maximum(1, np.rint(n_intervals * weight / weight.sum()).astype(int))
    pieces = [np.linspace(0.0, lo, counts[0] + 1),
              np.linspace(lo, hi, counts[1] + 1)[1:],
              np.linspace(hi, b, counts[2] + 1)[1:]]
    return RadialMesh(np.concatenate(pieces))
