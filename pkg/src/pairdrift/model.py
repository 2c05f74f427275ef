"""Phase-space model: parameters, states, coordinate charts, drift and diffusion.

Four coupled dynamical systems live here:

* the reflected planar system in (x, y, z) on R x R x (0, 1],

      dx = -gamma*x dt - (h*x^2 - y^2)/z dt + sqrt(2*kappa1) dW1
      dy = -gamma*y dt - (1+h)*x*y/z dt    + sqrt(2*kappa2) dW2
      dz = (1-h)*x dt - dk,

  where k is the boundary local time at z = 1 (owned by the integrator);

* the same system in the rescaled chart u = x*z^(-1/3), v = y*z^(-1/3),

      du = -gamma*u dt - (a_h*u^2 - v^2)/z^(2/3) dt + sqrt(2*kappa1)/z^(1/3) dW1 + u/(3z) dk
      dv = -gamma*v dt - (a_h+1)*u*v/z^(2/3) dt    + sqrt(2*kappa2)/z^(1/3) dW2 + v/(3z) dk
      dz = (1-h)*u*z^(1/3) dt - dk,

  with a_h = 1/3 + (2/3)*h (again the dk terms belong to the integrator);

* the boundary-free auxiliary system (U, V, Z) that captures the
  large-radius / small-z limit,

      dU = -(a_h*U^2 - V^2) dt + sqrt(2*kappa1) dW1
      dV = -(a_h+1)*U*V dt     + sqrt(2*kappa2) dW2
      dZ = (1-h)*U*Z dt;

* the scalar unstable channel eta = |u|^(1/2)*v near the negative u-axis,

      d(eta) = (3/2 + h)*eta dt + sqrt(2*kappa2) dW.

Drift evaluation is pure and vectorizes over numpy arrays; reflection is
never handled here.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Chart",
    "ModelParams",
    "State",
    "AuxState",
    "ExplosionScaleError",
    "drift_xyz",
    "diffusion_xyz",
    "drift_uvz",
    "diffusion_uvz",
    "drift_aux",
    "diffusion_aux",
    "drift_eta",
    "diffusion_eta",
    "to_uvz",
    "to_xyz",
]


class ExplosionScaleError(RuntimeError):
    """Raised when a drift evaluation produces non-finite values.

    This happens only for states the integrator should already have cut
    off via its stopping radius / z floor; the error marks the state as
    explosion-scale rather than silently propagating inf/nan.
    """


class Chart(enum.Enum):
    XYZ = "xyz"
    UVZ = "uvz"


@dataclass(frozen=True)
class ModelParams:
    """Physical and noise parameters (gamma, h, kappa1, kappa2).

    ``alpha_h`` is always derived as 1/3 + (2/3)*h, never user supplied.
    When ``rough_physical`` is set, the constructor additionally asserts
    the rough-flow noise correspondence kappa2/kappa1 = 1 + 2h.
    """

    gamma: float = 1.0
    h: float = 0.5
    kappa1: float = 1.0
    kappa2: float = 1.0
    rough_physical: bool = False

    def __post_init__(self):
        if not (self.gamma > 0):
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not (0.0 < self.h < 1.0):
            raise ValueError(f"h must lie in (0, 1), got {self.h}")
        if not (self.kappa1 > 0 and self.kappa2 > 0):
            raise ValueError("noise intensities kappa1, kappa2 must be positive")
        if self.rough_physical:
            if abs(self.kappa2 / self.kappa1 - (1.0 + 2.0 * self.h)) > 1e-12:
                raise ValueError(
                    "rough_physical requires kappa2/kappa1 = 1 + 2h within 1e-12, "
                    f"got kappa2/kappa1 = {self.kappa2 / self.kappa1!r} for h = {self.h!r}"
                )

    @property
    def alpha_h(self) -> float:
        return 1.0 / 3.0 + (2.0 / 3.0) * self.h

    @classmethod
    def physical(cls, h: float, gamma: float = 1.0, kappa1: float = 1.0) -> "ModelParams":
        """Rough-flow parameter set with kappa2 = (1 + 2h)*kappa1."""
        return cls(gamma=gamma, h=h, kappa1=kappa1,
                   kappa2=(1.0 + 2.0 * h) * kappa1, rough_physical=True)


@dataclass(frozen=True)
class State:
    """A phase-space point in either chart; the third coordinate is z in (0, 1]."""

    chart: Chart
    c1: float
    c2: float
    c3: float

    def __post_init__(self):
        if not (0.0 < self.c3 <= 1.0):
            raise ValueError(f"z must lie in (0, 1], got {self.c3}")

    def as_array(self) -> np.ndarray:
        return np.array([self.c1, self.c2, self.c3], dtype=float)

    def to_uvz(self) -> "State":
        if self.chart is Chart.UVZ:
            return self
        w = self.c3 ** (-1.0 / 3.0)
        return State(Chart.UVZ, self.c1 * w, self.c2 * w, self.c3)

    def to_xyz(self) -> "State":
        if self.chart is Chart.XYZ:
            return self
        w = self.c3 ** (1.0 / 3.0)
        return State(Chart.XYZ, self.c1 * w, self.c2 * w, self.c3)


@dataclass(frozen=True)
class AuxState:
    """A point of the boundary-free auxiliary system; Z is unconstrained above 0."""

    U: float
    V: float
    Z: float = 1.0

    def __post_init__(self):
        if not (self.Z > 0):
            raise ValueError(f"Z must be positive, got {self.Z}")

    @property
    def eta(self) -> float:
        """Channel coordinate |U|^(1/2) * V."""
        return math.sqrt(abs(self.U)) * self.V


def _check_finite(out: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise ExplosionScaleError("drift evaluation produced non-finite values "
                                  "(explosion-scale state)")
    return out


def drift_xyz(s, p: ModelParams):
    """Drift of the (x, y, z) system. Accepts a State or (x, y, z) arrays."""
    if isinstance(s, State):
        if s.chart is not Chart.XYZ:
            raise ValueError("drift_xyz expects a state in the xyz chart")
        x, y, z = s.c1, s.c2, s.c3
    else:
        x, y, z = s
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    bx = -p.gamma * x - (p.h * x * x - y * y) / z
    by = -p.gamma * y - (1.0 + p.h) * x * y / z
    bz = (1.0 - p.h) * x
    return _check_finite(np.stack(np.broadcast_arrays(bx, by, bz)))


def diffusion_xyz(p: ModelParams):
    """Constant noise amplitudes (sqrt(2*kappa1), sqrt(2*kappa2)) of the xyz system."""
    return math.sqrt(2.0 * p.kappa1), math.sqrt(2.0 * p.kappa2)


def drift_uvz(s, p: ModelParams):
    """Drift of the (u, v, z) chart; the dk terms are the integrator's job."""
    if isinstance(s, State):
        if s.chart is not Chart.UVZ:
            raise ValueError("drift_uvz expects a state in the uvz chart")
        u, v, z = s.c1, s.c2, s.c3
    else:
        u, v, z = s
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    z = np.asarray(z, dtype=float)
    ah = p.alpha_h
    z23 = z ** (2.0 / 3.0)
    bu = -p.gamma * u - (ah * u * u - v * v) / z23
    bv = -p.gamma * v - (ah + 1.0) * u * v / z23
    bz = (1.0 - p.h) * u * z ** (1.0 / 3.0)
    return _check_finite(np.stack(np.broadcast_arrays(bu, bv, bz)))


def diffusion_uvz(s, p: ModelParams):
    """State-dependent noise amplitudes (sqrt(2*k1)/z^(1/3), sqrt(2*k2)/z^(1/3))."""
    z = s.c3 if isinstance(s, State) else s[2]
    z13 = np.asarray(z, dtype=float) ** (1.0 / 3.0)
    return math.sqrt(2.0 * p.kappa1) / z13, math.sqrt(2.0 * p.kappa2) / z13


def drift_aux(a, p: ModelParams):
    """Drift of the boundary-free (U, V, Z) system."""
    if isinstance(a, AuxState):
        U, V, Z = a.U, a.V, a.Z
    else:
        U, V, Z = a
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    Z = np.asarray(Z, dtype=float)
    ah = p.alpha_h
    bU = -(ah * U * U - V * V)
    bV = -(ah + 1.0) * U * V
    bZ = (1.0 - p.h) * U * Z
    return _check_finite(np.stack(np.broadcast_arrays(bU, bV, bZ)))


def diffusion_aux(p: ModelParams):
    return math.sqrt(2.0 * p.kappa1), math.sqrt(2.0 * p.kappa2)


def drift_eta(eta, p: ModelParams):
    """Drift (3/2 + h)*eta of the scalar unstable channel."""
    return (1.5 + p.h) * np.asarray(eta, dtype=float)


def diffusion_eta(p: ModelParams) -> float:
    return math.sqrt(2.0 * p.kappa2)


def to_uvz(x, y=None, z=None):
    """Chart map (x, y, z) -> (x*z^(-1/3), y*z^(-1/3), z).

    Accepts a State (returns a State) or three arrays (returns three arrays).
    """
    if isinstance(x, State):
        return x.to_uvz()
    w = np.asarray(z, dtype=float) ** (-1.0 / 3.0)
    return np.asarray(x) * w, np.asarray(y) * w, np.asarray(z, dtype=float)


def to_xyz(u, v=None, z=None):
    """Inverse chart map (u, v, z) -> (u*z^(1/3), v*z^(1/3), z)."""
    if isinstance(u, State):
        return u.to_xyz()
    w = np.asarray(z, dtype=float) ** (1.0 / 3.0)
    return np.asarray(u) * w, np.asarray(v) * w, np.asarray(z, dtype=float)
