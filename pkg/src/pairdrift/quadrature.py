"""Deterministic quadrature kernels used by the Lyapunov construction.

Two families of integrals appear in the closed-form local functions:

* the cone integral  int_x^{1/C} (1 + t^2)^{(alpha-beta-1)/2} dt  with a
  bounded, analytic integrand on [-C, 1/C];

* the oscillatory half-line moments

      Ic(a, w) = int_0^inf t^(a-1) exp(-t^2/2) cos(w t) dt
      Is(a, w) = int_0^inf t^a     exp(-t^2/2) sin(w t) dt

  whose integrand has an endpoint singularity t^(a-1) for a in (0, 1) and
  decays under oscillation for large w.

Both are evaluated by composite Gauss-Legendre panels.  The endpoint
singularity is removed exactly by the substitution w = t^a on [0, 1]
(t^(a-1) dt = dw / a); panel counts scale with the oscillation frequency so
the rule stays spectrally accurate.  Everything is vectorized and
deterministic.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["gl_panels", "ConeIntegral", "OscMoment"]

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl_rule(n: int):
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (x, w)
    return _GL_CACHE[n]


def gl_panels(edges: np.ndarray, n: int = 16):
    """Nodes and weights of an n-point Gauss-Legendre rule on each panel.

    ``edges`` is an increasing array of panel boundaries; returns flattened
    (nodes, weights) covering [edges[0], edges[-1]].
    """
    edges = np.asarray(edges, dtype=float)
    x, w = _gl_rule(n)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


class ConeIntegral:
    """Antiderivative machinery for f(t) = (1 + t^2)^((alpha-beta-1)/2).

    Provides ``tail(x) = int_x^{1/C} f(t) dt`` for x in [-C, 1/C], and the
    full integral over [-C, 1/C].  Uses a fixed dyadic panel decomposition of
    [0, C] with per-point partial panels, which keeps the evaluation exact to
    machine precision and vectorized over x.
    """

    NODES = 24

    def __init__(self, alpha: float, beta: float, C: float):
        if not (0.0 < beta < alpha < 1.0):
            raise ValueError("cone integral expects 0 < beta < alpha < 1")
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.C = float(C)
        self.expo = 0.5 * (alpha - beta - 1.0)
        edges = [0.0, 0.5]
        while edges[-1] < self.C:
            edges.append(min(2.0 * edges[-1], self.C) if edges[-1] * 2.0 < self.C
                         else self.C)
        self.edges = np.array(edges)
        nodes, weights = gl_panels(self.edges, self.NODES)
        vals = self._f(nodes)
        # cumulative antiderivative A(e_k) = int_0^{e_k} f
        per_panel = (weights * vals).reshape(len(self.edges) - 1, self.NODES).sum(axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(per_panel)])

    def _f(self, t):
        return (1.0 + t * t) ** self.expo

    def integrand(self, t):
        """The integrand itself (also the exact x-derivative of -tail)."""
        return self._f(np.asarray(t, dtype=float))

    def antiderivative(self, x):
        """A(x) = int_0^x f(t) dt, odd in x, vectorized."""
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        if np.any(ax > self.C * (1.0 + 1e-12)):
            raise ValueError("cone integral evaluated outside [-C, C]")
        ax = np.minimum(ax, self.C)
        k = np.clip(np.searchsorted(self.edges, ax, side="right") - 1,
                    0, len(self.edges) - 2)
        lo = self.edges[k]
        xi, wi = _gl_rule(self.NODES)
        mid = 0.5 * (lo + ax)
        half = 0.5 * (ax - lo)
        t = mid[..., None] + half[..., None] * xi
        partial = (self._f(t) * wi).sum(axis=-1) * half
        return np.sign(x) * (self.cum[k] + partial)

    def tail(self, x):
        """int_x^{1/C} f(t) dt for x <= 1/C."""
        return self.antiderivative(1.0 / self.C) - self.antiderivative(x)

    @property
    def full(self) -> float:
        """int_{-C}^{1/C} f(t) dt."""
        return float(self.tail(-self.C))


class OscMoment:
    """Fixed node/weight table for one of the half-line oscillatory moments.

    ``kind='cos'`` integrates t^(a-1) exp(-t^2/2) cos(w t); ``kind='sin'``
    integrates t^a exp(-t^2/2) sin(w t).  The table is valid for any
    |w| <= omega_max passed at construction.

    The algebraic factor t^c (c = a-1 or a) is handled exactly by a
    Gauss-Jacobi rule on an initial interval short enough that the remaining
    analytic factor carries at most a few radians of phase; past it,
    composite Gauss-Legendre panels are sized to the oscillation.
    """

    NODES = 16
    JACOBI_NODES = 24
    TMAX = 10.5

    def __init__(self, a: float, omega_max: float, kind: str = "cos"):
        if a <= 0:
            raise ValueError("exponent a must be positive")
        self.a = float(a)
        self.kind = kind
        omega_max = max(float(omega_max), 1.0)
        c = a - 1.0 if kind == "cos" else a
        t0 = min(1.0, 4.0 / omega_max)
        from scipy.special import roots_jacobi
        xj, wj = roots_jacobi(self.JACOBI_NODES, 0.0, c)
        tj = 0.5 * t0 * (xj + 1.0)
        ampj = (0.5 * t0) ** (c + 1.0) * wj * np.exp(-0.5 * tj * tj)
        n_pan = max(8, int(math.ceil((self.TMAX - t0) * omega_max / math.pi)) + 2)
        nodes, weights = gl_panels(np.linspace(t0, self.TMAX, n_pan + 1), self.NODES)
        amp = weights * nodes ** c * np.exp(-0.5 * nodes * nodes)
        self.t = np.concatenate([tj, nodes])
        self.amp = np.concatenate([ampj, amp])

    def __call__(self, omega, chunk: int = 256):
        """Evaluate the moment at an array of frequencies."""
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        out = np.empty_like(omega)
        for i in range(0, omega.size, chunk):
            w = omega[i:i + chunk, None]
            if self.kind == "cos":
                out[i:i + chunk] = np.cos(w * self.t) @ self.amp
            else:
                out[i:i + chunk] = np.sin(w * self.t) @ self.amp
        return out
