"""Laplace transform of the exit time of the unstable scalar channel.

For the channel d(eta) = (3/2 + h)*eta dt + sqrt(2*kappa2) dW started inside
(-eta_star, eta_star), let T be the first exit time.  The transform
G_s(eta) = E_eta[exp(s T)] is finite for 0 < s < h + 3/2 and has the closed
oscillatory-integral representation

    G_s(eta) = Ic(a, sqrt(b)*eta) / Ic(a, sqrt(b)*eta_star),
    a = s / (h + 3/2),    b = (h + 3/2) / kappa2,

with Ic as in :mod:`pairdrift.quadrature`, together with

    G_s'(eta)  = -sqrt(b) * Is(a, sqrt(b)*eta) / Ic(a, sqrt(b)*eta_star)
    G_s''(eta) = -b * Ic(a+2, sqrt(b)*eta) / Ic(a, sqrt(b)*eta_star).

G_s solves kappa2*G'' + (h + 3/2)*eta*G' + s*G = 0 with G(+-eta_star) = 1,
is even, at least 1 on the interval, and non-increasing in |eta|.
"""

from __future__ import annotations

import numpy as np

from .model import ModelParams
from .quadrature import OscMoment

__all__ = ["ExitLaplace"]


class ExitLaplace:
    """Evaluator for G_s and its first two eta-derivatives on [-eta*, eta*]."""

    def __init__(self, s: float, h: float, kappa2: float, eta_star: float):
        rate = h + 1.5
        if not (0.0 < s < rate):
            raise ValueError(f"s must lie in (0, h + 3/2) = (0, {rate}), got {s}")
        if eta_star <= 0:
            raise ValueError("eta_star must be positive")
        self.s = float(s)
        self.h = float(h)
        self.kappa2 = float(kappa2)
        self.eta_star = float(eta_star)
        self.a = s / rate
        self.b = rate / kappa2
        w_star = np.sqrt(self.b) * eta_star
        self._cos_a = OscMoment(self.a, w_star, "cos")
        self._sin_a = OscMoment(self.a, w_star, "sin")
        self._cos_a2 = OscMoment(self.a + 2.0, w_star, "cos")
        self.denom = float(self._cos_a(np.array([w_star]))[0])
        if not self.denom > 0:
            raise RuntimeError("normalizing integral is not positive; "
                               "quadrature resolution too low")

    @classmethod
    def for_params(cls, s: float, p: ModelParams, eta_star: float) -> "ExitLaplace":
        return cls(s, p.h, p.kappa2, eta_star)

    def _omega(self, eta):
        eta = np.asarray(eta, dtype=float)
        if np.any(np.abs(eta) > self.eta_star * (1.0 + 1e-9)):
            raise ValueError("eta outside [-eta_star, eta_star]")
        return np.sqrt(self.b) * eta

    def value(self, eta):
        w = self._omega(eta)
        out = self._cos_a(np.abs(w)) / self.denom
        # the boundary value is the normalizing integral over itself
        out[np.abs(np.asarray(eta, float)) == self.eta_star] = 1.0
        return out

    def deriv(self, eta):
        w = self._omega(eta)
        mag = -np.sqrt(self.b) * self._sin_a(np.abs(w)) / self.denom
        return np.sign(w) * mag

    def second(self, eta):
        w = self._omega(eta)
        return -self.b * self._cos_a2(np.abs(w)) / self.denom

    def ode_residual(self, eta):
        """kappa2*G'' + (h+3/2)*eta*G' + s*G, which vanishes for the exact law."""
        eta = np.asarray(eta, dtype=float)
        return (self.kappa2 * self.second(eta)
                + (self.h + 1.5) * eta * self.deriv(eta)
                + self.s * self.value(eta))

    def to_csv(self, fileobj, n: int = 401) -> None:
        """Table of (eta, G, G', G'') on a uniform grid over the interval."""
        eta = np.linspace(-self.eta_star, self.eta_star, n)
        g, g1, g2 = self.value(eta), self.deriv(eta), self.second(eta)
        fileobj.write("eta,G,G_prime,G_second\n")
        for row in zip(eta, g, g1, g2):
            fileobj.write(",".join(repr(float(c)) for c in row) + "\n")
