"""Open-loop controls steering the reflected system to the anchor state.

Every start (x, y, z) in the truncated domain is driven to
x_* = (0, 0, 1/2) in time T by prescribing a smooth height bridge and
differentiating the dynamics:

* Low case (z <= 3/4): a bridge F with F(0) = 0, F'(0) = (1-h)x,
  F(T) = 1/2 - z, F'(T) = 0 staying strictly inside the corridor
  -z < F < 1 - z; then x~ = F'/(1-h), z~ = z + F, and the boundary is
  never touched (k~ = 0).

* High case (z >= 3/4): a bridge G with G(0) = 0, G'(0) = (1-h)x,
  G(T) = -1/4, G'(T) = 0, running maximum exactly +1/4 and minimum
  exactly -1/4; then z~ = z + G - k~ with the running-max local time
  k~(t) = max(0, max_{s<=t} G(s) - (1 - z)), which lands z~(T) = 1/2
  for every start with z >= 3/4 and increases only while z~ = 1.

The transverse coordinate rides a cubic bridge from y to 0 and the
controls are read off the controlled equations:

    sqrt(2 k1) U1' = x~' + gamma x~ + (h x~^2 - y~^2) / z~
    sqrt(2 k2) U2' = y~' + gamma y~ + (1 + h) x~ y~ / z~.

Bridges are C^2 piecewise quintics.  A single polynomial cannot hold the
corridor for fast starts (the initial slope (1-h)x forces an excursion
proportional to |x| T), so each bridge turns the slope around inside a
short first segment of length ~ 1/|x|; all endpoint and extremum
constraints are then met exactly by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, State

__all__ = ["BridgeFunction", "ControlledTrajectory", "BridgeError",
           "build_bridge", "synthesize_controls", "verify_reachability",
           "ReachabilityReport"]

X_STAR = (0.0, 0.0, 0.5)


class BridgeError(RuntimeError):
    """No admissible bridge found within the retry budget."""


def _quintic(T, y0, d0, dd0, y1, d1, dd1):
    """Quintic on [0, T] matching value/slope/curvature at both ends."""
    a = np.zeros(6)
    a[0], a[1], a[2] = y0, d0, dd0 / 2.0
    rhs = np.array([
        y1 - (y0 + d0 * T + 0.5 * dd0 * T ** 2),
        d1 - (d0 + dd0 * T),
        dd1 - dd0,
    ])
    M = np.array([
        [T ** 3, T ** 4, T ** 5],
        [3 * T ** 2, 4 * T ** 3, 5 * T ** 4],
        [6 * T, 12 * T ** 2, 20 * T ** 3],
    ])
    a[3:] = np.linalg.solve(M, rhs)
    return a


@dataclass
class BridgeFunction:
    """C^2 piecewise-quintic height bridge with its constraint record."""

    case: str
    knots: np.ndarray       # left endpoints of the segments
    coeffs: np.ndarray      # (n_segments, 6)
    T: float
    constraints: dict = field(default_factory=dict)

    def _split(self, t):
        t = np.asarray(t, float)
        idx = np.clip(np.searchsorted(self.knots, t, side="right") - 1,
                      0, len(self.coeffs) - 1)
        return idx, t - self.knots[idx]

    def value(self, t):
        idx, s = self._split(t)
        c = self.coeffs[idx]
        out = np.zeros_like(s)
        for k in range(5, -1, -1):
            out = out * s + c[..., k]
        return out

    def deriv(self, t):
        idx, s = self._split(t)
        c = self.coeffs[idx]
        out = np.zeros_like(s)
        for k in range(5, 0, -1):
            out = out * s + k * c[..., k]
        return out

    def second(self, t):
        idx, s = self._split(t)
        c = self.coeffs[idx]
        out = np.zeros_like(s)
        for k in range(5, 1, -1):
            out = out * s + k * (k - 1) * c[..., k]
        return out


def _assemble(case, waypoints, T):
    knots = np.array([w[0] for w in waypoints[:-1]])
    coeffs = [
        _quintic(t1 - t0, y0, d0, 0.0, y1, d1, 0.0)
        for (t0, y0, d0), (t1, y1, d1) in zip(waypoints[:-1], waypoints[1:])
    ]
    return BridgeFunction(case, knots, np.array(coeffs), T)


def _try_bridge(case, x, z, T, p, grid_n):
    m0 = (1.0 - p.h) * x
    if case == "low":
        room = 0.25 * min(z, 1.0 - z)
        delta = min(0.5 * T, room / (0.2 + 0.2 * abs(m0)))
        g1 = float(np.clip(0.25 * m0 * delta, -room, room))
        br = _assemble("low", [(0.0, 0.0, m0), (delta, g1, 0.0),
                               (T, 0.5 - z, 0.0)], T)
        t_mid = None
    else:
        delta = min(0.25 * T, 0.4 / max(abs(m0), 1.0))
        g1 = float(np.clip(0.25 * m0 * delta, -0.1, 0.1))
        t_mid = 0.5 * (delta + T)
        br = _assemble("high", [(0.0, 0.0, m0), (delta, g1, 0.0),
                                (t_mid, 0.25, 0.0), (T, -0.25, 0.0)], T)
    ts = np.linspace(0.0, T, grid_n)
    vals = br.value(ts)
    res = {
        "start_value": abs(float(br.value(np.array([0.0]))[0])),
        "start_slope": abs(float(br.deriv(np.array([0.0]))[0]) - m0),
        "end_slope": abs(float(br.deriv(np.array([T]))[0])),
    }
    if case == "low":
        res["end_value"] = abs(float(br.value(np.array([T]))[0]) - (0.5 - z))
        res["corridor_low_gap"] = float((vals + z).min())
        res["corridor_high_gap"] = float((1.0 - z - vals).min())
        ok = res["corridor_low_gap"] > 0 and res["corridor_high_gap"] > 0
    else:
        # extrema are attained at knots by construction: the running max at
        # t_mid, the minimum at T; the dense grid only guards overshoot
        res["end_value"] = abs(float(br.value(np.array([T]))[0]) + 0.25)
        res["max_err"] = abs(float(br.value(np.array([t_mid]))[0]) - 0.25)
        res["min_err"] = res["end_value"]
        res["overshoot"] = max(float(vals.max()) - 0.25,
                               -0.25 - float(vals.min()), 0.0)
        ok = (res["max_err"] <= 1e-12 and res["min_err"] <= 1e-12
              and res["overshoot"] <= 1e-12)
    ok = ok and all(res[k] <= 1e-12 for k in
                    ("start_value", "start_slope", "end_slope", "end_value"))
    br.constraints = res
    return br, ok


def build_bridge(case: str, x0, p: ModelParams, T: float = 5.0,
                 grid_n: int = 4001, max_retries: int = 4) -> BridgeFunction:
    """Height bridge for a start in the given z-case ('low' or 'high').

    Endpoint residuals are held to 1e-12; corridor / extremum conditions
    are validated on a dense grid.  On violation the horizon is extended
    and the construction retried; :class:`BridgeError` after the budget.
    """
    if isinstance(x0, State):
        x0 = x0.to_xyz()
        x, y, z = x0.c1, x0.c2, x0.c3
    else:
        x, y, z = x0
    if case == "low" and z > 0.75:
        raise ValueError("low case requires z <= 3/4")
    if case == "high" and z < 0.75:
        raise ValueError("high case requires z >= 3/4")
    if case not in ("low", "high"):
        raise ValueError("case must be 'low' or 'high'")
    horizon = float(T)
    for _ in range(max_retries + 1):
        br, ok = _try_bridge(case, float(x), float(z), horizon, p, grid_n)
        if ok:
            return br
        horizon *= 2.0
    raise BridgeError(f"no admissible {case} bridge from (x={x}, z={z}) "
                      f"within {max_retries} retries; residuals {br.constraints}")


@dataclass
class ControlledTrajectory:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    k: np.ndarray
    U1: np.ndarray
    U2: np.ndarray
    case: str
    bridge: BridgeFunction
    y0: float
    p: ModelParams
    z0: float

    def to_csv(self, fileobj):
        fileobj.write("t,x,y,z,k,U1,U2\n")
        for row in zip(self.times, self.x, self.y, self.z, self.k,
                       self.U1, self.U2):
            fileobj.write(",".join(repr(float(c)) for c in row) + "\n")

    def _running_max(self, t):
        """max_{s <= t} G(s) from a dense precomputed envelope."""
        if not hasattr(self, "_m_ref"):
            ts = np.linspace(0.0, self.bridge.T, 200001)
            self._m_t = ts
            self._m_ref = np.maximum.accumulate(self.bridge.value(ts))
        return np.interp(np.asarray(t, float), self._m_t, self._m_ref)

    def local_time(self, t):
        """k~(t) = max(0, max_{s<=t} G(s) - (1 - z0)); zero in the low case."""
        t = np.asarray(t, float)
        if self.case == "low":
            return np.zeros(np.shape(t))
        return np.maximum(0.0, self._running_max(t) - (1.0 - self.z0))

    def target_path(self, t):
        """(x~, y~, z~, xdot~, ydot~) of the designed trajectory at times t."""
        t = np.asarray(t, float)
        one_m_h = 1.0 - self.p.h
        x_t = self.bridge.deriv(t) / one_m_h
        xdot = self.bridge.second(t) / one_m_h
        s = t / self.bridge.T
        y_t = self.y0 * (2.0 * s ** 3 - 3.0 * s ** 2 + 1.0)
        ydot = self.y0 * (6.0 * s ** 2 - 6.0 * s) / self.bridge.T
        z_t = self.z0 + self.bridge.value(t) - self.local_time(t)
        return x_t, y_t, z_t, xdot, ydot

    def control_rates(self, t):
        """Added drift terms sqrt(2 k_i) U_i'(t) of the controlled system."""
        x_t, y_t, z_t, xdot, ydot = self.target_path(t)
        pm = self.p
        a1 = xdot + pm.gamma * x_t + (pm.h * x_t ** 2 - y_t ** 2) / z_t
        a2 = ydot + pm.gamma * y_t + (1.0 + pm.h) * x_t * y_t / z_t
        return a1, a2


def synthesize_controls(x0, bridge: BridgeFunction, p: ModelParams,
                        n_grid: int = 5001) -> ControlledTrajectory:
    """Target trajectory, local time, and integrated controls on a grid.

    The local time follows the running-max form and by construction
    increases only at instants where the height sits at the boundary; the
    controls are cumulative trapezoid integrals of the control rates.
    """
    if isinstance(x0, State):
        x0 = x0.to_xyz()
        x, y, z = x0.c1, x0.c2, x0.c3
    else:
        x, y, z = x0
    ts = np.linspace(0.0, bridge.T, n_grid)
    g = bridge.value(ts)
    if bridge.case == "low":
        k = np.zeros_like(ts)
        z_t = z + g
    else:
        k = np.maximum(0.0, np.maximum.accumulate(g) - (1.0 - z))
        z_t = z + g - k
    if np.any(z_t <= 0.0) or np.any(z_t > 1.0 + 1e-12):
        raise BridgeError("designed height leaves (0, 1]; bridge rejected")
    traj = ControlledTrajectory(ts, np.empty(0), np.empty(0), z_t, k,
                                np.empty(0), np.empty(0), bridge.case,
                                bridge, float(y), p, float(z))
    x_t, y_t, _, _, _ = traj.target_path(ts)
    a1, a2 = traj.control_rates(ts)
    dt = ts[1] - ts[0]
    u1 = np.concatenate([[0.0], np.cumsum(0.5 * (a1[1:] + a1[:-1]) * dt)])
    u2 = np.concatenate([[0.0], np.cumsum(0.5 * (a2[1:] + a2[:-1]) * dt)])
    traj.x, traj.y = x_t, y_t
    traj.U1 = u1 / math.sqrt(2.0 * p.kappa1)
    traj.U2 = u2 / math.sqrt(2.0 * p.kappa2)
    return traj


@dataclass
class ReachabilityReport:
    n_points: int
    max_terminal_error: float
    worst_start: tuple
    corridor_ok: bool
    complementarity_ok: bool
    low_case_k_zero: bool
    passed: bool
    rows: list


def _integrate_batch(trajs, starts, p: ModelParams, dt: float,
                     chunk: int = 10000):
    """Classical RK4 integration of many controlled starts at once.

    All trajectories must share the same horizon.  The height is a state of
    the RK4 system; each stage and the combined update are projected at the
    barrier, which is exact while the designed path rides the boundary.
    """
    m = len(trajs)
    T = trajs[0].bridge.T
    if any(abs(tr.bridge.T - T) > 0 for tr in trajs):
        raise ValueError("batched trajectories must share one horizon")
    n = int(round(T / dt))
    x = np.array([s[0] for s in starts], float)
    y = np.array([s[1] for s in starts], float)
    z = np.array([s[2] for s in starts], float)
    k_acc = np.zeros(m)
    omh = 1.0 - p.h

    def f(x_, y_, z_, a1_, a2_):
        fx = -p.gamma * x_ - (p.h * x_ * x_ - y_ * y_) / z_ + a1_
        fy = -p.gamma * y_ - (1.0 + p.h) * x_ * y_ / z_ + a2_
        return fx, fy, omh * x_

    i0 = 0
    while i0 < n:
        i1 = min(i0 + chunk, n)
        ts = np.arange(2 * i0, 2 * i1 + 1) * (0.5 * dt)  # half-step rate grid
        rates = [tr.control_rates(ts) for tr in trajs]
        A1 = np.stack([r[0] for r in rates])
        A2 = np.stack([r[1] for r in rates])
        for j in range(i1 - i0):
            a1l, a1m, a1r = A1[:, 2 * j], A1[:, 2 * j + 1], A1[:, 2 * j + 2]
            a2l, a2m, a2r = A2[:, 2 * j], A2[:, 2 * j + 1], A2[:, 2 * j + 2]
            k1 = f(x, y, z, a1l, a2l)
            k2 = f(x + 0.5 * dt * k1[0], y + 0.5 * dt * k1[1],
                   np.minimum(z + 0.5 * dt * k1[2], 1.0), a1m, a2m)
            k3 = f(x + 0.5 * dt * k2[0], y + 0.5 * dt * k2[1],
                   np.minimum(z + 0.5 * dt * k2[2], 1.0), a1m, a2m)
            k4 = f(x + dt * k3[0], y + dt * k3[1],
                   np.minimum(z + dt * k3[2], 1.0), a1r, a2r)
            x = x + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            y = y + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            zt = z + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            k_acc += np.maximum(zt - 1.0, 0.0)
            z = np.minimum(zt, 1.0)
        if np.any(z <= 0.0):
            raise BridgeError("integrated height crossed zero")
        i0 = i1
    return x, y, z, k_acc


def _integrate_controlled(traj: ControlledTrajectory, x0, p: ModelParams,
                          dt: float):
    """Single-start forward integration (see :func:`_integrate_batch`)."""
    x, y, z, k = _integrate_batch([traj], [x0], p, dt)
    return (float(x[0]), float(y[0]), float(z[0])), float(k[0])


def verify_reachability(p: ModelParams, R: float = 10.0, T: float = 5.0,
                        n_side: int = 5, dt: float = 2e-5,
                        tol: float = 1e-6) -> ReachabilityReport:
    """Forward-verify that every start on the grid reaches (0, 0, 1/2).

    The grid is n_side^3 points over [-R, R]^2 x [1/R, 1]; each start is
    steered with its synthesized control and integrated at step dt; the
    report records terminal errors, corridor violations, complementarity
    of the realized local time, and that low-case paths never touch the
    boundary.
    """
    xs = np.linspace(-R, R, n_side)
    ys = np.linspace(-R, R, n_side)
    zs = np.linspace(1.0 / R, 1.0, n_side)
    starts, trajs, cases = [], [], []
    corridor_ok = True
    comp_ok = True
    low_zero = True
    for x in xs:
        for y in ys:
            for z in zs:
                case = "low" if z <= 0.75 else "high"
                br = build_bridge(case, (x, y, z), p, T)
                traj = synthesize_controls((x, y, z), br, p)
                if np.any(traj.z <= 0.0) or np.any(traj.z > 1.0 + 1e-12):
                    corridor_ok = False
                inc = np.diff(traj.k) > 1e-14
                if np.any(inc) and np.any(traj.z[1:][inc] < 1.0 - 1e-9):
                    comp_ok = False
                if case == "low" and traj.k[-1] != 0.0:
                    low_zero = False
                starts.append((x, y, z))
                trajs.append(traj)
                cases.append(case)
    # batch per horizon: retried bridges may carry a longer T
    xf = np.empty(len(starts))
    yf = np.empty(len(starts))
    zf = np.empty(len(starts))
    kf = np.empty(len(starts))
    horizons = {}
    for j, tr in enumerate(trajs):
        horizons.setdefault(tr.bridge.T, []).append(j)
    for T_group, idx in horizons.items():
        xs_, ys_, zs_, ks_ = _integrate_batch(
            [trajs[j] for j in idx], [starts[j] for j in idx], p, dt)
        for col, (xi, yi, zi, ki) in zip(idx, zip(xs_, ys_, zs_, ks_)):
            xf[col], yf[col], zf[col], kf[col] = xi, yi, zi, ki
    errs = np.sqrt((xf - X_STAR[0]) ** 2 + (yf - X_STAR[1]) ** 2
                   + (zf - X_STAR[2]) ** 2)
    rows = [dict(x=s[0], y=s[1], z=s[2], case=c, err=float(e), k_end=float(k))
            for s, c, e, k in zip(starts, cases, errs, kf)]
    iw = int(np.argmax(errs))
    passed = bool(errs[iw] <= tol and corridor_ok and comp_ok and low_zero)
    return ReachabilityReport(len(rows), float(errs[iw]), starts[iw],
                              corridor_ok, comp_ok, low_zero, passed, rows)
