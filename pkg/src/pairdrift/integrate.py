"""Reflected Euler-Maruyama stepping with exact one-step Skorokhod projection.

The boundary {z = 1} is a flat hyperplane, so the one-step Skorokhod map is
plain projection: after a trial move z -> z + dz,

    z_new = min(z + dz, 1),    dk = max(z + dz - 1, 0),

with complementarity dk * (1 - z_new) = 0 holding exactly in floating point.
In the rescaled chart the reflection also kicks the tangential coordinates:
u += u/(3 z) * dk and v += v/(3 z) * dk evaluated at the boundary state
(z = 1).  Paths are deterministic given a seed (counter-based Philox
streams; ensembles split substreams via SeedSequence.spawn).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import AuxState, Chart, ModelParams, State

try:
    import numba

    HAVE_NUMBA = True
except Exception:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

__all__ = [
    "StepConfig", "StopReason", "ReflectedPath", "SystemKind",
    "skorokhod_step", "step_xyz", "step_uvz", "simulate",
    "sample_exit_time_T3", "sample_exit_times_T3", "path_rng",
    "HAVE_NUMBA", "aux_time_average",
]


class StopReason(enum.Enum):
    TIME_LIMIT = "TimeLimit"
    EXITED_OR = "ExitedOR"
    EXPLOSION_SCALE = "ExplosionScale"


class SystemKind(enum.Enum):
    XYZ = "xyz"
    UVZ = "uvz"
    AUX = "aux"
    ETA = "eta"


@dataclass(frozen=True)
class StepConfig:
    dt_base: float = 1e-3
    adapt: bool = False
    dt_min: float = 1e-7
    z_min: float = 1e-12
    R_stop: float = 1e12
    seed: int = 0
    disp_bound: float = 0.1
    record_stride: int = 1

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt_base):
            raise ValueError("need 0 < dt_min <= dt_base")
        if not (0 < self.z_min < 1):
            raise ValueError("need 0 < z_min < 1")
        if not self.R_stop > 1:
            raise ValueError("need R_stop > 1")


@dataclass
class ReflectedPath:
    """Recorded trajectory with its nondecreasing boundary local time."""

    system: SystemKind
    times: np.ndarray
    states: np.ndarray  # (n, 3); for ETA, column 0 holds eta
    k: np.ndarray
    stopped: StopReason

    def to_csv(self, fileobj) -> None:
        """Columns t, c1, c2, z, k (c1/c2 are x,y or u,v by chart)."""
        header = {"xyz": "t,x,y,z,k", "uvz": "t,u,v,z,k",
                  "aux": "t,U,V,Z,k", "eta": "t,eta,unused,unused,k"}[self.system.value]
        fileobj.write(header + "\n")
        for t, row, kk in zip(self.times, self.states, self.k):
            fileobj.write(f"{float(t)!r},{float(row[0])!r},{float(row[1])!r},"
                          f"{float(row[2])!r},{float(kk)!r}\n")


def path_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent, reproducible substream ``stream`` of master ``seed``."""
    ss = np.random.SeedSequence(seed)
    if stream == 0:
        return np.random.Generator(np.random.Philox(ss))
    child = ss.spawn(stream + 1)[stream]
    return np.random.Generator(np.random.Philox(child))


def skorokhod_step(z, dz):
    """One-step Skorokhod map at the upper barrier: (z_new, dk).

    Vectorized; complementarity dk * (1 - z_new) = 0 is exact because any
    positive dk forces z_new = 1.0 bit-exactly.
    """
    z_trial = np.asarray(z, float) + np.asarray(dz, float)
    dk = np.maximum(z_trial - 1.0, 0.0)
    z_new = np.minimum(z_trial, 1.0)
    if np.ndim(z_new) == 0:
        return float(z_new), float(dk)
    return z_new, dk


def step_xyz(s: State, p: ModelParams, cfg: StepConfig, noise, dt: float):
    """One Euler-Maruyama step of the reflected planar system."""
    x, y, z = s.c1, s.c2, s.c3
    bx = -p.gamma * x - (p.h * x * x - y * y) / z
    by = -p.gamma * y - (1.0 + p.h) * x * y / z
    sq = math.sqrt(dt)
    x_new = x + bx * dt + math.sqrt(2.0 * p.kappa1) * sq * noise[0]
    y_new = y + by * dt + math.sqrt(2.0 * p.kappa2) * sq * noise[1]
    z_new, dk = skorokhod_step(z, (1.0 - p.h) * x * dt)
    if z_new <= cfg.z_min or not (math.isfinite(x_new) and math.isfinite(y_new)):
        raise _Explosion(x_new, y_new, z_new)
    return State(Chart.XYZ, x_new, y_new, z_new), dk


def step_uvz(s: State, p: ModelParams, cfg: StepConfig, noise, dt: float):
    """One step in the rescaled chart, with boundary kicks at reflection."""
    u, v, z = s.c1, s.c2, s.c3
    ah = p.alpha_h
    z23 = z ** (2.0 / 3.0)
    z13 = z ** (1.0 / 3.0)
    bu = -p.gamma * u - (ah * u * u - v * v) / z23
    bv = -p.gamma * v - (ah + 1.0) * u * v / z23
    sq = math.sqrt(dt)
    u_new = u + bu * dt + math.sqrt(2.0 * p.kappa1) / z13 * sq * noise[0]
    v_new = v + bv * dt + math.sqrt(2.0 * p.kappa2) / z13 * sq * noise[1]
    z_new, dk = skorokhod_step(z, (1.0 - p.h) * u * z13 * dt)
    if dk > 0.0:
        # dk is carried by the boundary state, where z = 1
        u_new += u_new / 3.0 * dk
        v_new += v_new / 3.0 * dk
    if z_new <= cfg.z_min or not (math.isfinite(u_new) and math.isfinite(v_new)):
        raise _Explosion(u_new, v_new, z_new)
    return State(Chart.UVZ, u_new, v_new, z_new), dk


class _Explosion(Exception):
    def __init__(self, *state):
        self.state = state


def _adaptive_dt(cfg: StepConfig, drift_norm: float, z: float, chart: Chart) -> float:
    dt = cfg.dt_base
    if chart is Chart.UVZ:
        dt = min(dt, cfg.dt_base * z ** (2.0 / 3.0))
    if drift_norm > 0:
        dt = min(dt, cfg.disp_bound / drift_norm)
    return max(dt, cfg.dt_min)


def simulate(system: SystemKind, s0, p: ModelParams, cfg: StepConfig,
             T: float) -> ReflectedPath:
    """Integrate one path up to min(T, stopping-radius exit, explosion floor).

    Deterministic given (seed, cfg, s0, p).  Records every
    ``cfg.record_stride`` accepted steps plus the final state.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    rng = path_rng(cfg.seed)
    times, states, ks = [0.0], [], []
    k_tot = 0.0
    reason = StopReason.TIME_LIMIT

    if system in (SystemKind.XYZ, SystemKind.UVZ):
        s = s0 if isinstance(s0, State) else State(
            Chart.XYZ if system is SystemKind.XYZ else Chart.UVZ, *s0)
        stepper = step_xyz if system is SystemKind.XYZ else step_uvz
        states.append([s.c1, s.c2, s.c3])
        ks.append(0.0)
        t = 0.0
        i = 0
        while t < T:
            if cfg.adapt:
                from .model import drift_xyz, drift_uvz
                dfun = drift_xyz if system is SystemKind.XYZ else drift_uvz
                dn = float(np.linalg.norm(dfun(s, p)))
                dt = _adaptive_dt(cfg, dn, s.c3, s.chart)
            else:
                dt = cfg.dt_base
            dt = min(dt, T - t)
            noise = rng.standard_normal(2)
            try:
                s, dk = stepper(s, p, cfg, noise, dt)
            except _Explosion:
                reason = StopReason.EXPLOSION_SCALE
                break
            t += dt
            k_tot += dk
            i += 1
            if i % cfg.record_stride == 0 or t >= T:
                times.append(t)
                states.append([s.c1, s.c2, s.c3])
                ks.append(k_tot)
            if math.hypot(s.c1, s.c2) > cfg.R_stop or s.c3 < 1.0 / cfg.R_stop:
                reason = StopReason.EXITED_OR
                break
        if len(times) > len(states):
            times = times[:len(states)]
    elif system is SystemKind.AUX:
        a = s0 if isinstance(s0, AuxState) else AuxState(*s0)
        U, V, Z = a.U, a.V, a.Z
        states.append([U, V, Z])
        ks.append(0.0)
        ah = p.alpha_h
        s1 = math.sqrt(2.0 * p.kappa1)
        s2 = math.sqrt(2.0 * p.kappa2)
        t = 0.0
        i = 0
        while t < T:
            dt = min(cfg.dt_base, T - t)
            sq = math.sqrt(dt)
            g = rng.standard_normal(2)
            U_new = U + -(ah * U * U - V * V) * dt + s1 * sq * g[0]
            V_new = V + -(ah + 1.0) * U * V * dt + s2 * sq * g[1]
            Z = Z + (1.0 - p.h) * U * Z * dt
            U, V = U_new, V_new
            t += dt
            i += 1
            if not (math.isfinite(U) and math.isfinite(V) and Z > 0):
                reason = StopReason.EXPLOSION_SCALE
                break
            if i % cfg.record_stride == 0 or t >= T:
                times.append(t)
                states.append([U, V, Z])
                ks.append(0.0)
            if math.hypot(U, V) > cfg.R_stop:
                reason = StopReason.EXITED_OR
                break
        times = times[:len(states)]
    elif system is SystemKind.ETA:
        eta = float(s0)
        states.append([eta, 0.0, 1.0])
        ks.append(0.0)
        rate = 1.5 + p.h
        s2 = math.sqrt(2.0 * p.kappa2)
        t = 0.0
        i = 0
        while t < T:
            dt = min(cfg.dt_base, T - t)
            eta = eta + rate * eta * dt + s2 * math.sqrt(dt) * rng.standard_normal()
            t += dt
            i += 1
            if i % cfg.record_stride == 0 or t >= T:
                times.append(t)
                states.append([eta, 0.0, 1.0])
                ks.append(0.0)
        times = times[:len(states)]
    else:
        raise ValueError(f"unknown system {system}")

    return ReflectedPath(system, np.asarray(times), np.asarray(states),
                         np.asarray(ks), reason)


# ---------------------------------------------------------------------------
# first-exit sampling for the unstable channel


def sample_exit_times_T3(eta0: float, n_paths: int, p: ModelParams,
                         eta_star: float, dt: float = 1e-3, seed: int = 0,
                         t_cap: float = 500.0) -> np.ndarray:
    """First exit times of eta from (-eta_star, eta_star), bridge corrected.

    A crude discrete first-exit check misses within-step crossings and
    biases exit times long; each surviving step therefore also exits with
    the Brownian-bridge crossing probability
    exp(-2 (eta* - a)(eta* - b) / (2 kappa2 dt)) per barrier.
    """
    if abs(eta0) > eta_star:
        raise ValueError("eta0 must lie in [-eta_star, eta_star]")
    if abs(eta0) == eta_star:
        return np.zeros(n_paths)
    rng = path_rng(seed)
    rate = 1.5 + p.h
    sig = math.sqrt(2.0 * p.kappa2 * dt)
    inv = 1.0 / (2.0 * p.kappa2 * dt)
    eta = np.full(n_paths, float(eta0))
    out = np.full(n_paths, np.nan)
    alive = np.arange(n_paths)
    t = 0.0
    while alive.size and t < t_cap:
        g = rng.standard_normal(alive.size)
        w = rng.random(alive.size)
        cur = eta[alive]
        new = cur + rate * cur * dt + sig * g
        crossed = np.abs(new) >= eta_star
        p_up = np.exp(-2.0 * (eta_star - cur) * (eta_star - new) * inv)
        p_dn = np.exp(-2.0 * (eta_star + cur) * (eta_star + new) * inv)
        bridge = w < np.minimum(p_up + p_dn, 1.0)
        exit_now = crossed | bridge
        t += dt
        out[alive[exit_now]] = t
        eta[alive] = new
        alive = alive[~exit_now]
    if alive.size:
        raise RuntimeError(f"{alive.size} exit paths still running at the "
                           f"time cap {t_cap}; raise t_cap")
    return out


def sample_exit_time_T3(eta0: float, p: ModelParams, eta_star: float,
                        cfg: StepConfig, t_cap: float = 500.0) -> float:
    """Single bridge-corrected exit time (see :func:`sample_exit_times_T3`)."""
    return float(sample_exit_times_T3(eta0, 1, p, eta_star,
                                      dt=cfg.dt_base, seed=cfg.seed,
                                      t_cap=t_cap)[0])


# ---------------------------------------------------------------------------
# long-run (U, V) time averaging; the only loop hot enough to need a kernel


def _aux_block_py(u, v, ah, ah1, s1, s2, dt, g1, g2):
    # quadratic drift: refine rare large-displacement steps, splitting the
    # step's Brownian increment evenly so the driving path is unchanged
    sum_u = 0.0
    sum_v = 0.0
    for i in range(g1.shape[0]):
        sum_u += u
        sum_v += v
        bu = v * v - ah * u * u
        bv = -ah1 * u * v
        disp = dt * max(abs(bu) / (1.0 + abs(u)), abs(bv) / (1.0 + abs(v)))
        m = 1
        if disp > 0.25:
            m = int(min(1024.0, np.ceil(disp / 0.25)))
        dts = dt / m
        n1 = s1 * g1[i] / m
        n2 = s2 * g2[i] / m
        for _ in range(m):
            un = u + (v * v - ah * u * u) * dts + n1
            v = v - ah1 * u * v * dts + n2
            u = un
    return u, v, sum_u, sum_v


if HAVE_NUMBA:
    _aux_block = numba.njit(cache=False)(_aux_block_py)
else:  # pragma: no cover
    _aux_block = _aux_block_py


def _xyz_ens_advance_py(x, y, z, k, dead, n_steps, dt, gamma, h, sq1, sq2,
                        z_min, seed):
    np.random.seed(seed)
    n = x.shape[0]
    for i in range(n):
        if dead[i]:
            continue
        xi, yi, zi, ki = x[i], y[i], z[i], k[i]
        for _ in range(n_steps):
            z23 = zi ** (2.0 / 3.0)
            m = 1
            need = dt / (0.1 * z23)
            guard = 2.0 * (1.0 - h) * abs(xi) * dt / zi
            if need > 1.0 or guard > 1.0:
                m = int(min(1024.0, np.ceil(max(need, guard))))
            dts = dt / m
            rt = np.sqrt(dts)
            for _ in range(m):
                bx = -gamma * xi - (h * xi * xi - yi * yi) / zi
                by = -gamma * yi - (1.0 + h) * xi * yi / zi
                xn = xi + bx * dts + sq1 * rt * np.random.standard_normal()
                yn = yi + by * dts + sq2 * rt * np.random.standard_normal()
                zt = zi + (1.0 - h) * xi * dts
                if zt > 1.0:
                    ki += zt - 1.0
                    zt = 1.0
                if zt < z_min or not np.isfinite(xn + yn):
                    dead[i] = True
                    break
                xi, yi, zi = xn, yn, zt
            if dead[i]:
                break
        x[i], y[i], z[i], k[i] = xi, yi, zi, ki


if HAVE_NUMBA:
    _xyz_ens_advance = numba.njit(cache=False)(_xyz_ens_advance_py)
else:  # pragma: no cover
    _xyz_ens_advance = _xyz_ens_advance_py


def xyz_ensemble(p: ModelParams, n_paths: int, s0, dt: float, seed: int,
                 z_min: float = 1e-12):
    """Mutable ensemble state for block-wise advancing of the planar system.

    Returns a dict of arrays (x, y, z, k, dead) initialized at ``s0``
    (a single (x, y, z) triple or per-path arrays).  Paths near z = 0 are
    advanced with substeps shrunk proportionally to z^(2/3); paths that
    still reach ``z_min`` are flagged dead and frozen, never silently
    continued.
    """
    x0, y0, z0 = s0
    ens = {
        "x": np.full(n_paths, x0, dtype=float) if np.ndim(x0) == 0 else np.array(x0, float),
        "y": np.full(n_paths, y0, dtype=float) if np.ndim(y0) == 0 else np.array(y0, float),
        "z": np.full(n_paths, z0, dtype=float) if np.ndim(z0) == 0 else np.array(z0, float),
        "k": np.zeros(n_paths),
        "dead": np.zeros(n_paths, dtype=np.bool_),
        "p": p, "dt": dt, "z_min": z_min,
        "seed": int(np.random.SeedSequence(seed).generate_state(1)[0]) & 0x7FFFFFFF,
        "blocks_done": 0,
    }
    return ens


def xyz_ensemble_advance(ens: dict, n_steps: int) -> None:
    """Advance every live path by ``n_steps`` base steps (deterministic)."""
    p = ens["p"]
    block_seed = int((ens["seed"] + 0x9E3779B9 * (ens["blocks_done"] + 1)) % (2 ** 31 - 1))
    _xyz_ens_advance(ens["x"], ens["y"], ens["z"], ens["k"], ens["dead"],
                     n_steps, ens["dt"], p.gamma, p.h,
                     math.sqrt(2.0 * p.kappa1), math.sqrt(2.0 * p.kappa2),
                     ens["z_min"], block_seed)
    ens["blocks_done"] += 1


def aux_time_average(p: ModelParams, T: float, dt: float, seed: int,
                     u0: float = 0.0, v0: float = 0.0,
                     n_blocks: int = 1000, flip_v_noise: bool = False):
    """Left-endpoint time integrals of U and V over ``n_blocks`` equal blocks.

    Returns (block_mean_U, block_mean_V, checkpoint_times) where the arrays
    hold per-block time averages of U and V.  Noise is generated block-wise
    from a Philox stream, so runs are reproducible and memory stays flat.
    ``flip_v_noise`` negates the V-channel noise (antithetic pairing).
    """
    n_steps = int(round(T / dt))
    block = n_steps // n_blocks
    if block * n_blocks != n_steps:
        raise ValueError("T/dt must split evenly into n_blocks")
    rng = path_rng(seed)
    ah = p.alpha_h
    ah1 = ah + 1.0
    s1 = math.sqrt(2.0 * p.kappa1 * dt)
    s2 = math.sqrt(2.0 * p.kappa2 * dt)
    if flip_v_noise:
        s2 = -s2
    u, v = float(u0), float(v0)
    mean_u = np.empty(n_blocks)
    mean_v = np.empty(n_blocks)
    for b in range(n_blocks):
        g = rng.standard_normal((2, block))
        u, v, su, sv = _aux_block(u, v, ah, ah1, s1, s2, dt, g[0], g[1])
        mean_u[b] = su / block
        mean_v[b] = sv / block
    t_checkpoints = dt * block * np.arange(1, n_blocks + 1)
    return mean_u, mean_v, t_checkpoints
