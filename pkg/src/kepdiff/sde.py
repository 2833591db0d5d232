"""Ensemble Euler-Maruyama simulation of dX = b(X) dt + eps dB.

The drift is discontinuous across the jump set and blows up only at the
origin, so Euler-Maruyama is the right tool; higher-order schemes buy
nothing here.  Paths that fall into the origin ball are truncated (kept
frozen and flagged), never aborted, and excluded from stationary
statistics.

Reproducibility: noise comes from one Philox4x64-10 bit generator per
path, keyed by (seed, path_index).  A path's noise is its generator's
standard-normal stream consumed in (step, component) row-major order,
so ensembles are bit-identical for identical configurations and paths
are independent streams regardless of how the runner batches them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import _drift_unchecked, in_jump_set, jump_distance_many
from .params import ConfigError, ConvergenceError, PhysParams, SingularPointError

#: Convergence-tube half-widths used by the diagnostics (acceptance
#: parameters: a path counts as converged when |u - e| < CONV_U_TOL and
#: |z| < CONV_Z_TOL).
CONV_U_TOL = 0.15
CONV_Z_TOL = 0.2

_NOISE_CHUNK = 2048


@dataclass(frozen=True)
class RingStart:
    """Start paths evenly spaced on a circle of given radius in a z-plane."""

    radius: float
    z: float = 0.0

    def points(self, n_paths: int) -> np.ndarray:
        th = 2 * np.pi * np.arange(n_paths) / n_paths
        return np.stack([self.radius * np.cos(th),
                         self.radius * np.sin(th),
                         np.full(n_paths, self.z)], axis=1)

    def as_dict(self):
        return {"ring": {"radius": self.radius, "z": self.z}}


def default_drift_cap(p: PhysParams) -> float:
    """Cap on |b| before a step's drift is rescaled.

    10 mu/(lam eps): large enough that only the genuine origin blowup is
    capped (the drift on physical scales is O(mu/lam)).  For eps = 0 a
    fixed large multiple is used instead.
    """
    if p.eps > 0:
        return 10 * p.mu / (p.lam * p.eps)
    return 100 * p.mu / p.lam


@dataclass
class SimConfig:
    params: PhysParams
    dt: float = None
    n_steps: int = 50_000
    n_paths: int = 256
    seed: int = 0
    x0: object = None           # (3,) point or RingStart
    drift_cap: float = None
    record_stride: int = 10
    compute_jump_dist: bool = True

    def __post_init__(self):
        p = self.params
        if self.dt is None:
            self.dt = 1e-3 * p.lam ** 3 / p.mu ** 2  # milli-periods
        if self.drift_cap is None:
            self.drift_cap = default_drift_cap(p)
        if self.x0 is None:
            self.x0 = RingStart(3 * p.a)
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.record_stride < 1:
            raise ConfigError("record_stride must be >= 1")
        if not self.dt * self.drift_cap < 0.5 * p.a:
            raise ConfigError(
                "dt * drift_cap must stay below 0.5 a; a capped step may "
                f"not jump across the system scale (got {self.dt * self.drift_cap})")

    def start_points(self) -> np.ndarray:
        if isinstance(self.x0, RingStart):
            return self.x0.points(self.n_paths)
        pt = np.asarray(self.x0, dtype=float).reshape(3)
        return np.tile(pt, (self.n_paths, 1))

    def as_dict(self) -> dict:
        x0 = self.x0.as_dict() if isinstance(self.x0, RingStart) \
            else list(map(float, np.asarray(self.x0).reshape(3)))
        return {"params": self.params.as_dict(), "dt": self.dt,
                "n_steps": self.n_steps, "n_paths": self.n_paths,
                "seed": self.seed, "x0": x0, "drift_cap": self.drift_cap,
                "record_stride": self.record_stride}


@dataclass
class TrajectoryEnsemble:
    """Recorded ensemble with per-step diagnostics.

    pos has shape (n_paths, n_rec, 3); u, v and dist_sigma align with it.
    Truncated paths stay frozen at their last valid position from the
    truncation step onward.
    """

    config: SimConfig
    times: np.ndarray
    pos: np.ndarray
    u: np.ndarray
    v: np.ndarray
    dist_sigma: np.ndarray
    truncated: np.ndarray
    truncate_step: np.ndarray
    cap_rejections: np.ndarray
    cap_reject_points: np.ndarray
    jump_crossings: np.ndarray
    start_u: np.ndarray

    @property
    def n_paths(self):
        return self.pos.shape[0]

    @property
    def record_dt(self):
        return self.config.dt * self.config.record_stride

    @property
    def final_positions(self):
        return self.pos[:, -1, :]

    def converged_mask(self, k=-1):
        e = self.config.params.ecc
        return (np.abs(self.u[:, k] - e) < CONV_U_TOL) \
            & (np.abs(self.pos[:, k, 2]) < CONV_Z_TOL) & ~self.truncated

    def stationary_samples(self, burn_in):
        """(u, v, pos) samples past burn_in from non-truncated paths."""
        keep_t = self.times >= burn_in
        keep_p = ~self.truncated
        ix = np.ix_(keep_p, keep_t)
        return self.u[ix], self.v[ix], self.pos[np.ix_(keep_p, keep_t)]


def step(cfg: SimConfig, x, gauss):
    """One Euler-Maruyama step from a single point.

    x + b(x) dt + eps sqrt(dt) gauss, with the drift rescaled to
    magnitude drift_cap when it exceeds the cap.  Raises within
    1e-8 a of the origin, where the drift blows up.
    """
    x = np.asarray(x, dtype=float).reshape(3)
    gauss = np.asarray(gauss, dtype=float).reshape(3)
    p = cfg.params
    r = float(np.linalg.norm(x))
    if r < 1e-8 * p.a:
        raise SingularPointError("step requested inside the origin ball")
    bx, by, bz = _drift_unchecked(p, x[0], x[1], x[2])
    b = np.array([bx, by, bz])
    nb = float(np.linalg.norm(b))
    if nb > cfg.drift_cap:
        b *= cfg.drift_cap / nb
    return x + b * cfg.dt + p.eps * math.sqrt(cfg.dt) * gauss


def _path_generators(seed, n_paths):
    return [np.random.Generator(np.random.Philox(key=[seed, i]))
            for i in range(n_paths)]


def simulate_ensemble(cfg: SimConfig) -> TrajectoryEnsemble:
    """Run the full ensemble; bit-identical output for identical cfg."""
    p = cfg.params
    dt, eps = cfg.dt, p.eps
    sdt = math.sqrt(dt)
    n_paths, n_steps = cfg.n_paths, cfg.n_steps
    origin_r = 1e-8 * p.a

    X = cfg.start_points().copy()
    gens = _path_generators(cfg.seed, n_paths) if eps > 0 else None
    active = np.sqrt(np.sum(X * X, axis=1)) >= origin_r
    truncate_step = np.where(active, -1, 0).astype(np.int64)
    cap_rejections = np.zeros(n_paths, dtype=np.int64)
    reject_pts = []
    crossings = np.zeros(n_paths, dtype=np.int64)

    n_rec = n_steps // cfg.record_stride + 1
    rec_pos = np.empty((n_paths, n_rec, 3))
    rec_t = np.empty(n_rec)
    rec_pos[:, 0] = X
    rec_t[0] = 0.0
    rec_i = 1

    u0 = _u_many(p, X[:, 0], X[:, 1])

    k = 0
    with np.errstate(all="ignore"):
        while k < n_steps:
            chunk = min(_NOISE_CHUNK, n_steps - k)
            if eps > 0:
                noise = np.empty((n_paths, chunk, 3))
                for i, g in enumerate(gens):
                    noise[i] = g.standard_normal((chunk, 3))
            for j in range(chunk):
                bx, by, bz = _drift_unchecked(p, X[:, 0], X[:, 1], X[:, 2])
                nb = np.sqrt(bx * bx + by * by + bz * bz)
                over = active & (nb > cfg.drift_cap)
                if np.any(over):
                    cap_rejections[over] += 1
                    if len(reject_pts) < 10_000:
                        reject_pts.extend(X[over].tolist())
                    f = np.where(over, cfg.drift_cap / np.where(nb > 0, nb, 1.0), 1.0)
                    bx, by, bz = bx * f, by * f, bz * f
                Xn = X + np.stack([bx, by, bz], axis=1) * dt
                if eps > 0:
                    Xn += eps * sdt * noise[:, j]
                bad = active & (~np.all(np.isfinite(Xn), axis=1)
                                | (np.sqrt(np.sum(Xn * Xn, axis=1)) < origin_r))
                if np.any(bad):
                    Xn[bad] = X[bad]
                    truncate_step[bad] = k
                    active &= ~bad
                Xn[~active] = X[~active]
                flip = active & (X[:, 1] * Xn[:, 1] < 0)
                if np.any(flip):
                    xm = 0.5 * (X[flip, 0] + Xn[flip, 0])
                    zm = 0.5 * (X[flip, 2] + Xn[flip, 2])
                    crossings[flip] += in_jump_set(p, xm, zm)
                X = Xn
                k += 1
                if k % cfg.record_stride == 0:
                    rec_pos[:, rec_i] = X
                    rec_t[rec_i] = k * dt
                    rec_i += 1

    rec_pos = rec_pos[:, :rec_i]
    rec_t = rec_t[:rec_i]
    flat = rec_pos.reshape(-1, 3)
    u, v = _u_v_many(p, flat[:, 0], flat[:, 1])
    u = u.reshape(n_paths, rec_i)
    v = v.reshape(n_paths, rec_i)
    if cfg.compute_jump_dist:
        dist = jump_distance_many(p, flat).reshape(n_paths, rec_i)
    else:
        dist = np.full((n_paths, rec_i), np.nan)

    return TrajectoryEnsemble(
        config=cfg, times=rec_t, pos=rec_pos, u=u, v=v, dist_sigma=dist,
        truncated=truncate_step >= 0, truncate_step=truncate_step,
        cap_rejections=cap_rejections,
        cap_reject_points=np.array(reject_pts).reshape(-1, 3),
        jump_crossings=crossings, start_u=u0)


def _u_many(p, x, y):
    e, a = p.ecc, p.a
    r = np.hypot(x, y)
    lo = np.full_like(r, -e * (1 - 1e-14))
    hi = np.ones_like(r)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        s = 2 * a * e / (e + mid)
        neg = (r + np.hypot(x + 2 * s * mid, y) - 2 * s) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return 0.5 * (lo + hi)


def _u_v_many(p, x, y):
    u = _u_many(p, x, y)
    e, a = p.ecc, p.a
    s = 2 * a * e / (e + u)
    cv = x / s + u
    one_m = np.maximum(1 - u * u, 1e-300)
    sv = y / (s * np.sqrt(one_m))
    return u, np.mod(np.arctan2(sv, cv), 2 * np.pi)


def deterministic_orbit(p: PhysParams, dt=1e-5, n_periods=5, x0=None):
    """Zero-noise Euler orbit from perihelion; returns the measured period.

    Integrates xdot = b(x) with plain scalar arithmetic (the vectorised
    ensemble loop would be needlessly slow for one path at this dt) and
    measures the time per full winding of the eccentric angle, linearly
    interpolated at the final crossing.
    """
    e = p.ecc
    a = p.a
    sq = math.sqrt(1 - e * e)
    k = p.mu / (2 * p.lam)
    if x0 is None:
        x, y = a * (1 - e), 0.0
    else:
        x, y = float(x0[0]), float(x0[1])
    target = 2 * math.pi * n_periods
    wound = 0.0
    v_prev = math.atan2(y / sq, x + a * e)
    t = 0.0
    max_steps = int(target / (0.2 * dt)) + 1000  # generous speed floor
    for _ in range(max_steps):
        r = math.hypot(x, y)
        nu = (p.mu / p.lam ** 2) * complex(r - x / e, -y * sq / e)
        w = (1 - 4 / nu) ** 0.5
        al, be = w.real, w.imag
        s = (al + be + 1) / r
        bx = k * ((al + be - 1) / e - s * x)
        by = k * ((al - be - 1) * sq / e - s * y)
        x += bx * dt
        y += by * dt
        t += dt
        v = math.atan2(y / sq, x + a * e)
        dv = v - v_prev
        if dv > math.pi:
            dv -= 2 * math.pi
        elif dv < -math.pi:
            dv += 2 * math.pi
        v_prev = v
        new_wound = wound + dv
        if abs(new_wound) >= target:
            frac = (target - abs(wound)) / abs(dv)
            return (t - dt + frac * dt) / n_periods, t
        wound = new_wound
    raise ConvergenceError("orbit did not complete the requested windings")


def areal_velocity(ens: TrajectoryEnsemble):
    """Per-record-interval areal velocity (x dy - y dx)/(2 dt) estimates."""
    x = ens.pos[..., 0]
    y = ens.pos[..., 1]
    dt = ens.record_dt
    return (x[:, :-1] * y[:, 1:] - y[:, :-1] * x[:, 1:]) / (2 * dt)


def orbital_period(ens: TrajectoryEnsemble, path=0):
    """Orbit period measured by winding of the eccentric angle.

    Unwraps the recorded angle of one path, counts whole turns and
    interpolates the crossing time of the last complete turn.
    """
    v = np.unwrap(ens.v[path])
    t = ens.times
    total = v[-1] - v[0]
    n_turn = int(abs(total) // (2 * np.pi))
    if n_turn < 1:
        raise ConfigError("path did not complete a full turn")
    target = v[0] + np.sign(total) * 2 * np.pi * n_turn
    k = int(np.searchsorted(v if total > 0 else -v,
                            target if total > 0 else -target))
    k = min(max(k, 1), len(v) - 1)
    frac = (target - v[k - 1]) / (v[k] - v[k - 1])
    t_cross = t[k - 1] + frac * (t[k] - t[k - 1])
    return (t_cross - t[0]) / n_turn


def kepler_diagnostics(ens: TrajectoryEnsemble, p: PhysParams) -> dict:
    """Summary report: convergence fractions, areal velocity, counters."""
    if ens.n_paths == 0:
        raise ConfigError("empty ensemble")
    e = p.ecc
    conv = (np.abs(ens.u - e) < CONV_U_TOL) \
        & (np.abs(ens.pos[..., 2]) < CONV_Z_TOL) \
        & ~ens.truncated[:, None]
    frac_t = conv.mean(axis=0)
    half = ens.times >= 0.5 * ens.times[-1]
    av = areal_velocity(ens)[:, half[1:]]
    report = {
        "n_paths": int(ens.n_paths),
        "t_final": float(ens.times[-1]),
        "fraction_converged_final": float(frac_t[-1]),
        "convergence_curve": {"t": ens.times.tolist(),
                              "fraction": frac_t.tolist()},
        "areal_velocity_mean": float(np.mean(av)),
        "areal_velocity_rel_spread": float(np.std(np.mean(av, axis=1))
                                           / max(abs(np.mean(av)), 1e-300)),
        "mean_abs_z_final": float(np.mean(np.abs(
            ens.pos[~ens.truncated][:, half][..., 2]))),
        "truncated_paths": int(np.sum(ens.truncated)),
        "interior_starts": int(np.sum(ens.start_u > e)),
        "cap_rejections": int(np.sum(ens.cap_rejections)),
        "jump_crossings": int(np.sum(ens.jump_crossings)),
    }
    if p.eps == 0:
        try:
            report["period"] = float(orbital_period(ens))
        except ConfigError:
            report["period"] = None
    return report
