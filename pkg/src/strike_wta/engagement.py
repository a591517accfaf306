"""Episode execution: threat and sensor processes, destruction bookkeeping,
reward, observation tensors and trajectory traces."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .dynamics import (
    DEFAULT_CONSTANTS,
    GuidanceConstants,
    JINK_PERIOD,
    WeaponState,
    closing_speed,
    dot,
    drag_adjusted_velocity,
    heading_errors,
    jink_vector,
    norm,
    pn_accel,
    rk4_step,
)
from .scenario import EpisodeInit, sensor_observe  # noqa: F401  (re-exported)

FLYING, INTERCEPTED, HIT, MISS = 0, 1, 2, 3
OUTCOME_NAMES = {FLYING: "flying", INTERCEPTED: "intercepted", HIT: "hit", MISS: "miss"}

REWARD_ALPHA = 10.0
T_NORM = 20.0
V_NORM = 15.0


@dataclass(frozen=True)
class SimOptions:
    constants: GuidanceConstants = DEFAULT_CONSTANTS
    threats: bool = True
    max_time: float = 60.0
    alpha: float = REWARD_ALPHA
    record_trace: bool = False


@dataclass
class EpisodeResult:
    destroyed_value: float
    reward: float
    weapon_outcome: np.ndarray
    target_destroyed: np.ndarray
    miss_distance: np.ndarray
    end_time: np.ndarray
    intercept_fraction: float
    solver_ms: float = float("nan")
    trace: list | None = field(default=None, repr=False)

    @property
    def n_intercepted(self) -> int:
        return int(np.sum(self.weapon_outcome == INTERCEPTED))

    @property
    def outcome_names(self) -> list[str]:
        return [OUTCOME_NAMES[int(o)] for o in self.weapon_outcome]


# -- threat model --------------------------------------------------------------


def threat_step(
    weapon: WeaponState,
    targeting_rate: float,
    intercept_rate: float,
    dt: float = 0.1,
    rng: np.random.Generator | None = None,
) -> WeaponState:
    """One navigation period of the two-stage threat process.

    An untargeted weapon becomes targeted with probability
    ``targeting_rate * dt``; a weapon targeted on an earlier step is
    intercepted with probability ``intercept_rate * dt``.
    """
    if not weapon.alive:
        return weapon
    u = rng.random()
    if weapon.targeted:
        if u < intercept_rate * dt:
            return replace(weapon, alive=False, intercepted=True)
        return weapon
    if u < targeting_rate * dt:
        return replace(weapon, targeted=True)
    return weapon


def first_success_step(u, p):
    """Step index (1-based) of the first success of per-step Bernoulli(p) trials.

    Inverse-CDF form of the geometric law, so one uniform per weapon
    replaces the per-step draws and stays paired across policies.
    """
    u = np.asarray(u, dtype=float)
    p = np.broadcast_to(np.asarray(p, dtype=float), u.shape)
    out = np.full(u.shape, np.inf)
    mid = (p > 0) & (p < 1)
    out[mid] = np.maximum(np.ceil(np.log1p(-u[mid]) / np.log1p(-p[mid])), 1.0)
    out[p >= 1] = 1.0
    return out


def targeting_probability(init: EpisodeInit, assignment: np.ndarray, dt: float) -> np.ndarray:
    p = np.full(init.m, init.targeting_rate * dt)
    if init.value_proportional_targeting:
        scale = init.true_values[assignment] / float(np.mean(init.value_classes))
        p = np.clip(p * scale, 0.0, 1.0)
    return p


def intercept_schedule(init: EpisodeInit, assignment: np.ndarray, dt: float) -> np.ndarray:
    """Guidance step at whose start each weapon is intercepted (inf = never)."""
    u = rngmod.generator(init.noise_seed, 0).random((init.m, 2))
    k1 = first_success_step(u[:, 0], targeting_probability(init, assignment, dt))
    k2 = first_success_step(u[:, 1], init.intercept_rate * dt)
    return k1 + k2


def _jink_draws(init: EpisodeInit, count: int):
    d = rngmod.generator(init.noise_seed, 1).random((init.n, count, 2))
    angles = 2.0 * np.pi * d[..., 0]
    durations = JINK_PERIOD[0] + (JINK_PERIOD[1] - JINK_PERIOD[0]) * d[..., 1]
    return angles, durations


# -- simulation ----------------------------------------------------------------


def _check_assignment(init: EpisodeInit, assignment) -> np.ndarray:
    a = np.asarray(assignment)
    if a.shape != (init.m,):
        raise ValueError(f"assignment length {a.size} does not match m = {init.m}")
    if not np.issubdtype(a.dtype, np.integer):
        if np.any(a != np.round(a)):
            raise ValueError("assignment entries must be integers")
        a = a.astype(np.int64)
    if np.any(a < 0) or np.any(a >= init.n):
        raise ValueError(f"assignment entries must lie in [0, {init.n})")
    return a.astype(np.int64)


def _cpa_miss(ht, hy, count):
    """Minimum of the quadratic through the last three (time, range^2) samples."""
    t0, t1, t2 = ht[:, 0], ht[:, 1], ht[:, 2]
    y0, y1, y2 = hy[:, 0], hy[:, 1], hy[:, 2]
    best = np.minimum(y1, y2)
    ok = count >= 3
    with np.errstate(invalid="ignore", divide="ignore"):
        f01 = (y1 - y0) / (t1 - t0)
        f12 = (y2 - y1) / (t2 - t1)
        a = (f12 - f01) / (t2 - t0)
        ts = np.clip(0.5 * (t0 + t1) - f01 / (2.0 * a), t0, t2)
        yq = y0 + f01 * (ts - t0) + a * (ts - t0) * (ts - t1)
    use = ok & (a > 0) & np.isfinite(yq)
    best = np.where(use, np.minimum(yq, best), best)
    tbest = np.where(use, ts, np.where(y1 <= y2, t1, t2))
    return np.sqrt(np.maximum(best, 0.0)), tbest


def run_batch(inits, assignments, options: SimOptions = SimOptions()) -> list[EpisodeResult]:
    """Simulate many independent episodes in one vectorized pass.

    Each weapon only interacts with its own assigned target, so the batch
    is a flat array of weapons; results are split back per episode.
    """
    k = options.constants
    dt = k.dt_coarse
    n_fine = int(round(dt / k.dt_fine))
    steps = int(round(options.max_time / dt))
    n_jink = int(np.ceil(options.max_time / JINK_PERIOD[0])) + 2

    assigns = [_check_assignment(e, a) for e, a in zip(inits, assignments)]
    w_off = np.cumsum([0] + [e.m for e in inits])
    t_off = np.cumsum([0] + [e.n for e in inits])
    W, T = int(w_off[-1]), int(t_off[-1])

    r = np.concatenate([e.weapon_pos for e in inits]).astype(float) if W else np.zeros((0, 3))
    v = np.concatenate([e.weapon_vel for e in inits]).astype(float) if W else np.zeros((0, 3))
    V = norm(v)
    vt = v.copy()  # unadjusted velocity, integrates the command without drag
    gt = np.concatenate([a + t_off[i] for i, a in enumerate(assigns)]) if W else np.zeros(0, int)
    if options.threats and W:
        s_int = np.concatenate([intercept_schedule(e, a, dt) for e, a in zip(inits, assigns)])
    else:
        s_int = np.full(W, np.inf)

    tp = np.concatenate([e.target_pos for e in inits]).astype(float)
    tv = np.concatenate([e.target_vel for e in inits]).astype(float)
    amag = np.concatenate([e.target_accel for e in inits]).astype(float)
    draws = [_jink_draws(e, n_jink) for e in inits]
    jang = np.concatenate([d[0] for d in draws])
    jdur = np.concatenate([d[1] for d in draws])
    ta = jink_vector(jang[:, 0], amag)
    timer = jdur[:, 0].copy()
    jidx = np.ones(T, dtype=np.int64)
    destroyed = np.zeros(T, dtype=bool)

    active = np.ones(W, dtype=bool)
    outcome = np.zeros(W, dtype=np.int64)
    miss = np.full(W, np.inf)
    end_time = np.full(W, np.nan)
    ht = np.full((W, 3), np.nan)
    hy = np.full((W, 3), np.nan)
    ht[:, 2] = 0.0
    rel0 = tp[gt] - r
    hy[:, 2] = dot(rel0, rel0)
    hcount = np.ones(W, dtype=np.int64)

    trace = [] if options.record_trace else None

    def record(t):
        if trace is None:
            return
        for i in range(W):
            trace.append((t, "weapon", i, *r[i], OUTCOME_NAMES[int(outcome[i])]))
        for j in range(T):
            trace.append((t, "target", j, *tp[j], "destroyed" if destroyed[j] else "alive"))

    def sample(idx, t):
        """Push a range sample for weapons ``idx``; return those past closest approach."""
        rel = tp[gt[idx]] + tv[gt[idx]] * (t - t_step) + 0.5 * ta[gt[idx]] * (t - t_step) ** 2 - r[idx]
        y = dot(rel, rel)
        rising = y > hy[idx, 2]
        ht[idx, :2] = ht[idx, 1:]
        hy[idx, :2] = hy[idx, 1:]
        ht[idx, 2] = t
        hy[idx, 2] = y
        hcount[idx] = np.minimum(hcount[idx] + 1, 3)
        done = idx[rising]
        if done.size:
            md, tm = _cpa_miss(ht[done], hy[done], hcount[done])
            miss[done] = md
            end_time[done] = tm
            hit = md < k.kill_radius
            outcome[done] = np.where(hit, HIT, MISS)
            destroyed[gt[done[hit]]] = True
            active[done] = False
        return idx[~rising]

    record(0.0)
    for s in range(1, steps + 1):
        t_step = (s - 1) * dt
        if options.threats:
            shot = active & (s_int <= s)
            if shot.any():
                outcome[shot] = INTERCEPTED
                end_time[shot] = t_step
                active[shot] = False
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        g = gt[idx]
        r_tm = tp[g] - r[idx]
        a_cmd = pn_accel(r_tm, tv[g] - v[idx], k)
        fine = norm(r_tm) <= k.fine_range

        cidx = idx[~fine]
        if cidx.size:
            ac = a_cmd[~fine]
            r[cidx], vt[cidx], V[cidx] = rk4_step(r[cidx], vt[cidx], V[cidx], ac, dt, k)
            v[cidx] = drag_adjusted_velocity(vt[cidx], V[cidx])
            sample(cidx, t_step + dt)

        fidx = idx[fine]
        af = a_cmd[fine]
        for q in range(1, n_fine + 1):
            if fidx.size == 0:
                break
            r[fidx], vt[fidx], V[fidx] = rk4_step(r[fidx], vt[fidx], V[fidx], af, k.dt_fine, k)
            v[fidx] = drag_adjusted_velocity(vt[fidx], V[fidx])
            remaining = sample(fidx, t_step + q * k.dt_fine)
            if remaining.size != fidx.size:
                af = af[np.isin(fidx, remaining)]
                fidx = remaining

        tp += tv * dt + 0.5 * ta * dt**2
        tv += ta * dt
        timer -= dt
        expired = timer <= 1e-12
        if expired.any():
            e = np.flatnonzero(expired)
            jj = np.minimum(jidx[e], n_jink - 1)
            ta[e] = jink_vector(jang[e, jj], amag[e])
            timer[e] = jdur[e, jj]
            jidx[e] += 1
        record(s * dt)

    left = np.flatnonzero(active)
    if left.size:
        outcome[left] = MISS
        miss[left] = np.sqrt(hy[left, 2])
        end_time[left] = options.max_time

    results = []
    for i, e in enumerate(inits):
        ws = slice(w_off[i], w_off[i + 1])
        ts = slice(t_off[i], t_off[i + 1])
        dest = destroyed[ts].copy()
        dv = float(np.sum(e.true_values[dest]))
        oc = outcome[ws].copy()
        results.append(
            EpisodeResult(
                destroyed_value=dv,
                reward=options.alpha * dv,
                weapon_outcome=oc,
                target_destroyed=dest,
                miss_distance=miss[ws].copy(),
                end_time=end_time[ws].copy(),
                intercept_fraction=float(np.mean(oc == INTERCEPTED)) if e.m else 0.0,
                trace=trace if (trace is not None and len(inits) == 1) else None,
            )
        )
    return results


def run_episode(init: EpisodeInit, assignment, options: SimOptions = SimOptions()) -> EpisodeResult:
    return run_batch([init], [assignment], options)[0]


def write_trace(result: EpisodeResult, path, target_values=None) -> None:
    """Delimited trajectory export: one row per (time, entity).

    ``target_values`` fills the trailing ``value`` column of target rows so a
    plot can size the targets; weapon rows leave it empty.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "entity", "id", "x", "y", "z", "status", "value"])
        for t, kind, i, x, y, z, status in result.trace or []:
            val = f"{target_values[i]:g}" if (kind == "target" and target_values is not None) else ""
            w.writerow([f"{t:.2f}", kind, i, f"{x:.3f}", f"{y:.3f}", f"{z:.3f}", status, val])


# -- observation -----------------------------------------------------------------


@dataclass
class EngagementState:
    weapon_pos: np.ndarray
    weapon_vel: np.ndarray
    target_pos: np.ndarray
    target_vel: np.ndarray
    observed_values: np.ndarray
    weapon_alive: np.ndarray | None = None
    target_destroyed: np.ndarray | None = None
    time: float = 0.0

    @classmethod
    def from_init(cls, init: EpisodeInit) -> EngagementState:
        return cls(
            init.weapon_pos, init.weapon_vel, init.target_pos, init.target_vel, init.observed_values
        )

    @property
    def m(self) -> int:
        return len(self.weapon_pos)

    @property
    def n(self) -> int:
        return len(self.target_pos)


def build_engagement_tensor(
    state: EngagementState,
    m_max: int,
    n_max: int,
    t_norm: float = T_NORM,
    v_norm: float = V_NORM,
    k: GuidanceConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """``(m_max, n_max, 3)`` observation: feasibility, normalized t_go, value.

    Padding rows/columns, dead weapons, destroyed targets and infeasible
    pairs are -1 in every channel.
    """
    m, n = state.m, state.n
    if m > m_max or n > n_max:
        raise ValueError(f"engagement ({m}, {n}) exceeds tensor size ({m_max}, {n_max})")
    E = -np.ones((m_max, n_max, 3))
    if m == 0 or n == 0:
        return E
    wp = state.weapon_pos[:, None, :]
    wv = state.weapon_vel[:, None, :]
    r_tm = state.target_pos[None, :, :] - wp
    v_tm = state.target_vel[None, :, :] - wv
    he = heading_errors(wv, wp, state.target_pos[None, :, :])
    with np.errstate(invalid="ignore", divide="ignore"):
        vc = closing_speed(r_tm, v_tm)
        tgo = norm(r_tm) / vc
    ok = (he < k.feasibility_he) & (vc > 0)
    if state.weapon_alive is not None:
        ok &= np.asarray(state.weapon_alive, bool)[:, None]
    if state.target_destroyed is not None:
        ok &= ~np.asarray(state.target_destroyed, bool)[None, :]
    block = np.stack(
        [
            np.ones((m, n)),
            np.clip(tgo / t_norm, 0.0, 1.0),
            np.broadcast_to(np.asarray(state.observed_values, float)[None, :] / v_norm, (m, n)),
        ],
        axis=-1,
    )
    E[:m, :n] = np.where(ok[..., None], block, -1.0)
    return E


def tensor_from_init(init: EpisodeInit, m_max: int, n_max: int) -> np.ndarray:
    return build_engagement_tensor(EngagementState.from_init(init), m_max, n_max)
