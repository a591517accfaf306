"""Proportional navigation, drag-adjusted point-mass dynamics and RK4.

The array functions broadcast over leading axes of ``(..., 3)`` vectors and
only use elementwise arithmetic, so a weapon's trajectory is bit-identical
whether it is integrated alone or inside a large batch.  The dataclass
wrappers below them give the single-vehicle API.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

G = 9.81


@dataclass(frozen=True)
class GuidanceConstants:
    nav_gain: float = 5.0
    a_max: float = 40.0 * G
    feasibility_he: float = 15.0  # degrees
    mass: float = 450.0  # kg
    cd0: float = 0.1
    k_m: float = 0.1
    rho0: float = 1.225  # kg/m^3
    h_scale: float = 8500.0  # m
    dt_coarse: float = 0.1
    dt_fine: float = 0.01
    fine_range: float = 300.0
    kill_radius: float = 5.0

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if v <= 0:
                raise ValueError(f"{name} must be positive")


DEFAULT_CONSTANTS = GuidanceConstants()


def dot(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def norm(a):
    return np.sqrt(dot(a, a))


def cross(a, b):
    return np.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        axis=-1,
    )


def heading_errors(vel, pos, target_pos):
    """Angle in degrees between ``vel`` and the line of sight to ``target_pos``.

    Degenerate geometry yields ``nan`` rather than raising.
    """
    los = target_pos - pos
    denom = norm(vel) * norm(los)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.clip(dot(vel, los) / denom, -1.0, 1.0)
    return np.degrees(np.arccos(np.where(denom > 0, c, np.nan)))


def closing_speed(r_tm, v_tm):
    return -dot(r_tm, v_tm) / norm(r_tm)


def pn_accel(r_tm, v_tm, k: GuidanceConstants = DEFAULT_CONSTANTS):
    """Saturated PN acceleration command for relative state ``(r_tm, v_tm)``."""
    r2 = dot(r_tm, r_tm)
    rn = np.sqrt(r2)
    omega = cross(r_tm, v_tm) / r2[..., None]
    vc = -dot(r_tm, v_tm) / rn
    a_com = (-k.nav_gain * vc)[..., None] * cross(r_tm / rn[..., None], omega)
    mag = norm(a_com)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(mag > 0, np.minimum(mag, k.a_max) / mag, 0.0)
    return a_com * scale[..., None]


def atmosphere_density(h, k: GuidanceConstants = DEFAULT_CONSTANTS):
    """Isothermal exponential atmosphere; negative altitudes clamp to sea level."""
    return k.rho0 * np.exp(-np.maximum(h, 0.0) / k.h_scale)


def speed_rate(h, speed, accel_mag, k: GuidanceConstants = DEFAULT_CONSTANTS):
    return -atmosphere_density(h, k) * speed**2 * k.cd0 / (2.0 * k.mass) - k.k_m * accel_mag


def _stage(r, vt, V, a_mag, k):
    return drag_adjusted_velocity(vt, V), speed_rate(r[..., 2], V, a_mag, k)


def drag_adjusted_velocity(vt, V):
    """Velocity of magnitude ``V`` along the unadjusted velocity ``vt``."""
    return vt * (V / norm(vt))[..., None]


def rk4_step(r, vt, V, a, dt, k: GuidanceConstants = DEFAULT_CONSTANTS):
    """One RK4 step of (position, unadjusted velocity, speed) with ``a`` held.

    ``vt`` integrates the commanded acceleration without drag and is never
    rescaled; the flown velocity is ``drag_adjusted_velocity(vt, V)``.
    Returns ``(r, vt, V)``.
    """
    a_mag = norm(a)
    h = dt
    v1, s1 = _stage(r, vt, V, a_mag, k)
    v2, s2 = _stage(r + 0.5 * h * v1, vt + 0.5 * h * a, V + 0.5 * h * s1, a_mag, k)
    v3, s3 = _stage(r + 0.5 * h * v2, vt + 0.5 * h * a, V + 0.5 * h * s2, a_mag, k)
    v4, s4 = _stage(r + h * v3, vt + h * a, V + h * s3, a_mag, k)
    r_new = r + (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
    vt_new = vt + h * a
    V_new = np.maximum(V + (h / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4), 0.0)
    return r_new, vt_new, V_new


# -- single-vehicle API ------------------------------------------------------


@dataclass
class WeaponState:
    """``velocity`` is the flown (drag-adjusted) velocity; ``unadjusted_velocity``
    is the integral of commanded acceleration and defaults to ``velocity``."""

    position: np.ndarray
    velocity: np.ndarray
    speed: float | None = None
    unadjusted_velocity: np.ndarray | None = None
    alive: bool = True
    targeted: bool = False
    intercepted: bool = False
    terminal: bool = False
    assigned_target: int = 0
    miss_distance: float = np.inf

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if self.speed is None:
            self.speed = float(norm(self.velocity))
        if self.unadjusted_velocity is None:
            self.unadjusted_velocity = self.velocity.copy()
        else:
            self.unadjusted_velocity = np.asarray(self.unadjusted_velocity, dtype=float)


@dataclass
class TargetState:
    position: np.ndarray
    velocity: np.ndarray
    jink_accel: np.ndarray = None
    jink_timer: float = 0.0
    jink_magnitude: float = 0.0
    true_value: float = 1.0
    observed_value: float = 1.0
    destroyed: bool = False

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.jink_accel = np.zeros(3) if self.jink_accel is None else np.asarray(self.jink_accel, float)


def heading_error(weapon: WeaponState, target_pos) -> float:
    los = np.asarray(target_pos, dtype=float) - weapon.position
    if norm(los) == 0 or norm(weapon.velocity) == 0:
        raise ValueError("heading error undefined for zero line of sight or zero velocity")
    return float(heading_errors(weapon.velocity, weapon.position, np.asarray(target_pos, float)))


def pn_command(weapon: WeaponState, target: TargetState, k: GuidanceConstants = DEFAULT_CONSTANTS):
    r_tm = target.position - weapon.position
    if norm(r_tm) == 0:
        raise ValueError("coincident weapon and target positions")
    return pn_accel(r_tm, target.velocity - weapon.velocity, k)


def derivatives(weapon: WeaponState, a_m, k: GuidanceConstants = DEFAULT_CONSTANTS):
    """Time derivatives ``(r_dot, vtilde_dot, speed_dot)``."""
    a_m = np.asarray(a_m, dtype=float)
    r_dot = drag_adjusted_velocity(weapon.unadjusted_velocity, weapon.speed)
    return r_dot, a_m, float(speed_rate(weapon.position[2], weapon.speed, norm(a_m), k))


def integrate_step(
    weapon: WeaponState,
    target: TargetState,
    dt: float | None = None,
    k: GuidanceConstants = DEFAULT_CONSTANTS,
) -> WeaponState:
    """Advance one weapon by ``dt`` under the PN command computed at step start.

    With ``dt=None`` the step is 0.1 s outside ``k.fine_range`` and 0.01 s
    inside it.
    """
    if dt is None:
        rng_ = norm(target.position - weapon.position)
        dt = k.dt_fine if rng_ <= k.fine_range else k.dt_coarse
    a = pn_command(weapon, target, k)
    r, vt, V = rk4_step(weapon.position, weapon.unadjusted_velocity, np.float64(weapon.speed), a, dt, k)
    return replace(weapon, position=r, velocity=drag_adjusted_velocity(vt, V), speed=float(V), unadjusted_velocity=vt)


JINK_PERIOD = (1.0, 3.0)


def jink_vector(angle, magnitude):
    angle = np.asarray(angle, dtype=float)
    magnitude = np.asarray(magnitude, dtype=float)
    return np.stack([magnitude * np.cos(angle), magnitude * np.sin(angle), np.zeros_like(angle)], axis=-1)


def target_step(target: TargetState, dt: float, rng: np.random.Generator) -> TargetState:
    """Planar constant-acceleration update with a jink redraw on timer expiry."""
    a = target.jink_accel
    pos = target.position + target.velocity * dt + 0.5 * a * dt**2
    vel = target.velocity + a * dt
    timer = target.jink_timer - dt
    if timer <= 1e-12:
        a = jink_vector(rng.uniform(0.0, 2.0 * np.pi), target.jink_magnitude)
        timer = rng.uniform(*JINK_PERIOD)
    return replace(target, position=pos, velocity=vel, jink_accel=a, jink_timer=timer)
