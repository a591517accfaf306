"""Randomized episode generation and the named evaluation cases."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

from . import rng as rngmod

Interval = tuple[float, float]

SPACING_ATTEMPTS = 1000


class ConfigError(ValueError):
    """Invalid scenario configuration or unknown case label."""


class ScenarioError(RuntimeError):
    """Episode could not be generated from an otherwise valid configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Randomization bounds for an episode distribution.

    Lengths are meters, angles degrees, rates per second.  ``m_range`` and
    ``n_range`` are inclusive integer intervals.
    """

    m_max: int = 20
    n_max: int = 12
    m_range: tuple[int, int] = (10, 20)
    n_range: tuple[int, int] = (4, 12)
    r_expected_range: Interval = (6000.0, 12000.0)
    distance_d: float = 30000.0
    azimuth_range: Interval = (-45.0, 45.0)
    elevation_range: Interval = (45.0, 90.0)
    weapon_speed_range: Interval = (2500.0, 3500.0)
    min_weapon_spacing: float = 2000.0
    r_gt_range: Interval = (6000.0, 12000.0)
    d_shift_range: Interval = (1000.0, 3000.0)
    target_speed_range: Interval = (0.0, 30.0)
    target_accel_range: Interval = (0.0, 1.0)
    value_count_range: tuple[int, int] = (3, 5)
    value_min: int = 1
    value_max_range: tuple[int, int] = (10, 15)
    targeting_rate_range: Interval = (0.2, 0.3)
    intercept_rate_range: Interval = (0.1, 0.3)
    sensor_shift_prob: float = 0.1
    value_proportional_targeting: bool = False
    seed: int = 0
    case_label: str = "Nominal"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            if f.name.endswith("_range"):
                lo, hi = getattr(self, f.name)
                if not lo <= hi:
                    raise ConfigError(f"{f.name}: min {lo} exceeds max {hi}")
                if lo < 0 and f.name not in ("azimuth_range",):
                    raise ConfigError(f"{f.name}: negative bound {lo}")
        if self.m_max < 1 or self.n_max < 1:
            raise ConfigError("m_max and n_max must be >= 1")
        if not (1 <= self.m_range[0] and self.m_range[1] <= self.m_max):
            raise ConfigError(f"m_range {self.m_range} not within [1, {self.m_max}]")
        if not (1 <= self.n_range[0] and self.n_range[1] <= self.n_max):
            raise ConfigError(f"n_range {self.n_range} not within [1, {self.n_max}]")
        if not 0.0 <= self.sensor_shift_prob <= 1.0:
            raise ConfigError("sensor_shift_prob must lie in [0, 1]")
        if self.value_min <= 0:
            raise ConfigError("value_min must be positive")
        if self.value_count_range[0] < 1:
            raise ConfigError("value_count_range must be >= 1")
        if self.value_max_range[0] - self.value_min + 1 < self.value_count_range[1]:
            raise ConfigError("value bounds too narrow for the requested number of classes")
        lo, hi = self.elevation_range
        if lo < 0 or hi > 90:
            raise ConfigError("elevation_range must lie in [0, 90] degrees")
        if self.distance_d <= 0:
            raise ConfigError("distance_d must be positive")

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        return cls(**kwargs)

    def replace(self, **changes) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)

    def fixed_size(self) -> ScenarioConfig:
        """Same distribution with (m, n) pinned at (m_max, n_max)."""
        return self.replace(m_range=(self.m_max, self.m_max), n_range=(self.n_max, self.n_max))


def save_config(config: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")


def load_config(path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return ScenarioConfig.from_dict(data)


@dataclass
class EpisodeInit:
    """Initial conditions of one engagement.

    Arrays are indexed by weapon (``m`` rows) or target (``n`` rows).
    ``noise_seed`` keys the in-flight randomness (threat draws, jinking),
    which is kept apart from the policy so that every policy faces the
    same realization.
    """

    weapon_pos: np.ndarray
    weapon_vel: np.ndarray
    target_pos: np.ndarray
    target_vel: np.ndarray
    target_accel: np.ndarray  # jink magnitude per target
    true_values: np.ndarray
    observed_values: np.ndarray
    value_classes: np.ndarray
    targeting_rate: float
    intercept_rate: float
    noise_seed: int
    value_proportional_targeting: bool = False
    seed: int = 0
    reference_points: np.ndarray = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return len(self.weapon_pos)

    @property
    def n(self) -> int:
        return len(self.target_pos)


def _uniform_disc(rng: np.random.Generator, radius: float, count: int) -> np.ndarray:
    r = radius * np.sqrt(rng.random(count))
    ang = rng.uniform(0.0, 2.0 * np.pi, count)
    return np.column_stack([r * np.cos(ang), r * np.sin(ang), np.zeros(count)])


def weapon_geometry(ref: np.ndarray, distance: float, azimuth_deg, elevation_deg) -> np.ndarray:
    """Weapon position(s) at ``distance`` from ``ref`` along (azimuth, elevation)."""
    az = np.radians(azimuth_deg)
    el = np.radians(elevation_deg)
    offset = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)
    return ref + distance * offset


def spacing_ok(positions: np.ndarray, min_spacing: float) -> bool:
    """True when every pair of positions is at least ``min_spacing`` apart."""
    return len(positions) < 2 or float(pdist(positions).min()) >= min_spacing


def sample_value_classes(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    count = int(rng.integers(config.value_count_range[0], config.value_count_range[1] + 1))
    vmax = int(rng.integers(config.value_max_range[0], config.value_max_range[1] + 1))
    pool = np.arange(config.value_min, vmax + 1)
    return np.sort(rng.choice(pool, size=count, replace=False)).astype(float)


def class_probabilities(classes) -> np.ndarray:
    classes = np.asarray(classes, dtype=float)
    if classes.size == 0 or np.any(classes <= 0):
        raise ConfigError("value classes must be nonempty and strictly positive")
    if np.any(np.diff(classes) <= 0):
        raise ConfigError("value classes must be strictly increasing")
    w = 1.0 / classes
    return w / w.sum()


def sample_target_values(classes, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` values with probability inversely proportional to the value."""
    p = class_probabilities(classes)
    return np.asarray(classes, dtype=float)[rng.choice(len(p), size=n, p=p)]


def _shift_classes(idx: np.ndarray, u: np.ndarray, k: int, shift_prob: float) -> np.ndarray:
    down = (u < 0.5 * shift_prob) & (idx > 0)
    up = (u >= 0.5 * shift_prob) & (u < shift_prob) & (idx < k - 1)
    return idx - down + up


def observe_values(true_values, classes, shift_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Vectorized sensor model: one class down or up with ``shift_prob / 2`` each."""
    classes = np.asarray(classes, dtype=float)
    true_values = np.asarray(true_values, dtype=float)
    idx = np.searchsorted(classes, true_values)
    if np.any(idx >= len(classes)) or np.any(classes[np.minimum(idx, len(classes) - 1)] != true_values):
        raise ValueError("true value not among the value classes")
    u = rng.random(true_values.shape)
    return classes[_shift_classes(idx, u, len(classes), shift_prob)]


def sensor_observe(true_value: float, classes, shift_prob: float, rng: np.random.Generator) -> float:
    """Observed class for a single target."""
    if not 0.0 <= shift_prob <= 1.0:
        raise ValueError("shift_prob must lie in [0, 1]")
    return float(observe_values(np.array([true_value]), classes, shift_prob, rng)[0])


def sample_episode(config: ScenarioConfig, episode_seed: int) -> EpisodeInit:
    """Draw one episode's initial conditions; a pure function of its arguments."""
    rng = np.random.default_rng(int(episode_seed) & ((1 << 64) - 1))
    m = int(rng.integers(config.m_range[0], config.m_range[1] + 1))
    n = int(rng.integers(config.n_range[0], config.n_range[1] + 1))
    r_expected = rng.uniform(*config.r_expected_range)

    for _ in range(SPACING_ATTEMPTS):
        refs = _uniform_disc(rng, r_expected, m)
        az = rng.uniform(*config.azimuth_range, m)
        el = rng.uniform(*config.elevation_range, m)
        pos = weapon_geometry(refs, config.distance_d, az, el)
        if spacing_ok(pos, config.min_weapon_spacing):
            break
    else:
        raise ScenarioError(
            f"weapon spacing {config.min_weapon_spacing} m unsatisfiable after "
            f"{SPACING_ATTEMPTS} attempts (episode seed {episode_seed})"
        )
    speed = rng.uniform(*config.weapon_speed_range, m)
    vel = (refs - pos) / config.distance_d * speed[:, None]

    r_gt = rng.uniform(*config.r_gt_range)
    tpos = _uniform_disc(rng, r_gt, n)
    shift = rng.uniform(*config.d_shift_range, n)
    shift_ang = rng.uniform(0.0, 2.0 * np.pi, n)
    tpos[:, 0] += shift * np.cos(shift_ang)
    tpos[:, 1] += shift * np.sin(shift_ang)
    tspeed = rng.uniform(*config.target_speed_range, n)
    tang = rng.uniform(0.0, 2.0 * np.pi, n)
    tvel = np.column_stack([tspeed * np.cos(tang), tspeed * np.sin(tang), np.zeros(n)])
    taccel = rng.uniform(*config.target_accel_range, n)

    classes = sample_value_classes(config, rng)
    true_values = sample_target_values(classes, n, rng)
    observed = observe_values(true_values, classes, config.sensor_shift_prob, rng)

    return EpisodeInit(
        weapon_pos=pos,
        weapon_vel=vel,
        target_pos=tpos,
        target_vel=tvel,
        target_accel=taccel,
        true_values=true_values,
        observed_values=observed,
        value_classes=classes,
        targeting_rate=float(rng.uniform(*config.targeting_rate_range)),
        intercept_rate=float(rng.uniform(*config.intercept_rate_range)),
        noise_seed=rngmod.derive_seed(episode_seed, rngmod.ENV_NOISE),
        value_proportional_targeting=config.value_proportional_targeting,
        seed=int(episode_seed),
        reference_points=refs,
    )


NOMINAL = ScenarioConfig()

_CASE_OVERRIDES = {
    "Nominal": {},
    "Threat Model 1": {"targeting_rate_range": (0.0, 0.25), "intercept_rate_range": (0.0, 0.25)},
    "Threat Model 2": {"targeting_rate_range": (0.15, 0.25), "intercept_rate_range": (0.15, 0.25)},
    "Sensor Noise": {"sensor_shift_prob": 0.2},
    "Threat Targeting": {"value_proportional_targeting": True},
    "25km Range": {"distance_d": 25000.0},
}

TABLE_CASES = tuple(_CASE_OVERRIDES)

_SCALE_PRESETS = {(20, 12): 1, (40, 24): 2, (60, 36): 3}
SCALE_LABELS = tuple(f"({m},{n})" for m, n in _SCALE_PRESETS)


def _scale_case(m_max: int, n_max: int) -> ScenarioConfig:
    k = _SCALE_PRESETS[(m_max, n_max)]
    lo_e, hi_e = NOMINAL.r_expected_range
    lo_g, hi_g = NOMINAL.r_gt_range
    return NOMINAL.replace(
        m_max=m_max,
        n_max=n_max,
        m_range=(m_max // 2, m_max),
        n_range=(n_max // 3, n_max),
        r_expected_range=(lo_e * k, hi_e * k),
        r_gt_range=(lo_g * k, hi_g * k),
        case_label=f"({m_max},{n_max})",
    )


def parse_scale_label(label: str) -> tuple[int, int] | None:
    s = label.strip().strip("()").replace("x", ",").replace(" ", "")
    try:
        m, n = (int(v) for v in s.split(","))
    except ValueError:
        return None
    return (m, n) if (m, n) in _SCALE_PRESETS else None


def make_case(label: str) -> ScenarioConfig:
    """Nominal configuration with one named case's overrides applied."""
    if label in _CASE_OVERRIDES:
        return NOMINAL.replace(case_label=label, **_CASE_OVERRIDES[label])
    size = parse_scale_label(label)
    if size is not None:
        return _scale_case(*size)
    valid = ", ".join(list(TABLE_CASES) + list(SCALE_LABELS))
    raise ConfigError(f"unknown case {label!r}; valid cases: {valid}")
