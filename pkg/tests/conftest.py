from __future__ import annotations

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    print(ACCEPTANCE_LINES[-1])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_init(weapons, targets, values, rates=(0.0, 0.0), noise_seed=1, accel=0.0, classes=None):
    """Hand-built engagement: ``weapons`` is a list of (pos, vel), ``targets`` a list of positions."""
    from strike_wta.scenario import EpisodeInit

    wp = np.array([w[0] for w in weapons], float)
    wv = np.array([w[1] for w in weapons], float)
    tp = np.array(targets, float)
    values = np.asarray(values, float)
    return EpisodeInit(
        weapon_pos=wp,
        weapon_vel=wv,
        target_pos=tp,
        target_vel=np.zeros_like(tp),
        target_accel=np.full(len(tp), accel),
        true_values=values,
        observed_values=values.copy(),
        value_classes=np.unique(values) if classes is None else np.asarray(classes, float),
        targeting_rate=rates[0],
        intercept_rate=rates[1],
        noise_seed=noise_seed,
    )


def diving_weapon(target, speed=3000.0, offset=(0.0, 0.0)):
    """Weapon 20 km up and 10 km back, pointed straight at ``target``."""
    t = np.asarray(target, float)
    pos = t + np.array([-10000.0 + offset[0], offset[1], 20000.0])
    d = t - pos
    return pos, speed * d / np.linalg.norm(d)
