"""Probabilistic weapon-target assignment objective and assignment policies.

The objective for an assignment ``a`` (weapon ``i`` -> target ``a[i]``) is

    sum_j c_j * (1 - prod_{i: a[i] = j} F_ij)

where ``F_ij`` is the probability that weapon ``i`` is intercepted before
reaching target ``j``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import DEFAULT_CONSTANTS, GuidanceConstants, dot, heading_errors, norm
from .scenario import EpisodeInit

INFEASIBLE_F = 0.9999
EXPECTED_RATES = (0.25, 0.2)
ENUMERATION_LIMIT = 10**7
DEFAULT_NODE_BUDGET = 20000


class InstanceTooLarge(ValueError):
    pass


def time_of_flight(r_tm0, v0) -> float:
    """Range over the initial velocity component along the line of sight."""
    r_tm0 = np.asarray(r_tm0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    rn = float(norm(r_tm0))
    vc0 = float(dot(v0, r_tm0)) / rn
    if not vc0 > 0:
        raise ValueError("no closure: velocity has no positive component along the line of sight")
    return rn / vc0


def intercept_cdf(t, lam1, lam2):
    """Interception CDF in the published closed form, clamped to [0, 1]."""
    t = np.asarray(t, dtype=float)
    f = 1.0 - np.exp(-lam1 * t) - lam2 * t * np.exp(-lam2 * t)
    return np.clip(f, 0.0, 1.0)


def intercept_cdf_exact(t, lam1, lam2):
    """P(T1 + T2 <= t) for independent exponentials with rates lam1, lam2."""
    t = np.asarray(t, dtype=float)
    if np.isclose(lam1, lam2, rtol=1e-9, atol=0.0):
        f = 1.0 - np.exp(-lam1 * t) * (1.0 + lam1 * t)
    else:
        f = 1.0 - (lam2 * np.exp(-lam1 * t) - lam1 * np.exp(-lam2 * t)) / (lam2 - lam1)
    return np.clip(f, 0.0, 1.0)


CDF_FORMS = {"printed": intercept_cdf, "exact": intercept_cdf_exact}


@dataclass
class WtaInstance:
    values: np.ndarray  # (n,) target values c_j
    F: np.ndarray  # (m, n) interception probabilities
    feasible: np.ndarray  # (m, n) bool
    heading_errors: np.ndarray  # (m, n) degrees

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        self.feasible = np.asarray(self.feasible, dtype=bool)
        self.heading_errors = np.asarray(self.heading_errors, dtype=float)
        m, n = self.F.shape
        if self.values.shape != (n,) or self.feasible.shape != (m, n) or self.heading_errors.shape != (m, n):
            raise ValueError("inconsistent instance shapes")
        if np.any(self.F < 0) or np.any(self.F > 1):
            raise ValueError("F entries must lie in [0, 1]")

    @property
    def m(self) -> int:
        return self.F.shape[0]

    @property
    def n(self) -> int:
        return self.F.shape[1]

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "values": self.values.tolist(),
            "F": self.F.tolist(),
            "feasible": self.feasible.astype(int).tolist(),
            "heading_errors": self.heading_errors.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> WtaInstance:
        inst = cls(d["values"], d["F"], np.asarray(d["feasible"], bool), d["heading_errors"])
        if (inst.m, inst.n) != (d["m"], d["n"]):
            raise ValueError("declared (m, n) does not match matrix shapes")
        return inst


def save_instance(inst: WtaInstance, path) -> None:
    Path(path).write_text(json.dumps(inst.to_dict()) + "\n")


def load_instance(path) -> WtaInstance:
    return WtaInstance.from_dict(json.loads(Path(path).read_text()))


def build_instance(
    init: EpisodeInit,
    expected_rates: tuple[float, float] = EXPECTED_RATES,
    destroyed=None,
    cdf: str = "printed",
    k: GuidanceConstants = DEFAULT_CONSTANTS,
) -> WtaInstance:
    """Interception-probability matrix from initial geometry and expected rates.

    Pairs with heading error at or above the feasibility limit, without
    closure, or against a destroyed target get ``F = 0.9999``.
    """
    wp = init.weapon_pos[:, None, :]
    wv = init.weapon_vel[:, None, :]
    r_tm = init.target_pos[None, :, :] - wp
    he = heading_errors(wv, wp, init.target_pos[None, :, :])
    rn = norm(r_tm)
    vc0 = dot(np.broadcast_to(wv, r_tm.shape), r_tm) / rn
    feasible = (he < k.feasibility_he) & (vc0 > 0)
    if destroyed is not None:
        feasible &= ~np.asarray(destroyed, bool)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        tof = np.where(feasible, rn / vc0, 0.0)
    F = np.where(feasible, CDF_FORMS[cdf](tof, *expected_rates), INFEASIBLE_F)
    return WtaInstance(init.observed_values.copy(), F, feasible, he)


def objective(inst: WtaInstance, a) -> float:
    a = np.asarray(a, dtype=np.int64)
    survive = np.ones(inst.n)
    for i, j in enumerate(a):
        survive[j] *= inst.F[i, j]
    return float(np.sum(inst.values * (1.0 - survive)))


def _objectives(inst: WtaInstance, A: np.ndarray) -> np.ndarray:
    """Objective for each row of a block of assignments."""
    out = np.zeros(len(A))
    for j in range(inst.n):
        surv = np.ones(len(A))
        for i in range(inst.m):
            surv *= np.where(A[:, i] == j, inst.F[i, j], 1.0)
        out += inst.values[j] * (1.0 - surv)
    return out


def solve_enumeration(inst: WtaInstance, chunk: int = 1 << 16) -> tuple[np.ndarray, float]:
    """Exhaustive optimum; ties go to the lexicographically smallest assignment."""
    m, n = inst.m, inst.n
    total = n**m
    if total > ENUMERATION_LIMIT:
        raise InstanceTooLarge(f"{n}^{m} = {total} assignments exceeds {ENUMERATION_LIMIT}")
    best_val, best = -np.inf, None
    digits = n ** np.arange(m - 1, -1, -1)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total))
        A = (codes[:, None] // digits[None, :]) % n
        vals = _objectives(inst, A)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best = float(vals[k]), A[k].copy()
    return best.astype(np.int64), objective(inst, best)


def _marginal_gains(inst: WtaInstance, survive: np.ndarray) -> np.ndarray:
    return inst.values[None, :] * survive[None, :] * (1.0 - inst.F)


def solve_greedy_local(inst: WtaInstance, tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Greedy maximum marginal return followed by reassignment/swap local search."""
    m, n = inst.m, inst.n
    c, F = inst.values, inst.F
    a = np.full(m, -1, dtype=np.int64)
    survive = np.ones(n)
    free = np.ones(m, dtype=bool)
    for _ in range(m):
        gains = np.where(free[:, None], c[None, :] * survive[None, :] * (1.0 - F), -np.inf)
        i, j = divmod(int(np.argmax(gains)), n)
        a[i] = j
        free[i] = False
        survive[j] *= F[i, j]
    return local_search(inst, a, tol)


def _survival(inst: WtaInstance, a: np.ndarray, skip: int = -1) -> np.ndarray:
    survive = np.ones(inst.n)
    for i, j in enumerate(a):
        if i != skip:
            survive[j] *= inst.F[i, j]
    return survive


def local_search(inst: WtaInstance, a, tol: float = 1e-12) -> tuple[np.ndarray, float]:
    a = np.asarray(a, dtype=np.int64).copy()
    c, F = inst.values, inst.F
    m = inst.m
    value = objective(inst, a)
    improved = True
    while improved:
        improved = False
        for i in range(m):
            s = _survival(inst, a, skip=i)
            # objective with weapon i moved to each target
            base = float(np.sum(c * (1.0 - s)))
            cand = base + c * s * (1.0 - F[i])
            j = int(np.argmax(cand))
            if j != a[i] and cand[j] > value + tol:
                a[i] = j
                value = objective(inst, a)
                improved = True
        for i in range(m):
            for k in range(i + 1, m):
                if a[i] == a[k]:
                    continue
                b = a.copy()
                b[i], b[k] = a[k], a[i]
                v = objective(inst, b)
                if v > value + tol:
                    a, value = b, v
                    improved = True
    return a, value


def bnb_root_bound(inst: WtaInstance) -> float:
    return float(_marginal_gains(inst, np.ones(inst.n)).max(axis=1).sum())


@dataclass
class BnbStats:
    nodes: int = 0
    exact: bool = True
    fallback: bool = False


def solve_bnb(
    inst: WtaInstance,
    node_budget: int = DEFAULT_NODE_BUDGET,
    return_stats: bool = False,
    tol: float = 1e-12,
):
    """Depth-first branch and bound over weapons in index order.

    The bound at a node adds, for each unassigned weapon, its best marginal
    gain against the current partial survival products; marginal gains can
    only shrink as more weapons are committed, so the bound is valid.  The
    incumbent starts from the greedy/local-search solution.  When the node
    budget runs out the incumbent is returned with ``stats.exact = False``.
    """
    stats = BnbStats()
    m, n = inst.m, inst.n
    try:
        best_a, best_v = solve_greedy_local(inst)
    except Exception:  # pragma: no cover - defensive, mirrors solver-failure fallback
        best_a = lowest_heading_error(inst)
        best_v = objective(inst, best_a)
        stats.fallback = True
    G = inst.values[None, :] * (1.0 - inst.F)
    F = inst.F
    a = np.zeros(m, dtype=np.int64)

    # explicit stack of (depth, survival, value, child order, next child position)
    survive = np.ones(n)
    stack = []

    def push(depth, surv, val):
        gains = surv * G[depth]
        order = np.argsort(-gains, kind="stable")
        stack.append([depth, surv, val, order, 0])

    if m == 0:
        out = (best_a, best_v)
        return (*out, stats) if return_stats else out
    push(0, survive, 0.0)
    stats.nodes = 1
    while stack:
        frame = stack[-1]
        depth, surv, val, order, pos = frame
        if pos >= n:
            stack.pop()
            continue
        frame[4] += 1
        j = int(order[pos])
        child_surv = surv.copy()
        gain = inst.values[j] * surv[j] * (1.0 - F[depth, j])
        child_surv[j] *= F[depth, j]
        child_val = val + gain
        a[depth] = j
        if depth == m - 1:
            if child_val > best_v + tol:
                best_v = child_val
                best_a = a.copy()
            continue
        bound = child_val + float((child_surv[None, :] * G[depth + 1 :]).max(axis=1).sum())
        if bound <= best_v + tol:
            continue
        if stats.nodes >= node_budget:
            stats.exact = False
            break
        stats.nodes += 1
        push(depth + 1, child_surv, child_val)
    best_v = objective(inst, best_a)
    return (best_a, best_v, stats) if return_stats else (best_a, best_v)


def solve_heuristic(inst: WtaInstance, destroyed=None) -> np.ndarray:
    """Value-weighted spreading rule.

    Each weapon in turn takes the feasible target maximizing
    ``value / (1 + weapons already on it)``; a weapon with no feasible
    target takes its lowest heading-error target.
    """
    m, n = inst.m, inst.n
    counts = [0] * n
    values = inst.values.tolist()
    feasible = inst.feasible.tolist()
    dead = [False] * n if destroyed is None else [bool(d) for d in destroyed]
    out = np.empty(m, dtype=np.int64)
    for i in range(m):
        best_j, best_score = -1, -np.inf
        for j in range(n):
            if feasible[i][j] and not dead[j]:
                score = values[j] / (1 + counts[j])
                if score > best_score:
                    best_j, best_score = j, score
        if best_j < 0:
            best_j = int(np.argmin(inst.heading_errors[i]))
        out[i] = best_j
        counts[best_j] += 1
    return out


def lowest_heading_error(inst: WtaInstance) -> np.ndarray:
    """Each weapon on its smallest heading-error target (ties to lowest index)."""
    he = np.where(np.isnan(inst.heading_errors), np.inf, inst.heading_errors)
    return np.argmin(he, axis=1).astype(np.int64)
