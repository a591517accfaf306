"""Monte Carlo evaluation harness, policy comparison and scalability runs.

Every episode index maps to a fixed episode seed, so all policies see the
same initial conditions and the same threat draws (common random numbers).
Episodes are processed in fixed-size chunks that do not depend on the
number of worker processes, which keeps reports identical for any --jobs.
"""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .engagement import INTERCEPTED, SimOptions, run_batch
from .network import NetworkParams, load_params
from .ppo import greedy_policy_assignment
from .scenario import ConfigError, EpisodeInit, ScenarioConfig, make_case, parse_scale_label, sample_episode
from .solvers import (
    WtaInstance,
    build_instance,
    lowest_heading_error,
    solve_bnb,
    solve_enumeration,
    solve_greedy_local,
    solve_heuristic,
)

log = logging.getLogger(__name__)

POLICIES = ("rl", "bnb", "greedy", "heuristic", "fallback", "random")
BENCHMARK = "bnb"
REPORT_COLUMNS = [
    "case", "policy", "median", "p25", "p75", "pct_of_benchmark",
    "lat_mean_ms", "lat_std_ms", "lat_max_ms", "intercept_frac",
]
SCALE_COLUMNS = ["preset", "ratio", "policy", "median", "lat_mean_ms", "lat_std_ms", "lat_max_ms", "lat_group_cv", "lat_mn_slope_ms"]
CHUNK = 250
DESK_EPISODES = 5000
FULL_EPISODES = 30000
BENCH_NODE_BUDGET = 2000
PACKAGED_WEIGHTS = "policy_20x12.npz"
UNTRAINED = "init"


class MissingWeightsError(FileNotFoundError):
    pass


def packaged_weights_path() -> Path:
    return Path(str(resources.files("strike_wta") / "data" / PACKAGED_WEIGHTS))


def resolve_weights(path, m_max: int, n_max: int) -> NetworkParams:
    """Load weights, defaulting to the packaged (20, 12) policy.

    The literal path ``"init"`` gives a freshly initialized network, which is
    only meaningful for latency measurements.
    """
    if isinstance(path, str) and path == UNTRAINED:
        return NetworkParams.initialize(m_max, n_max, 0)
    if path is None:
        if (m_max, n_max) != (20, 12):
            raise MissingWeightsError(f"no packaged weights for ({m_max}, {n_max}); pass --weights")
        path = packaged_weights_path()
    p = Path(path)
    if not p.is_file():
        raise MissingWeightsError(f"weights file not found: {p}")
    return load_params(p, m_max, n_max)


# -- policies ------------------------------------------------------------------


class Policy:
    """Callable ``(init, rng) -> assignment`` plus per-call bookkeeping."""

    name = "base"

    def __call__(self, init: EpisodeInit, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class SolverPolicy(Policy):
    def __init__(self, name: str, node_budget: int = BENCH_NODE_BUDGET):
        self.name = name
        self.node_budget = node_budget
        self.budget_bound = 0
        self.fallbacks = 0

    def __call__(self, init, rng):
        inst = build_instance(init)
        if self.name == "bnb":
            try:
                a, _, stats = solve_bnb(inst, self.node_budget, return_stats=True)
            except Exception as exc:
                log.warning("bnb failed (%s); using lowest heading error", exc)
                self.fallbacks += 1
                return lowest_heading_error(inst)
            self.budget_bound += not stats.exact
            self.fallbacks += stats.fallback
            return a
        if self.name == "greedy":
            return solve_greedy_local(inst)[0]
        if self.name == "heuristic":
            return solve_heuristic(inst)
        if self.name == "fallback":
            return lowest_heading_error(inst)
        if self.name == "random":
            return rng.integers(0, init.n, init.m)
        raise ConfigError(f"unknown policy {self.name!r}")


class RLPolicy(Policy):
    name = "rl"

    def __init__(self, params: NetworkParams):
        self.params = params

    def __call__(self, init, rng):
        if init.m > self.params.m_max or init.n > self.params.n_max:
            raise ConfigError(
                f"episode size ({init.m}, {init.n}) exceeds network size ({self.params.m_max}, {self.params.n_max})"
            )
        return greedy_policy_assignment(self.params, init)


def make_policy(name: str, params: NetworkParams | None = None, node_budget: int = BENCH_NODE_BUDGET) -> Policy:
    if name not in POLICIES:
        raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}")
    if name == "rl":
        if params is None:
            raise MissingWeightsError("rl policy needs weights")
        return RLPolicy(params)
    return SolverPolicy(name, node_budget)


# -- evaluation ----------------------------------------------------------------


@dataclass
class EpisodeRecords:
    destroyed: np.ndarray
    latency_ms: np.ndarray
    intercepted: np.ndarray
    weapons: np.ndarray
    targets: np.ndarray
    budget_bound: int = 0
    fallbacks: int = 0


@dataclass
class EvalReport:
    case: str
    policy: str
    episodes: int
    seed: int
    median: float
    p25: float
    p75: float
    mean: float
    pct_of_benchmark: float
    lat_mean_ms: float
    lat_std_ms: float
    lat_max_ms: float
    intercept_frac: float
    budget_bound: int = 0
    records: EpisodeRecords | None = field(default=None, repr=False)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_COLUMNS}


_WORKER_CACHE: dict = {}


def _chunk_job(args):
    config, policy_name, weights_path, node_budget, seed, start, stop, timing, threats = args
    key = (policy_name, str(weights_path), config.m_max, config.n_max, node_budget)
    if key not in _WORKER_CACHE:
        params = resolve_weights(weights_path, config.m_max, config.n_max) if policy_name == "rl" else None
        _WORKER_CACHE.clear()
        _WORKER_CACHE[key] = make_policy(policy_name, params, node_budget)
    policy = _WORKER_CACHE[key]
    inits = [sample_episode(config, rngmod.episode_seed(seed, i)) for i in range(start, stop)]
    lat = np.full(len(inits), np.nan)
    assigns = []
    if timing and inits:
        policy(inits[0], rngmod.generator(seed, rngmod.POLICY, start, 1))  # warm-up, not recorded
    if isinstance(policy, SolverPolicy):
        policy.budget_bound = policy.fallbacks = 0
    for k, (i, e) in enumerate(zip(range(start, stop), inits)):
        prng = rngmod.generator(seed, rngmod.POLICY, i)
        t0 = time.perf_counter_ns()
        a = policy(e, prng)
        t1 = time.perf_counter_ns()
        if timing:
            lat[k] = (t1 - t0) / 1e6
        assigns.append(a)
    results = run_batch(inits, assigns, SimOptions(threats=threats))
    return EpisodeRecords(
        destroyed=np.array([r.destroyed_value for r in results]),
        latency_ms=lat,
        intercepted=np.array([int(np.sum(r.weapon_outcome == INTERCEPTED)) for r in results]),
        weapons=np.array([e.m for e in inits]),
        targets=np.array([e.n for e in inits]),
        budget_bound=getattr(policy, "budget_bound", 0),
        fallbacks=getattr(policy, "fallbacks", 0),
    )


def run_episodes(
    config: ScenarioConfig,
    policy: str,
    episodes: int,
    seed: int,
    weights=None,
    jobs: int = 1,
    node_budget: int = BENCH_NODE_BUDGET,
    timing: bool = True,
    threats: bool = True,
) -> EpisodeRecords:
    """Per-episode records for one policy, merged in episode-index order."""
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    if policy == "rl":
        resolve_weights(weights, config.m_max, config.n_max)  # fail early in the parent
    elif policy not in POLICIES:
        raise ConfigError(f"unknown policy {policy!r}; choose from {', '.join(POLICIES)}")
    jobs_args = [
        (config, policy, weights, node_budget, seed, s, min(s + CHUNK, episodes), timing, threats)
        for s in range(0, episodes, CHUNK)
    ]
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_chunk_job, jobs_args))
    else:
        parts = [_chunk_job(a) for a in jobs_args]
    return EpisodeRecords(
        destroyed=np.concatenate([p.destroyed for p in parts]),
        latency_ms=np.concatenate([p.latency_ms for p in parts]),
        intercepted=np.concatenate([p.intercepted for p in parts]),
        weapons=np.concatenate([p.weapons for p in parts]),
        targets=np.concatenate([p.targets for p in parts]),
        budget_bound=sum(p.budget_bound for p in parts),
        fallbacks=sum(p.fallbacks for p in parts),
    )


def summarize(case: str, policy: str, rec: EpisodeRecords, seed: int, benchmark_median=None) -> EvalReport:
    d = rec.destroyed
    med = float(np.median(d))
    lat = rec.latency_ms
    timed = lat[np.isfinite(lat)]
    pct = float("nan")
    if benchmark_median is not None and benchmark_median > 0:
        pct = 100.0 * med / benchmark_median
    return EvalReport(
        case=case,
        policy=policy,
        episodes=len(d),
        seed=seed,
        median=med,
        p25=float(np.percentile(d, 25)),
        p75=float(np.percentile(d, 75)),
        mean=float(d.mean()),
        pct_of_benchmark=pct,
        lat_mean_ms=float(timed.mean()) if timed.size else float("nan"),
        lat_std_ms=float(timed.std()) if timed.size else float("nan"),
        lat_max_ms=float(timed.max()) if timed.size else float("nan"),
        intercept_frac=float(rec.intercepted.sum() / max(rec.weapons.sum(), 1)),
        budget_bound=rec.budget_bound,
        records=rec,
    )


def case_config(case: str | None = None, config: ScenarioConfig | None = None) -> ScenarioConfig:
    if config is not None:
        return config
    return make_case(case or "Nominal")


def evaluate(case: str, policy: str, episodes: int, seed: int, weights=None, jobs: int = 1,
             config: ScenarioConfig | None = None, node_budget: int = BENCH_NODE_BUDGET,
             timing: bool = True) -> EvalReport:
    cfg = case_config(case, config)
    rec = run_episodes(cfg, policy, episodes, seed, weights, jobs, node_budget, timing)
    return summarize(cfg.case_label, policy, rec, seed)


def compare(cases, policies, episodes: int, seed: int, out=None, weights=None, jobs: int = 1,
            node_budget: int = BENCH_NODE_BUDGET, timing: bool = True, configs=None) -> list[EvalReport]:
    """Cross product of cases and policies under common random numbers.

    ``pct_of_benchmark`` is relative to the bnb median of the same case and
    is empty when bnb is not among the policies.
    """
    reports = []
    cfgs = configs if configs is not None else [make_case(c) for c in cases]
    for cfg in cfgs:
        recs = {p: run_episodes(cfg, p, episodes, seed, weights, jobs, node_budget, timing) for p in policies}
        bench_med = float(np.median(recs[BENCHMARK].destroyed)) if BENCHMARK in recs else None
        for p in policies:
            rep = summarize(cfg.case_label, p, recs[p], seed, bench_med)
            if rep.budget_bound:
                log.info("%s/%s: %d of %d bnb calls hit the node budget (approximate)", cfg.case_label, p,
                         rep.budget_bound, rep.episodes)
            reports.append(rep)
    if out is not None:
        write_report(reports, out)
    return reports


def format_value(v) -> str:
    if isinstance(v, str):
        return v
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return ""
    return f"{v:.6g}"


def write_report(reports, path, columns=REPORT_COLUMNS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in reports:
            row = r.row() if hasattr(r, "row") else r
            w.writerow([format_value(row[c]) for c in columns])


# -- scalability -----------------------------------------------------------------


def group_latency_cv(rec: EpisodeRecords) -> float:
    """Coefficient of variation of mean latency across sampled (m, n) groups."""
    lat = rec.latency_ms
    ok = np.isfinite(lat)
    if not ok.any():
        return float("nan")
    keys = rec.weapons[ok] * 100000 + rec.targets[ok]
    means = np.array([lat[ok][keys == k].mean() for k in np.unique(keys)])
    return float(means.std() / means.mean()) if means.mean() > 0 else float("nan")


def latency_mn_slope(rec: EpisodeRecords) -> float:
    """Least-squares slope of latency (ms) against m*n."""
    lat = rec.latency_ms
    ok = np.isfinite(lat)
    x = (rec.weapons * rec.targets)[ok].astype(float)
    if ok.sum() < 2 or np.ptp(x) == 0:
        return float("nan")
    return float(np.polyfit(x, lat[ok], 1)[0])


def scale_bench(presets, episodes: int, seed: int, weights=None, jobs: int = 1, policies=("rl", "heuristic"),
                timing: bool = True) -> list[dict]:
    """Median value and latency rows for each scalability preset.

    ``weights`` maps a preset label to a weights path; a preset without an
    entry uses the packaged policy when one exists for its size.
    """
    weights = weights or {}
    rows = []
    base = None
    for label in presets:
        size = parse_scale_label(label)
        if size is None:
            raise ConfigError(f"unknown scale preset {label!r}")
        cfg = make_case(label)
        ratio = size[0] * size[1]
        base = base or ratio
        for p in policies:
            rec = run_episodes(cfg, p, episodes, seed, weights.get(label), jobs, timing=timing)
            rep = summarize(cfg.case_label, p, rec, seed)
            rows.append({
                "preset": f"({size[0]},{size[1]})",
                "ratio": ratio // base if ratio % base == 0 else ratio / base,
                "policy": p,
                "median": rep.median,
                "lat_mean_ms": rep.lat_mean_ms,
                "lat_std_ms": rep.lat_std_ms,
                "lat_max_ms": rep.lat_max_ms,
                "lat_group_cv": group_latency_cv(rec),
                "lat_mn_slope_ms": latency_mn_slope(rec),
            })
    return rows


def write_scale_report(rows, path) -> None:
    write_report(rows, path, SCALE_COLUMNS)


# -- solver oracle ---------------------------------------------------------------


def random_instance(rng: np.random.Generator, m_max: int = 6, n_max: int = 4) -> WtaInstance:
    m = int(rng.integers(1, m_max + 1))
    n = int(rng.integers(1, n_max + 1))
    values = rng.integers(1, 16, n).astype(float)
    F = rng.uniform(0.05, 0.95, (m, n))
    infeasible = rng.random((m, n)) < 0.3
    F[infeasible] = 0.9999
    he = np.where(infeasible, rng.uniform(15, 90, (m, n)), rng.uniform(0, 15, (m, n)))
    return WtaInstance(values=values, F=F, feasible=~infeasible, heading_errors=he)


@dataclass
class OracleReport:
    instances: int
    bnb_matches: int
    greedy_within_1pct: int
    max_greedy_gap: float
    max_bnb_error: float
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.bnb_matches == self.instances and self.greedy_within_1pct >= 0.95 * self.instances

    def lines(self) -> list[str]:
        return [
            f"instances: {self.instances}",
            f"bnb == enumeration (1e-9): {self.bnb_matches}/{self.instances}",
            f"greedy+local within 1%: {self.greedy_within_1pct}/{self.instances}",
            f"max greedy optimality gap: {100 * self.max_greedy_gap:.4f}%",
            f"max bnb abs error: {self.max_bnb_error:.3g}",
            "PASS" if self.passed else "FAIL",
        ]


def oracle_check(instances: int = 200, seed: int = 0, m_max: int = 6, n_max: int = 4) -> OracleReport:
    g = np.random.default_rng(seed)
    matches = within = 0
    worst_gap = worst_err = 0.0
    failures = []
    for _ in range(instances):
        inst = random_instance(g, m_max, n_max)
        _, v_opt = solve_enumeration(inst)
        _, v_bnb = solve_bnb(inst)
        _, v_gr = solve_greedy_local(inst)
        err = abs(v_bnb - v_opt)
        gap = (v_opt - v_gr) / v_opt if v_opt > 0 else 0.0
        worst_err = max(worst_err, err)
        worst_gap = max(worst_gap, gap)
        if err <= 1e-9:
            matches += 1
        else:
            failures.append(inst)
        within += gap <= 0.01
    return OracleReport(instances, matches, within, worst_gap, worst_err, failures)
