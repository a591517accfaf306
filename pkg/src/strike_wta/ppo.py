"""PPO for the single-step (contextual bandit) assignment problem."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .engagement import REWARD_ALPHA, SimOptions, run_batch, tensor_from_init
from .network import (
    ActionDistribution,
    NetworkParams,
    greedy_action,
    load_params,
    log_prob_and_entropy,
    net_backward,
    net_forward,
    policy_forward,
    sample_action,
    save_params,
    value_forward,
)
from .scenario import NOMINAL, EpisodeInit, ScenarioConfig, sample_episode
from .solvers import build_instance, lowest_heading_error

log = logging.getLogger(__name__)

CURVE_COLUMNS = ["iteration", "episodes", "mean_reward", "min_reward", "max_reward", "value_loss", "kl", "clip_fraction"]
SIM_CHUNK = 500
FORWARD_CHUNK = 256


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    episodes_per_rollout: int = 2000
    clip_epsilon: float = 0.1
    policy_lr: float = 1e-4
    value_lr: float = 1e-3
    epochs_per_update: int = 10
    minibatch_size: int = 256
    gamma: float = 0.99  # inert: every episode is one step
    entropy_bonus: float = 0.0
    max_iterations: int = 200
    reward_alpha: float = REWARD_ALPHA
    advantage_normalization: bool = True
    seed: int = 0
    checkpoint_every: int = 10
    scenario: ScenarioConfig = field(default_factory=lambda: NOMINAL.fixed_size())

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        for name in ("episodes_per_rollout", "epochs_per_update", "minibatch_size", "max_iterations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scenario"] = self.scenario.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        d = dict(d)
        if "scenario" in d:
            d["scenario"] = ScenarioConfig.from_dict(d["scenario"])
        return cls(**d)


@dataclass
class RolloutBatch:
    observations: np.ndarray  # (N, m_max, n_max, 3)
    actions: np.ndarray  # (N, m_max) int, padded rows 0
    row_mask: np.ndarray  # (N, m_max) bool, rows of real weapons
    rewards: np.ndarray
    old_log_probs: np.ndarray
    values: np.ndarray
    destroyed_values: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)


def to_env_assignment(init: EpisodeInit, action: np.ndarray) -> np.ndarray:
    """Network action rows -> environment assignment.

    Rows beyond ``m`` are dropped; targets beyond ``n`` fall back to the
    weapon's lowest heading-error target.
    """
    a = np.asarray(action[: init.m], dtype=np.int64).copy()
    bad = a >= init.n
    if bad.any():
        a[bad] = lowest_heading_error(build_instance(init))[bad]
    return a


def _forward_chunks(params: NetworkParams, X: np.ndarray):
    logits, values = [], []
    for s in range(0, len(X), FORWARD_CHUNK):
        logits.append(policy_forward(params, X[s : s + FORWARD_CHUNK]).logits)
        values.append(value_forward(params, X[s : s + FORWARD_CHUNK]))
    return ActionDistribution(np.concatenate(logits)), np.concatenate(values)


def collect_rollout(params: NetworkParams, config: TrainConfig, iteration: int = 0) -> RolloutBatch:
    """Sample episodes, act with the stochastic policy and simulate them."""
    scen = config.scenario
    root = rngmod.derive_seed(config.seed, rngmod.TRAIN, iteration)
    inits = []
    for i in range(config.episodes_per_rollout):
        try:
            inits.append(sample_episode(scen, rngmod.episode_seed(root, i)))
        except Exception as exc:
            raise TrainingError(f"rollout {iteration}, episode {i}: {exc}") from exc
    X = np.stack([tensor_from_init(e, params.m_max, params.n_max) for e in inits])
    dist, values = _forward_chunks(params, X)
    ms = np.array([e.m for e in inits])
    row_mask = np.arange(params.m_max)[None, :] < ms[:, None]
    prng = rngmod.generator(config.seed, rngmod.POLICY, iteration)
    actions = sample_action(dist, params.m_max, prng)
    actions = np.where(row_mask, actions, 0)
    lp_rows = np.take_along_axis(dist.log_probs, actions[..., None], axis=-1)[..., 0]
    old_lp = np.where(row_mask, lp_rows, 0.0).sum(axis=1)
    opts = SimOptions(alpha=config.reward_alpha)
    destroyed = np.empty(len(inits))
    for s in range(0, len(inits), SIM_CHUNK):
        chunk = inits[s : s + SIM_CHUNK]
        assigns = [to_env_assignment(e, actions[s + i]) for i, e in enumerate(chunk)]
        for i, res in enumerate(run_batch(chunk, assigns, opts)):
            destroyed[s + i] = res.destroyed_value
    return RolloutBatch(X, actions, row_mask, config.reward_alpha * destroyed, old_lp, values, destroyed)


def advantages(batch: RolloutBatch, normalize: bool = False, gamma: float = 1.0) -> np.ndarray:
    """Return minus value baseline; the return of a one-step episode is its reward."""
    returns = batch.rewards * gamma**0
    adv = returns - batch.values
    if normalize and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv


def clipped_surrogate(ratio, adv, eps):
    ratio = np.asarray(ratio, dtype=float)
    adv = np.asarray(adv, dtype=float)
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Descent step on ``params`` in place."""
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state(self) -> dict[str, np.ndarray]:
        out = {"t": np.array(self.t)}
        out.update({f"m/{k}": v for k, v in self.m.items()})
        out.update({f"v/{k}": v for k, v in self.v.items()})
        return out

    def load_state(self, d) -> None:
        self.t = int(d["t"])
        self.m = {k[2:]: np.array(d[k]) for k in d if k.startswith("m/")}
        self.v = {k[2:]: np.array(d[k]) for k in d if k.startswith("v/")}


def _policy_terms(params: NetworkParams, X, actions, mask):
    logits, cache = net_forward(params.policy, X, keep=True)
    z = logits.reshape(-1, params.m_max, params.n_max)
    z = z - z.max(axis=-1, keepdims=True)
    lp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    p = np.exp(lp)
    chosen = np.take_along_axis(lp, actions[..., None], axis=-1)[..., 0]
    new_lp = np.where(mask, chosen, 0.0).sum(axis=1)
    row_ent = -(p * lp).sum(axis=-1)
    entropy = np.where(mask, row_ent, 0.0).sum(axis=1)
    return cache, lp, p, new_lp, row_ent, entropy


def ppo_update(
    params: NetworkParams,
    batch: RolloutBatch,
    config: TrainConfig,
    opt_policy: Adam,
    opt_value: Adam,
    rng: np.random.Generator,
) -> dict:
    """Clipped-surrogate policy ascent and value regression over minibatches."""
    N = len(batch)
    if N == 0:
        raise TrainingError("empty rollout batch")
    eps = config.clip_epsilon
    adv_all = advantages(batch, config.advantage_normalization, config.gamma)
    returns = batch.rewards
    surrs, vlosses, clips = [], [], []
    for epoch in range(config.epochs_per_update):
        perm = rng.permutation(N)
        for mb_i, s in enumerate(range(0, N, config.minibatch_size)):
            idx = perm[s : s + config.minibatch_size]
            B = len(idx)
            X, acts, mask, adv = batch.observations[idx], batch.actions[idx], batch.row_mask[idx], adv_all[idx]
            cache, lp, p, new_lp, row_ent, entropy = _policy_terms(params, X, acts, mask)
            ratio = np.exp(new_lp - batch.old_log_probs[idx])
            s1 = ratio * adv
            s2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
            surr = np.minimum(s1, s2)
            loss = -(surr.mean() + config.entropy_bonus * entropy.mean())
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite policy loss in epoch {epoch}, minibatch {mb_i} (seed {config.seed})")
            # d(-mean surr)/d(new_lp): unclipped branch active -> A * ratio
            dlp = -np.where(s1 <= s2, adv, 0.0) * ratio / B
            onehot = np.zeros_like(p)
            np.put_along_axis(onehot, acts[..., None], 1.0, axis=-1)
            dz = dlp[:, None, None] * (onehot - p)
            if config.entropy_bonus:
                dz += (config.entropy_bonus / B) * p * (lp + row_ent[..., None])
            dz *= mask[..., None]
            opt_policy.step(params.policy, net_backward(params.policy, cache, dz.reshape(B, -1)))

            v, vcache = net_forward(params.value, X, keep=True)
            err = v[:, 0] - returns[idx]
            vloss = 0.5 * np.mean(err**2)
            if not np.isfinite(vloss):
                raise TrainingError(f"non-finite value loss in epoch {epoch}, minibatch {mb_i} (seed {config.seed})")
            opt_value.step(params.value, net_backward(params.value, vcache, (err / B)[:, None]))
            surrs.append(surr.mean())
            vlosses.append(vloss)
            clips.append(np.mean(np.abs(ratio - 1.0) > eps))

    new_lp = np.concatenate(
        [
            _policy_terms(params, batch.observations[s : s + FORWARD_CHUNK], batch.actions[s : s + FORWARD_CHUNK],
                          batch.row_mask[s : s + FORWARD_CHUNK])[3]
            for s in range(0, N, FORWARD_CHUNK)
        ]
    )
    log_ratio = new_lp - batch.old_log_probs
    kl = float(np.mean(np.expm1(log_ratio) - log_ratio))
    return {
        "mean_reward": float(batch.rewards.mean()),
        "min_reward": float(batch.rewards.min()),
        "max_reward": float(batch.rewards.max()),
        "surrogate": float(np.mean(surrs)),
        "value_loss": float(np.mean(vlosses)),
        "kl": kl,
        "clip_fraction": float(np.mean(clips)),
    }


def _update_rng(config: TrainConfig, iteration: int) -> np.random.Generator:
    return rngmod.generator(config.seed, rngmod.TRAIN, iteration, 1)


def _write_checkpoint(out: Path, params, opt_p, opt_v, iteration: int, config: TrainConfig) -> None:
    save_params(params, out / "checkpoint.npz")
    state = {f"policy/{k}": v for k, v in opt_p.state().items()}
    state.update({f"value/{k}": v for k, v in opt_v.state().items()})
    with open(out / "optimizer.npz", "wb") as fh:
        np.savez(fh, **state)
    (out / "state.json").write_text(json.dumps({"iteration": iteration, "config": config.to_dict()}, indent=2))


def _read_checkpoint(out: Path, config: TrainConfig):
    meta = json.loads((out / "state.json").read_text())
    params = load_params(out / "checkpoint.npz", config.scenario.m_max, config.scenario.n_max)
    opt_p, opt_v = Adam(config.policy_lr), Adam(config.value_lr)
    with np.load(out / "optimizer.npz") as d:
        opt_p.load_state({k[7:]: d[k] for k in d.files if k.startswith("policy/")})
        opt_v.load_state({k[6:]: d[k] for k in d.files if k.startswith("value/")})
    return params, opt_p, opt_v, int(meta["iteration"])


def train(config: TrainConfig, out_dir, resume: bool = True, progress=None):
    """Alternate rollout collection and PPO updates.

    Writes ``learning_curve.csv`` (one row per completed iteration),
    ``checkpoint.npz`` + optimizer state every ``checkpoint_every``
    iterations and ``final.npz`` at the end.  Returns the trained
    parameters and the learning-curve rows.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curve_path = out / "learning_curve.csv"
    m_max, n_max = config.scenario.m_max, config.scenario.n_max
    start = 0
    rows: list[dict] = []
    if resume and (out / "state.json").exists():
        params, opt_p, opt_v, start = _read_checkpoint(out, config)
        if curve_path.exists():
            with open(curve_path) as fh:
                rows = [r for r in csv.DictReader(fh) if int(r["iteration"]) < start]
    else:
        params = NetworkParams.initialize(m_max, n_max, rngmod.generator(config.seed, rngmod.TRAIN, 2**31))
        opt_p, opt_v = Adam(config.policy_lr), Adam(config.value_lr)
    try:
        with open(curve_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, CURVE_COLUMNS)
            w.writeheader()
            for r in rows:
                w.writerow({k: r[k] for k in CURVE_COLUMNS})
            for it in range(start, config.max_iterations):
                batch = collect_rollout(params, config, it)
                metrics = ppo_update(params, batch, config, opt_p, opt_v, _update_rng(config, it))
                row = {"iteration": it, "episodes": (it + 1) * config.episodes_per_rollout}
                row.update({k: metrics[k] for k in CURVE_COLUMNS[2:]})
                rows.append(row)
                w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in row.items()})
                fh.flush()
                log.info("iter %d mean %.2f kl %.4f clip %.3f", it, metrics["mean_reward"], metrics["kl"],
                         metrics["clip_fraction"])
                if progress:
                    progress(it, metrics)
                if (it + 1) % config.checkpoint_every == 0 or it + 1 == config.max_iterations:
                    _write_checkpoint(out, params, opt_p, opt_v, it + 1, config)
    except OSError as exc:
        raise TrainingError(f"writing training output in {out} failed near iteration {len(rows)}: {exc}") from exc
    save_params(params, out / "final.npz")
    return params, rows


def greedy_policy_assignment(params: NetworkParams, init: EpisodeInit) -> np.ndarray:
    dist = policy_forward(params, tensor_from_init(init, params.m_max, params.n_max))
    return to_env_assignment(init, greedy_action(dist, init.m))


def held_out_median(params: NetworkParams, scenario: ScenarioConfig, episodes: int, seed: int) -> float:
    inits = [sample_episode(scenario, rngmod.episode_seed(seed, i)) for i in range(episodes)]
    assigns = [greedy_policy_assignment(params, e) for e in inits]
    vals = [r.destroyed_value for r in run_batch(inits, assigns)]
    return float(np.median(vals))


def train_best_of(config: TrainConfig, seeds, out_dir, eval_scenario: ScenarioConfig = NOMINAL,
                  eval_episodes: int = 1000, eval_seed: int = 12345):
    """Independent runs per seed; keep the one with the best held-out median."""
    out = Path(out_dir)
    scores = {}
    for s in seeds:
        cfg = dataclasses.replace(config, seed=int(s))
        params, _ = train(cfg, out / f"seed_{s}")
        scores[int(s)] = held_out_median(params, eval_scenario, eval_episodes, eval_seed)
    best = max(scores, key=lambda s: (scores[s], -s))
    shutil.copyfile(out / f"seed_{best}" / "final.npz", out / "best.npz")
    (out / "selection.json").write_text(json.dumps({"scores": scores, "best_seed": best}, indent=2))
    return best, scores
