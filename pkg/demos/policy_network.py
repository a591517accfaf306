"""Build the observation tensor for one episode and query a policy network.

Uses the packaged (20, 12) weights when present, else a fresh network.
"""
from __future__ import annotations

import numpy as np

from strike_wta import bench
from strike_wta.engagement import tensor_from_init
from strike_wta.network import NetworkParams, greedy_action, log_prob_and_entropy, policy_forward, value_forward
from strike_wta.scenario import NOMINAL, sample_episode


def main() -> None:
    path = bench.packaged_weights_path()
    params = bench.resolve_weights(None, 20, 12) if path.is_file() else NetworkParams.initialize(20, 12, 0)
    init = sample_episode(NOMINAL, episode_seed=11)
    E = tensor_from_init(init, 20, 12)
    dist = policy_forward(params, E)
    a = greedy_action(dist, init.m)
    lp, ent = log_prob_and_entropy(dist, a, init.m)
    print(f"episode ({init.m}, {init.n}); tensor {E.shape}, masked entries {int((E == -1).all(-1).sum())}")
    print(f"greedy assignment {a.tolist()}")
    print(f"log prob {lp:.3f}, entropy {ent:.3f}, value estimate {value_forward(params, E):.2f}")
    sample = bench.make_policy("rl", params)(init, np.random.default_rng(0))
    print(f"environment assignment (out-of-range targets clamped) {sample.tolist()}")


if __name__ == "__main__":
    main()
