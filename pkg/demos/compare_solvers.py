"""Run every assignment solver on one sampled instance and print objective and run time."""
from __future__ import annotations

import time

from strike_wta.scenario import NOMINAL, sample_episode
from strike_wta.solvers import (
    build_instance,
    lowest_heading_error,
    objective,
    solve_bnb,
    solve_greedy_local,
    solve_heuristic,
)


def main() -> None:
    inst = build_instance(sample_episode(NOMINAL.replace(m_range=(12, 12), n_range=(6, 6)), episode_seed=3))
    solvers = {
        "bnb": lambda: solve_bnb(inst, node_budget=2000)[0],
        "greedy+local": lambda: solve_greedy_local(inst)[0],
        "heuristic": lambda: solve_heuristic(inst),
        "lowest-HE": lambda: lowest_heading_error(inst),
    }
    print(f"{inst.m} weapons, {inst.n} targets, {int(inst.feasible.sum())} feasible pairs")
    for name, solve in solvers.items():
        t0 = time.perf_counter()
        a = solve()
        ms = 1e3 * (time.perf_counter() - t0)
        print(f"{name:>13}: expected destroyed value {objective(inst, a):7.3f}  ({ms:.2f} ms)  {a.tolist()}")


if __name__ == "__main__":
    main()
