"""Sample one Nominal episode, assign with branch-and-bound, fly it and plot the ground track.

    python3 demos/simulate_engagement.py [out_dir]
"""
from __future__ import annotations

import sys
from pathlib import Path

from strike_wta.engagement import SimOptions, run_episode, write_trace
from strike_wta.plotting import engagement_svg
from strike_wta.scenario import NOMINAL, sample_episode
from strike_wta.solvers import build_instance, solve_bnb


def main() -> None:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
    out.mkdir(parents=True, exist_ok=True)
    init = sample_episode(NOMINAL, episode_seed=7)
    assignment, expected = solve_bnb(build_instance(init), node_budget=2000)
    res = run_episode(init, assignment, SimOptions(record_trace=True))
    print(f"{init.m} weapons, {init.n} targets, target values {init.true_values.astype(int).tolist()}")
    print(f"assignment {assignment.tolist()} (model value {expected:.2f})")
    print(f"outcomes {res.outcome_names}")
    print(f"destroyed value {res.destroyed_value:g}, reward {res.reward:g}")
    write_trace(res, out / "trace.csv", init.true_values)
    engagement_svg(out / "trace.csv", out / "engagement.svg")
    print(f"wrote {out / 'trace.csv'} and {out / 'engagement.svg'}")


if __name__ == "__main__":
    main()
