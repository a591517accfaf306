"""Short PPO run on a small fixed-size problem, then plot its learning curve.

    python3 demos/train_small.py [out_dir] [iterations]
"""
from __future__ import annotations

import sys
from pathlib import Path

from strike_wta.plotting import learning_curve_svg
from strike_wta.ppo import TrainConfig, train
from strike_wta.scenario import NOMINAL


def main() -> None:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/train")
    iterations = int(sys.argv[2]) if len(sys.argv) > 2 else 5
    scen = NOMINAL.replace(m_max=8, n_max=5, m_range=(8, 8), n_range=(5, 5), case_label="small")
    cfg = TrainConfig(episodes_per_rollout=200, max_iterations=iterations, scenario=scen, checkpoint_every=5)
    _, rows = train(cfg, out, resume=False,
                    progress=lambda it, m: print(f"iter {it}: mean reward {m['mean_reward']:.1f}, kl {m['kl']:.4f}"))
    learning_curve_svg(out / "learning_curve.csv", out / "learning_curve.svg")
    print(f"{len(rows)} iterations; weights in {out / 'final.npz'}, plot in {out / 'learning_curve.svg'}")


if __name__ == "__main__":
    main()
