"""Common-random-number comparison of the solver policies on two cases."""
from __future__ import annotations

from strike_wta import bench


def main() -> None:
    reports = bench.compare(["Nominal", "Threat Model 1"], ["bnb", "greedy", "heuristic", "fallback", "random"],
                            episodes=200, seed=0)
    print(f"{'case':<16}{'policy':<11}{'median':>7}{'p25':>6}{'p75':>6}{'% bnb':>7}{'ms':>8}{'icpt':>6}")
    for r in reports:
        print(f"{r.case:<16}{r.policy:<11}{r.median:7.1f}{r.p25:6.1f}{r.p75:6.1f}{r.pct_of_benchmark:7.0f}"
              f"{r.lat_mean_ms:8.2f}{r.intercept_frac:6.2f}")


if __name__ == "__main__":
    main()
