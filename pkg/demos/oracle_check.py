"""Verify branch-and-bound and greedy+local against exhaustive enumeration on small instances."""
from __future__ import annotations

from strike_wta.bench import oracle_check


def main() -> None:
    for line in oracle_check(instances=200, seed=0).lines():
        print(line)


if __name__ == "__main__":
    main()
