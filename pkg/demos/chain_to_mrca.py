"""Jump-chain trajectories back to the most recent common ancestor, with selection."""
import numpy as np

from asglimits.chain import TablePi, simulate_to_mrca, transition_distribution
from asglimits.core import ModelParams
from asglimits.recursion import TruncationPolicy, solve_selection_truncated


def main():
    params = ModelParams.create(1.0, [[0.5, 0.5], [0.5, 0.5]], [-0.5, 0.0])
    sol = solve_selection_truncated(params, 30, TruncationPolicy(60))
    print(f"truncation error estimate: {sol.max_error:.2e}")
    pi = TablePi(sol.table)
    for entry in transition_distribution((4, 2), params, pi).entries:
        print(f"{entry.label:16s} {entry.prob:.5f}")
    rng = np.random.default_rng(1)
    events = [simulate_to_mrca((4, 2), params, pi, rng).n_events for _ in range(200)]
    print(f"mean events to MRCA from (4, 2): {np.mean(events):.2f}")


if __name__ == "__main__":
    main()
