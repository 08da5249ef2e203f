"""Parent-dependent two-type model: recursion table against diffusion Monte Carlo.

The stationary law is Beta(0.2, 0.1), so the table is also checked against
Beta moments.
"""
import math

from scipy.special import betaln

from asglimits.core import ModelParams, log_multinomial
from asglimits.diffusion import DiffusionConfig, estimate_log_p, stationary_sample
from asglimits.recursion import solve_neutral


def main():
    params = ModelParams.create(1.0, [[0.9, 0.1], [0.2, 0.8]])
    table = solve_neutral(params, 6)
    ens = stationary_sample(params, DiffusionConfig(replicas=200, samples_per_replica=100, seed=5))
    print("n,p_table,p_beta,p_mc,rel_se")
    for n in [(1, 0), (0, 1), (2, 1), (3, 3), (1, 5)]:
        beta = math.exp(log_multinomial(n) + betaln(0.2 + n[0], 0.1 + n[1]) - betaln(0.2, 0.1))
        lp, rel = estimate_log_p(n, ens)
        print(f"{n[0]} {n[1]},{table.p(n):.6f},{beta:.6f},{math.exp(lp):.6f},{rel:.3f}")


if __name__ == "__main__":
    main()
