"""Polynomial decay of sampling probabilities along a ray (PIM closed form).

Prints n * p(n y) against its limit and the fitted degree of decay.
"""
import math

from asglimits.asymptotics import degree_slope
from asglimits.core import DirectionY, PimParams
from asglimits.pim import pim_asymptotic_log_p, pim_log_p


def main():
    pp = PimParams(1.5, (0.3, 0.7))
    y = DirectionY((0.4, 0.6))
    print("n,p_exact,p_asymptotic,ratio")
    for n in (10, 100, 1000, 10_000):
        exact = pim_log_p(y.lattice(n), pp)
        approx = pim_asymptotic_log_p(n, y, pp)
        print(f"{n},{math.exp(exact):.6e},{math.exp(approx):.6e},{math.exp(exact - approx):.6f}")
    print(f"fitted degree over [1e3, 1e4]: {degree_slope(pp, y, (1000, 2000, 4000, 8000, 10_000)):.4f}")


if __name__ == "__main__":
    main()
