"""Rescaled Dirichlet densities approach their Gaussian limit in sup norm."""
from asglimits.dirichlet import AlphaSequence, phi_n_sup, sup_norm_gap, sup_norm_limit


def main():
    seq = AlphaSequence((2.0, 3.0, 5.0))
    limit = sup_norm_limit(seq.alpha)
    print("n,sup_gap,sup_ratio")
    for n in (50, 200, 800, 3200):
        gap, _ = sup_norm_gap(n, seq)
        print(f"{n},{gap:.3e},{phi_n_sup(n, seq) / limit:.6f}")


if __name__ == "__main__":
    main()
