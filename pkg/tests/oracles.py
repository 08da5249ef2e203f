"""Independent reference computations used only by the tests.

None of these call into the package's solvers; they are deliberately naive.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import roots_jacobi


def all_configs(d: int, max_size: int, min_size: int = 0):
    out = []
    for m in range(min_size, max_size + 1):
        for c in itertools.product(range(m + 1), repeat=d):
            if sum(c) == m:
                out.append(c)
    return out


def multinomial(n) -> int:
    out = math.factorial(sum(n))
    for c in n:
        out //= math.factorial(c)
    return out


def moment_oracle(theta, P, gamma, N: int, degree: int | None = None) -> dict:
    """Stationary moments ``k(n) = E[prod x_i^{n_i}]`` by a dense solve.

    Uses ``E[L x^n] = 0`` for the generator
    ``L = 1/2 sum x_i (delta_ij - x_j) d_i d_j + 1/2 sum mu_i d_i`` together with
    ``k(0) = 1`` and the simplex relations ``k(n) = sum_i k(n + e_i)``.  With
    selection the system is cut at ``degree`` (moments above it are dropped).
    Returns ``{n: p(n)}`` for ``1 <= |n| <= N``.
    """
    P = np.asarray(P, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    d = P.shape[0]
    top = degree if degree is not None else N
    states = all_configs(d, top)
    index = {s: k for k, s in enumerate(states)}
    rows, rhs = [], []

    def add(row, b=0.0):
        rows.append(row)
        rhs.append(b)

    row = np.zeros(len(states))
    row[index[(0,) * d]] = 1.0
    add(row, 1.0)
    for n in states:
        m = sum(n)
        if m < top:
            row = np.zeros(len(states))
            row[index[n]] = 1.0
            for i in range(d):
                up = list(n)
                up[i] += 1
                row[index[tuple(up)]] -= 1.0
            add(row)
        if m == 0:
            continue
        # neutral generator terms are degree preserving; selection raises the degree by one
        if m == top and np.any(gamma != 0):
            continue
        row = np.zeros(len(states))
        row[index[n]] += -0.5 * (m * m - m) - 0.5 * theta * m + 0.5 * float(np.dot(n, gamma))
        for i in range(d):
            if n[i] >= 1:
                lo = list(n)
                lo[i] -= 1
                row[index[tuple(lo)]] += 0.5 * n[i] * (n[i] - 1)
                for j in range(d):
                    s = list(lo)
                    s[j] += 1
                    row[index[tuple(s)]] += 0.5 * theta * n[i] * P[j, i]
        for j in range(d):
            if gamma[j] != 0:
                up = list(n)
                up[j] += 1
                row[index[tuple(up)]] += -0.5 * m * gamma[j]
        add(row)
    A = np.array(rows)
    b = np.array(rhs)
    k, *_ = np.linalg.lstsq(A, b, rcond=None)
    return {n: multinomial(n) * k[index[n]] for n in states if 1 <= sum(n) <= N}


def beta_moment_gauss_jacobi(p: int, q: int, a: float, b: float, nodes: int | None = None) -> float:
    """``E[U^p (1-U)^q]`` for ``U ~ Beta(a, b)`` by Gauss-Jacobi quadrature.

    The rule is exact for polynomials of degree < 2 * nodes; more nodes only
    add rounding error from the node computation.
    """
    if nodes is None:
        nodes = max(2, (p + q) // 2 + 2)
    # weight (1-t)^(b-1) (1+t)^(a-1) on [-1, 1], u = (1+t)/2
    t, w = roots_jacobi(nodes, b - 1.0, a - 1.0)
    u = 0.5 * (1.0 + t)
    num = np.sum(w * u**p * (1.0 - u) ** q)
    den = np.sum(w)
    return float(num / den)


def dirichlet_moment_quadrature(n, alpha) -> float:
    """``E[prod x_i^{n_i}]`` under Dirichlet(alpha) by stick-breaking quadrature."""
    n = list(n)
    alpha = list(alpha)
    out = 1.0
    while len(n) > 1:
        rest_n = sum(n[1:])
        rest_a = sum(alpha[1:])
        out *= beta_moment_gauss_jacobi(n[0], rest_n, alpha[0], rest_a)
        n, alpha = n[1:], alpha[1:]
    return out


def pim_p_quadrature(n, theta, Q) -> float:
    return multinomial(n) * dirichlet_moment_quadrature(n, theta * np.asarray(Q, dtype=float))


def two_type_p(n, theta, P) -> float:
    """Neutral two-type p(n); any 2x2 P is parent-independent with a rescaled rate.

    ``theta' = theta (P_12 + P_21)`` and ``Q' = (P_21, P_12) / (P_12 + P_21)``,
    so the stationary law is Beta(theta P_21, theta P_12).
    """
    a = theta * P[1][0]
    b = theta * P[0][1]
    lb = math.lgamma(n[0] + a) + math.lgamma(n[1] + b) - math.lgamma(sum(n) + a + b)
    lb0 = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    return multinomial(n) * math.exp(lb - lb0)


def transition_by_hand(n, theta, P, gamma, p):
    """The one-step law written out from p alone (``p`` maps config -> probability)."""
    d = len(n)
    m = sum(n)
    D = sum(n[r] * abs(gamma[r]) for r in range(d)) + m * (m - 1 + theta)

    def pi(i, s):
        up = list(s)
        up[i] += 1
        base = p(tuple(s)) if sum(s) > 0 else 1.0
        return (s[i] + 1) / (sum(s) + 1) * p(tuple(up)) / base

    out = {}
    for j in range(d):
        if n[j] == 0:
            continue
        lo = list(n)
        lo[j] -= 1
        lo = tuple(lo)
        if n[j] >= 2:
            out[("c", j)] = n[j] * (n[j] - 1) / D / pi(j, lo)
        for i in range(d):
            if P[i][j] > 0:
                out[("m", i, j)] = theta * P[i][j] * n[j] / D * pi(i, lo) / pi(j, lo)
    for j in range(d):
        if gamma[j] != 0:
            out[("b", j)] = m * abs(gamma[j]) / D * pi(j, n)
    return out
