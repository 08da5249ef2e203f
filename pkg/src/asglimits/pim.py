"""Closed forms for neutral parent-independent mutation.

With ``P_ij = Q_j`` and no selection the stationary law of the diffusion is
Dirichlet(theta * Q), which makes the sampling probabilities, the
conditional sampling probabilities and their large-sample constants explicit.
"""
from __future__ import annotations

import math

import numpy as np

from .core import DirectionY, PimParams, log_beta, log_multinomial
from .errors import BoundaryPoint, InvalidConfig


def pim_log_p(n, pp: PimParams) -> float:
    """log p(n) = log multinomial(n) + log B(n + theta Q) - log B(theta Q)."""
    n = np.asarray(n, dtype=float)
    a = pp.alpha
    return log_multinomial(n) + log_beta(n + a) - log_beta(a)


def pim_pi(i: int, n, pp: PimParams) -> float:
    """Probability that the next sampled individual has type ``i`` given ``n``.

    Defined for the empty sample too, where it reduces to ``Q_i``.
    """
    n = np.asarray(n, dtype=float)
    return float((n[i] + pp.theta * pp.Q[i]) / (n.sum() + pp.theta))


def dirichlet_log_density(x, a) -> float:
    """Log Dirichlet(a) density of the first d-1 coordinates of ``x``.

    Raises :class:`BoundaryPoint` where the density is infinite (``x_i = 0``
    with ``a_i < 1``); returns ``-inf`` where it vanishes.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    if x.shape != a.shape:
        raise InvalidConfig(f"point has {x.size} coordinates, parameters have {a.size}")
    zero = x <= 0
    if np.any(zero & (a < 1)):
        raise BoundaryPoint(f"Dirichlet density is infinite at {x.tolist()}")
    if np.any(zero & (a > 1)):
        return -math.inf
    inner = ~zero
    return float(np.sum((a[inner] - 1.0) * np.log(x[inner])) - log_beta(a))


def pim_density(pp: PimParams):
    """The stationary density as a callable on simplex points (linear scale).

    A 2-d array of points is evaluated row by row without boundary checks.
    """

    a = pp.alpha

    def density(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return math.exp(dirichlet_log_density(x, a))
        # batched interior points
        with np.errstate(divide="ignore"):
            logs = np.sum((a - 1.0) * np.log(x), axis=-1) - log_beta(a)
        return np.exp(logs)

    density.label = "dirichlet-closed-form"
    return density


def pim_asymptotic_log_p(n: int, direction: DirectionY, pp: PimParams) -> float:
    """Log of ``n^{1-d} ||y||^{1-d} ptilde(y/||y||)`` with Dirichlet ptilde."""
    if n < 1:
        raise InvalidConfig(f"n must be >= 1, got {n}")
    d = pp.d
    return (
        (1 - d) * math.log(n)
        + (1 - d) * math.log(direction.norm)
        + dirichlet_log_density(direction.unit, pp.alpha)
    )
