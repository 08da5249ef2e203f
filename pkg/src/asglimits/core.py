"""Shared domain types, lattice enumeration and log-space primitives.

Sample configurations are plain tuples of non-negative ints.  Everything
probabilistic is carried as a natural log; linear values only appear at the
API/CLI edges.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import (
    BadDimension,
    InvalidConfig,
    InvalidParams,
    NonStochasticRow,
    OutOfTable,
    PositiveGamma,
    ReducibleMatrix,
)

STOCHASTIC_TOL = 1e-12
PIM_TOL = 1e-12
SIMPLEX_TOL = 1e-12

Config = tuple


# ---------------------------------------------------------------------------
# sample configurations and the lattice

def as_config(counts, d: int | None = None, allow_zero: bool = False) -> tuple:
    """Validate ``counts`` as a sample configuration and return it as a tuple."""
    try:
        n = tuple(int(c) for c in counts)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"counts must be integers, got {counts!r}") from exc
    if any(int(c) != c for c in np.asarray(counts, dtype=float)):
        raise InvalidConfig(f"counts must be integers, got {counts!r}")
    if d is not None and len(n) != d:
        raise InvalidConfig(f"expected {d} counts, got {len(n)}")
    if any(c < 0 for c in n):
        raise InvalidConfig(f"counts must be non-negative, got {n}")
    if not allow_zero and sum(n) == 0:
        raise InvalidConfig("the zero configuration is not a sample")
    return n


def size(n: Sequence[int]) -> int:
    return int(sum(n))


def unit(d: int, i: int) -> tuple:
    e = [0] * d
    e[i] = 1
    return tuple(e)


def shift(n: Sequence[int], plus: int | None = None, minus: int | None = None) -> tuple:
    """Return ``n + e_plus - e_minus`` (either index may be omitted)."""
    m = list(n)
    if plus is not None:
        m[plus] += 1
    if minus is not None:
        m[minus] -= 1
    return tuple(m)


def _compositions_colex(m: int, d: int):
    # colex == lexicographic order of the reversed tuple
    if d == 1:
        yield (m,)
        return
    for last in range(m + 1):
        for head in _compositions_colex(m - last, d - 1):
            yield head + (last,)


def enumerate_configs(d: int, m: int) -> list[tuple]:
    """All compositions of ``m`` into ``d`` non-negative parts, colex order.

    Colexicographic means the last coordinate is the most significant one,
    so for ``d=2, m=2`` the order is ``(2,0), (1,1), (0,2)``.
    """
    if d < 1 or m < 1:
        raise InvalidConfig(f"need d >= 1 and m >= 1, got d={d}, m={m}")
    return list(_compositions_colex(m, d))


def count_configs(d: int, m: int) -> int:
    return math.comb(m + d - 1, d - 1)


def config_keys(configs: np.ndarray, base: int) -> np.ndarray:
    """Integer keys that sort in colex order within one size level."""
    configs = np.asarray(configs, dtype=np.int64)
    weights = base ** np.arange(configs.shape[-1], dtype=np.int64)
    return configs @ weights


# ---------------------------------------------------------------------------
# log-space numerics

def log_multinomial(n: Sequence[int]) -> float:
    """``log(|n|! / prod n_i!)``."""
    n = np.asarray(n, dtype=float)
    return float(gammaln(n.sum() + 1.0) - gammaln(n + 1.0).sum())


def log_beta(a) -> float:
    """Log of the multivariate Beta function ``prod Gamma(a_i) / Gamma(sum a)``."""
    a = np.asarray(a, dtype=float)
    return float(gammaln(a).sum() - gammaln(a.sum()))


def logsumexp(values) -> float:
    values = np.asarray(values, dtype=float)
    top = values.max()
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.exp(values - top).sum()))


# ---------------------------------------------------------------------------
# model parameters

def _reachability_closure(adj: np.ndarray) -> np.ndarray:
    d = adj.shape[0]
    reach = adj.astype(bool) | np.eye(d, dtype=bool)
    for k in range(d):  # Warshall
        reach = reach | (reach[:, [k]] & reach[[k], :])
    return reach


def is_irreducible(P: np.ndarray) -> bool:
    return bool(_reachability_closure(np.asarray(P) > 0).all())


@dataclass(frozen=True)
class ModelParams:
    """Mutation rate ``theta``, mutation matrix ``P`` and selection ``gamma``.

    Construct through :func:`validate` (or ``ModelParams.create``) to get
    every invariant checked; the raw constructor trusts its inputs.
    """

    theta: float
    P: np.ndarray
    gamma: np.ndarray
    d: int = field(init=False)
    branching_bound: float = field(init=False)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        gamma = np.array(self.gamma, dtype=float)
        P.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "d", int(P.shape[0]))
        object.__setattr__(
            self, "branching_bound", float(gamma.max() - gamma.min()) if gamma.size else 0.0
        )

    @classmethod
    def create(cls, theta, P, gamma=None) -> "ModelParams":
        P = np.asarray(P, dtype=float)
        if gamma is None:
            gamma = np.zeros(P.shape[0] if P.ndim == 2 else 0)
        return validate(theta, P, gamma)

    @property
    def neutral(self) -> bool:
        return bool(np.all(self.gamma == 0))

    @property
    def is_pim(self) -> bool:
        """All rows of P equal (parent independent mutation)."""
        return bool(np.all(np.abs(self.P - self.P[0]) <= PIM_TOL))

    def stationary_distribution(self) -> np.ndarray:
        """Invariant probability vector of P."""
        A = np.eye(self.d) - self.P.T
        A[-1, :] = 1.0
        b = np.zeros(self.d)
        b[-1] = 1.0
        return np.linalg.solve(A, b)

    def pim_params(self) -> "PimParams":
        if not (self.is_pim and self.neutral):
            raise InvalidParams("parameters are not neutral parent-independent mutation")
        return PimParams(self.theta, self.P[0].copy())

    def permuted(self, perm: Sequence[int]) -> "ModelParams":
        perm = list(perm)
        return ModelParams(self.theta, self.P[np.ix_(perm, perm)], self.gamma[perm])

    def fingerprint(self) -> str:
        """Short stable hash of the parameters (17 significant digits)."""
        text = ";".join(
            [str(self.d), f"{self.theta:.17g}"]
            + [f"{v:.17g}" for v in self.P.ravel()]
            + [f"{v:.17g}" for v in self.gamma]
        )
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (
            self.theta == other.theta
            and np.array_equal(self.P, other.P)
            and np.array_equal(self.gamma, other.gamma)
        )

    def __hash__(self):
        return hash(self.fingerprint())


def validate(theta, P, gamma) -> ModelParams:
    """Check all parameter constraints, reporting every violation found."""
    problems: list[InvalidParams] = []
    P = np.asarray(P, dtype=float)
    gamma = np.asarray(gamma, dtype=float).ravel()

    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        problems.append(BadDimension(f"P must be square, got shape {P.shape}"))
    elif P.shape[0] < 2:
        problems.append(BadDimension(f"need at least 2 types, got d={P.shape[0]}"))
    elif gamma.shape != (P.shape[0],):
        problems.append(BadDimension(f"gamma has {gamma.size} entries, P has {P.shape[0]} rows"))
    if not (np.isfinite(theta) and theta > 0):
        problems.append(BadDimension(f"theta must be positive and finite, got {theta}"))

    square = P.ndim == 2 and P.shape[0] == P.shape[1] and P.shape[0] >= 1
    if square:
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            problems.append(NonStochasticRow("P has negative or non-finite entries"))
        bad_rows = np.flatnonzero(np.abs(P.sum(axis=1) - 1.0) > STOCHASTIC_TOL)
        if bad_rows.size:
            problems.append(NonStochasticRow(f"rows {bad_rows.tolist()} of P do not sum to 1"))
        if P.shape[0] >= 2 and not is_irreducible(P):
            problems.append(ReducibleMatrix("P is reducible"))
    if np.any(gamma > 0) or not np.all(np.isfinite(gamma)):
        problems.append(PositiveGamma(f"selection parameters must be <= 0, got {gamma.tolist()}"))

    if len(problems) == 1:
        raise problems[0]
    if problems:
        raise InvalidParams("invalid model parameters", problems)
    return ModelParams(theta, P, gamma)


@dataclass(frozen=True)
class PimParams:
    """Neutral parent-independent mutation: ``P_ij = Q_j``."""

    theta: float
    Q: np.ndarray

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        if not (np.isfinite(self.theta) and self.theta > 0):
            raise InvalidParams(f"theta must be positive, got {self.theta}")
        if Q.ndim != 1 or Q.size < 2:
            raise BadDimension("Q must be a vector with at least 2 entries")
        if np.any(Q <= 0) or abs(Q.sum() - 1.0) > STOCHASTIC_TOL:
            raise NonStochasticRow(f"Q must be strictly positive and sum to 1, got {Q.tolist()}")
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def d(self) -> int:
        return self.Q.size

    @property
    def alpha(self) -> np.ndarray:
        return self.theta * self.Q

    def model_params(self) -> ModelParams:
        return ModelParams(self.theta, np.tile(self.Q, (self.d, 1)), np.zeros(self.d))


# ---------------------------------------------------------------------------
# simplex points and directions

def as_simplex_point(x, tol: float = SIMPLEX_TOL) -> np.ndarray:
    x = np.array(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise InvalidConfig("a simplex point is a 1-d vector")
    if np.any(x < -tol) or np.any(x > 1 + tol) or abs(x.sum() - 1.0) > tol:
        raise InvalidConfig(f"{x.tolist()} is not on the probability simplex")
    return x


def is_interior(x, eps: float) -> bool:
    return bool(np.all(np.asarray(x) >= eps))


def complete_chart_point(u) -> np.ndarray:
    """Append the implied last coordinate ``1 - sum(u)`` to a chart point."""
    u = np.asarray(u, dtype=float)
    return np.concatenate([u, [1.0 - u.sum()]])


def ceil_rule(n: int, y: np.ndarray) -> tuple:
    # absorbs float noise such as 3000 * (1/3) = 1000.0000000000001
    scaled = n * y
    return tuple(int(v) for v in np.ceil(scaled - 1e-9 * np.maximum(1.0, scaled)))


@dataclass(frozen=True)
class DirectionY:
    """A positive direction ``y`` with a lattice sequence ``n * y^(n)``.

    The default sequence rounds each coordinate of ``n * y`` up, so
    ``y^(n) -> y``.  Pass ``rule`` to override; it maps ``(n, y)`` to the
    integer counts ``n * y^(n)``.
    """

    y: np.ndarray
    rule: Callable[[int, np.ndarray], tuple] | None = None

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        if y.ndim != 1 or y.size < 2:
            raise InvalidConfig("direction must have at least 2 coordinates")
        if np.any(~np.isfinite(y)) or np.any(y <= 0):
            raise InvalidConfig(f"direction must be strictly positive, got {y.tolist()}")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def d(self) -> int:
        return self.y.size

    @property
    def norm(self) -> float:
        return float(self.y.sum())

    @property
    def unit(self) -> np.ndarray:
        """``y / ||y||``, a point of the open simplex."""
        return self.y / self.norm

    def lattice(self, n: int) -> tuple:
        """The sample configuration ``n * y^(n)``."""
        if n < 1:
            raise InvalidConfig(f"n must be >= 1, got {n}")
        rule = self.rule or ceil_rule
        return as_config(rule(n, self.y), d=self.d)

    def y_n(self, n: int) -> np.ndarray:
        return np.asarray(self.lattice(n), dtype=float) / n


# ---------------------------------------------------------------------------
# sampling-probability tables

class ProbTable:
    """Log sampling probabilities for every configuration with ``1 <= |n| <= N``.

    Configurations are stored level by level (one level per sample size), each
    level in colex order.  Lookup is ``table[n]`` (log p) or ``table.p(n)``.
    """

    def __init__(self, d: int, max_size: int, log_p, meta: dict | None = None):
        self.d = int(d)
        self.max_size = int(max_size)
        self.base = self.max_size + 2
        self.offsets = [0]
        for m in range(1, self.max_size + 1):
            self.offsets.append(self.offsets[-1] + count_configs(self.d, m))
        log_p = np.array(log_p, dtype=float)
        if log_p.shape != (self.offsets[-1],):
            raise ValueError(f"expected {self.offsets[-1]} entries, got {log_p.shape}")
        log_p.setflags(write=False)
        self.log_p = log_p
        self.meta = dict(meta or {})
        self._levels = {}

    @property
    def N(self) -> int:
        return self.max_size

    def __len__(self):
        return self.log_p.size

    def level(self, m: int) -> np.ndarray:
        """Configurations of size ``m`` as an ``(L, d)`` int array (colex)."""
        if m not in self._levels:
            arr = np.array(enumerate_configs(self.d, m), dtype=np.int64)
            arr.setflags(write=False)
            self._levels[m] = arr
        return self._levels[m]

    def level_slice(self, m: int) -> slice:
        return slice(self.offsets[m - 1], self.offsets[m])

    def configs(self) -> np.ndarray:
        return np.concatenate([self.level(m) for m in range(1, self.max_size + 1)])

    def index(self, n) -> int:
        n = tuple(n)
        m = sum(n)
        if len(n) != self.d or m < 1 or m > self.max_size or min(n) < 0:
            raise OutOfTable(f"{n} is outside a table of max size {self.max_size}")
        keys = config_keys(self.level(m), self.base)
        pos = int(np.searchsorted(keys, config_keys(np.array(n), self.base)))
        return self.offsets[m - 1] + pos

    def indices(self, configs: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`index` for configurations all of one size."""
        configs = np.asarray(configs, dtype=np.int64)
        m = int(configs[0].sum())
        keys = config_keys(self.level(m), self.base)
        return self.offsets[m - 1] + np.searchsorted(keys, config_keys(configs, self.base))

    def __contains__(self, n) -> bool:
        n = tuple(n)
        return len(n) == self.d and min(n) >= 0 and 1 <= sum(n) <= self.max_size

    def __getitem__(self, n) -> float:
        return float(self.log_p[self.index(n)])

    def p(self, n) -> float:
        return math.exp(self[n])

    def level_sums(self) -> np.ndarray:
        """``sum_{|n|=m} p(n)`` for ``m = 1..N``."""
        return np.array(
            [np.exp(self.log_p[self.level_slice(m)]).sum() for m in range(1, self.max_size + 1)]
        )

    def truncated(self, max_size: int) -> "ProbTable":
        return ProbTable(self.d, max_size, self.log_p[: self.offsets[max_size]], self.meta)
