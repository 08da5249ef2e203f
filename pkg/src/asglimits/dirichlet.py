"""Dirichlet local limit: Gamma sampling, the Gaussian limit and sup norms.

For a sequence ``alpha^(n)`` with ``alpha^(n)/n -> alpha``, the rescaled
variable ``sqrt(n) (D^(n) - alpha^(n)/||alpha^(n)||)`` with
``D^(n) ~ Dirichlet(alpha^(n))`` has density

    phi_n(u) = n^{-(d-1)/2} f_D(u / sqrt(n) + alpha^(n)/||alpha^(n)||)

on the first d-1 coordinates, converging uniformly to the centred normal
density with covariance ``Sigma_ij = alpha_i / ||alpha||^3 (delta_ij ||alpha|| - alpha_j)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DirectionY, as_simplex_point, log_beta
from .diffusion import reduced_diffusion_matrix
from .errors import InvalidConfig, ModeOnBoundary, NonPositiveAlpha, SingularCovariance

RULES = ("plus-one", "linear")


def _positive(alpha, what="alpha") -> np.ndarray:
    a = np.asarray(alpha, dtype=float)
    if a.ndim != 1 or a.size < 2:
        raise InvalidConfig(f"{what} must be a vector of length >= 2")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise NonPositiveAlpha(f"{what} must be strictly positive, got {a.tolist()}")
    return a


@dataclass(frozen=True)
class AlphaSequence:
    """``n -> alpha^(n)``.

    ``"plus-one"`` uses ``alpha^(n) = n y^(n) + 1`` with the lattice rounding
    of :class:`DirectionY`; ``"linear"`` uses ``alpha^(n) = n alpha``.  In
    both cases the limit of ``alpha^(n)/n`` is ``limit``.
    """

    limit: tuple
    rule: str = "plus-one"

    def __post_init__(self):
        a = _positive(self.limit)
        object.__setattr__(self, "limit", tuple(float(v) for v in a))
        if self.rule not in RULES:
            raise InvalidConfig(f"unknown alpha rule {self.rule!r}; choose from {RULES}")

    @property
    def d(self) -> int:
        return len(self.limit)

    @property
    def alpha(self) -> np.ndarray:
        return np.array(self.limit)

    def __call__(self, n: int) -> np.ndarray:
        if n < 1:
            raise InvalidConfig(f"n must be >= 1, got {n}")
        if self.rule == "linear":
            return n * self.alpha
        return np.array(DirectionY(self.limit).lattice(n), dtype=float) + 1.0

    def center(self, n: int) -> np.ndarray:
        a = self(n)
        return a / a.sum()


# ---------------------------------------------------------------------------
# sampling

def normalize_gamma(g) -> np.ndarray:
    """``G / ||G||`` along the last axis."""
    g = np.asarray(g, dtype=float)
    return g / g.sum(axis=-1, keepdims=True)


def sample_dirichlet(alpha, rng: np.random.Generator, size: int | None = None, beta: float = 1.0):
    """Dirichlet draws as normalised independent Gamma(alpha_i, rate beta) draws."""
    a = _positive(alpha)
    if not beta > 0:
        raise NonPositiveAlpha(f"rate must be positive, got {beta}")
    shape = a.shape if size is None else (size,) + a.shape
    return normalize_gamma(rng.gamma(a, 1.0 / beta, size=shape))


# ---------------------------------------------------------------------------
# Gaussian limit

@dataclass(frozen=True)
class GaussianLimit:
    alpha: np.ndarray
    sigma: np.ndarray
    reduced: np.ndarray

    @property
    def d(self) -> int:
        return self.alpha.size

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.reduced))


def clt_covariance(alpha) -> GaussianLimit:
    a = _positive(alpha)
    s = a.sum()
    sigma = (a[:, None] / s**3) * (np.eye(a.size) * s - a[None, :])
    return GaussianLimit(alpha=a, sigma=sigma, reduced=sigma[:-1, :-1].copy())


def _chol(lim: GaussianLimit) -> np.ndarray:
    try:
        return np.linalg.cholesky(lim.reduced)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("reduced covariance is not positive definite") from exc


def gaussian_density(u, lim: GaussianLimit):
    """Centred normal density with covariance ``Sigma_{d-1}``; ``u`` may be batched."""
    L = _chol(lim)
    u = np.asarray(u, dtype=float)
    k = lim.d - 1
    flat = u.reshape(-1, k)
    z = np.linalg.solve(L, flat.T)
    log_det = 2.0 * np.sum(np.log(np.diag(L)))
    out = np.exp(-0.5 * np.sum(z * z, axis=0) - 0.5 * (k * math.log(2 * math.pi) + log_det))
    return float(out[0]) if u.ndim == 1 else out.reshape(u.shape[:-1])


def gaussian_sup(lim: GaussianLimit) -> float:
    L = _chol(lim)
    k = lim.d - 1
    return math.exp(-0.5 * k * math.log(2 * math.pi) - np.sum(np.log(np.diag(L))))


# ---------------------------------------------------------------------------
# rescaled Dirichlet densities

def _log_dirichlet_chart(x_head: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Log Dirichlet(a) density at chart points (rows of first d-1 coords); -inf outside."""
    last = 1.0 - x_head.sum(axis=-1)
    x = np.concatenate([x_head, last[..., None]], axis=-1)
    inside = np.all(x > 0, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(x > 0, (a - 1.0) * np.log(np.where(x > 0, x, 1.0)), 0.0)
    out = terms.sum(axis=-1) - log_beta(a)
    return np.where(inside, out, -np.inf)


def phi_n_density(u, n: int, seq: AlphaSequence):
    """``phi_n(u)``; zero outside the shifted and scaled simplex."""
    u = np.asarray(u, dtype=float)
    a = seq(n)
    c = a / a.sum()
    x_head = u / math.sqrt(n) + c[:-1]
    k = seq.d - 1
    out = np.exp(_log_dirichlet_chart(x_head.reshape(-1, k), a) - 0.5 * k * math.log(n))
    return float(out[0]) if u.ndim == 1 else out.reshape(u.shape[:-1])


def mode(n: int, seq: AlphaSequence) -> np.ndarray:
    """``sqrt(n) ((alpha^(n) - 1)/(||alpha^(n)|| - d) - alpha^(n)/||alpha^(n)||)``, first d-1 coords."""
    a = seq(n)
    if np.any(a <= 1):
        raise ModeOnBoundary(f"alpha^({n}) = {a.tolist()} has a component <= 1")
    m = math.sqrt(n) * ((a - 1.0) / (a.sum() - a.size) - a / a.sum())
    return m[:-1]


def phi_n_sup(n: int, seq: AlphaSequence) -> float:
    """Closed-form ``||phi_n||_inf``, attained at :func:`mode`."""
    a = seq(n)
    if np.any(a <= 1):
        raise ModeOnBoundary(f"alpha^({n}) = {a.tolist()} has a component <= 1")
    d = a.size
    log_val = (
        -0.5 * (d - 1) * math.log(n)
        - log_beta(a)
        + float(np.sum((a - 1.0) * np.log((a - 1.0) / (a.sum() - d))))
    )
    return math.exp(log_val)


def sup_norm_limit(alpha) -> float:
    """``((2 pi)^{d-1} prod(alpha_i/||alpha||) ||alpha||^{-(d-1)})^{-1/2}``."""
    a = _positive(alpha)
    s = a.sum()
    k = a.size - 1
    return (((2 * math.pi) ** k) * float(np.prod(a / s)) * s ** (-k)) ** -0.5


def sup_norm_grid(lim: GaussianLimit, spacing: float = 0.05, extent: float = 6.0) -> np.ndarray:
    """Tensor grid of shape (points, d-1): step ``spacing * min std``, half-width ``extent`` std per axis."""
    std = lim.std
    h = spacing * std.min()
    axes = [np.arange(-extent * s, extent * s + 0.5 * h, h) for s in std]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def sup_norm_gap(n: int, seq: AlphaSequence, grid: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """``max |phi_n - phi|`` over ``grid`` and the grid point attaining it."""
    lim = clt_covariance(seq.alpha)
    if grid is None:
        grid = sup_norm_grid(lim)
    diff = np.abs(phi_n_density(grid, n, seq) - gaussian_density(grid, lim))
    k = int(np.argmax(diff))
    return float(diff[k]), grid[k].copy()


# ---------------------------------------------------------------------------
# diffusion-matrix determinant

def check_determinant_identity(x) -> tuple[float, float]:
    """``(det sigma_{d-1}(x), prod_i x_i)``."""
    x = as_simplex_point(x)
    lhs = float(np.linalg.det(reduced_diffusion_matrix(x)))
    return lhs, float(np.prod(x))

