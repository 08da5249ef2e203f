"""Wright-Fisher diffusion: stationary sampling and Monte Carlo estimators.

The generator is ``1/2 sum sigma_ij d_i d_j + 1/2 sum mu_i d_i``.  The factor
one half on the drift matches the coalescent time scale (pairs coalesce at
rate one, lineages mutate at rate theta/2), so that for parent-independent
mutation the stationary law is Dirichlet(theta Q).

Two one-step schemes are available.  ``"dirichlet"`` (default) draws
``X' ~ Dirichlet((1/dt - 1) (X + mu(X) dt / 2))``.  It has the Euler
conditional mean and, to first order, the Euler conditional covariance, but
never leaves the simplex.  ``"euler"`` is plain Euler-Maruyama on the first
d-1 coordinates with clamping to ``[eps_b, 1 - eps_b]``; it is strongly
biased when the stationary density is unbounded at a face.

Replicas are grouped in fixed blocks, each with a stream derived from
``(seed, block index)``.  Per-replica arithmetic is elementwise, so an
ensemble does not depend on how blocks are split across workers.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import ModelParams, as_simplex_point, log_multinomial
from .errors import EmptyEnsemble, InvalidParams, NonFiniteState, TooCloseToBoundary


def drift(x, params: ModelParams) -> np.ndarray:
    """``mu_i(x) = theta sum_j x_j P_ji - theta x_i + x_i (gamma_i - sum_j gamma_j x_j)``.

    ``x`` may carry leading batch dimensions.
    """
    x = np.asarray(x, dtype=float)
    return _drift_batch(x, params)


def _drift_batch(x: np.ndarray, params: ModelParams) -> np.ndarray:
    # explicit loops over types keep the arithmetic order fixed per replica
    d = params.d
    theta, P, gamma = params.theta, params.P, params.gamma
    mean_gamma = gamma[0] * x[..., 0]
    for j in range(1, d):
        mean_gamma = mean_gamma + gamma[j] * x[..., j]
    out = np.empty_like(x)
    for i in range(d):
        inflow = P[0, i] * x[..., 0]
        for j in range(1, d):
            inflow = inflow + P[j, i] * x[..., j]
        out[..., i] = theta * inflow - theta * x[..., i] + x[..., i] * (gamma[i] - mean_gamma)
    return out


def diffusion_matrix(x) -> np.ndarray:
    """``sigma_ij(x) = x_i (delta_ij - x_j)``."""
    x = np.asarray(x, dtype=float)
    return np.diag(x) - np.outer(x, x)


def reduced_diffusion_matrix(x) -> np.ndarray:
    """Leading (d-1) x (d-1) block of :func:`diffusion_matrix`."""
    x = np.asarray(x, dtype=float)
    return diffusion_matrix(x)[:-1, :-1]


def _sqrt_block(u: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root of ``diag(u) - u u^T`` for each row of ``u``.

    ``u`` has shape (G, k) with k = d - 1.
    """
    G, k = u.shape
    if k == 1:
        return np.sqrt(np.maximum(u * (1.0 - u), 0.0))[:, :, None]
    if k == 2:
        a = u[:, 0] * (1.0 - u[:, 0])
        c = u[:, 1] * (1.0 - u[:, 1])
        b = -u[:, 0] * u[:, 1]
        s = np.sqrt(np.maximum(a * c - b * b, 0.0))
        t = np.sqrt(np.maximum(a + c + 2.0 * s, 0.0))
        inv_t = np.where(t > 0, 1.0 / np.where(t > 0, t, 1.0), 0.0)
        out = np.empty((G, 2, 2))
        out[:, 0, 0] = (a + s) * inv_t
        out[:, 1, 1] = (c + s) * inv_t
        out[:, 0, 1] = b * inv_t
        out[:, 1, 0] = out[:, 0, 1]
        return out
    S = -u[:, :, None] * u[:, None, :]
    idx = np.arange(k)
    S[:, idx, idx] += u
    w, V = np.linalg.eigh(S)
    return (V * np.sqrt(np.maximum(w, 0.0))[:, None, :]) @ np.swapaxes(V, 1, 2)


SCHEMES = ("dirichlet", "euler")


@dataclass(frozen=True)
class DiffusionConfig:
    """Integration and sampling settings for :func:`stationary_sample`.

    Times are in diffusion time units.  ``replicas * samples_per_replica`` is
    the ensemble size.  ``block_size`` fixes how replicas share random
    streams and therefore changes results; ``chunk_steps`` and ``workers``
    do not.
    """

    dt: float = 1e-3
    burn_in: float = 30.0
    thin: float = 1.0
    eps_b: float = 1e-9
    replicas: int = 100
    samples_per_replica: int = 100
    seed: int = 0
    workers: int = 1
    scheme: str = "dirichlet"
    block_size: int = 100
    chunk_steps: int = 1000
    check_invariants: bool = False
    start: tuple | None = None

    def __post_init__(self):
        if not 0 < self.dt < 1 or self.dt > self.thin:
            raise InvalidParams(f"need 0 < dt <= thin and dt < 1, got dt={self.dt}, thin={self.thin}")
        if self.burn_in < 0 or self.replicas < 1 or self.samples_per_replica < 1:
            raise InvalidParams("burn_in must be >= 0, replicas and samples >= 1")
        if self.scheme not in SCHEMES:
            raise InvalidParams(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.block_size < 1 or self.workers < 1:
            raise InvalidParams("block_size and workers must be >= 1")

    @property
    def thin_steps(self) -> int:
        return max(1, int(round(self.thin / self.dt)))

    @property
    def burn_steps(self) -> int:
        return int(round(self.burn_in / self.dt))


@dataclass(frozen=True)
class StationaryEnsemble:
    """Post burn-in samples, shape ``(replicas, samples_per_replica, d)``."""

    samples: np.ndarray
    replica_ids: np.ndarray
    times: np.ndarray
    config: DiffusionConfig
    params_hash: str
    failed: tuple = field(default=())

    @property
    def d(self) -> int:
        return self.samples.shape[-1]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0] * self.samples.shape[1]

    def flat(self) -> np.ndarray:
        return self.samples.reshape(-1, self.d)


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(block),)))


def _row_sum(x: np.ndarray) -> np.ndarray:
    s = x[:, 0].copy()
    for a in range(1, x.shape[1]):
        s = s + x[:, a]
    return s


class _Blocks:
    """Random streams for a contiguous set of replica blocks."""

    def __init__(self, cfg: DiffusionConfig, blocks):
        self.gens = []
        self.slices = []
        lo = 0
        for b in blocks:
            first = b * cfg.block_size
            size = min(cfg.block_size, cfg.replicas - first)
            self.gens.append(block_rng(cfg.seed, b))
            self.slices.append(slice(lo, lo + size))
            lo += size
        self.size = lo

    def gamma(self, shape: np.ndarray) -> np.ndarray:
        out = np.empty_like(shape)
        for g, sl in zip(self.gens, self.slices):
            out[sl] = g.gamma(shape[sl])
        return out

    def normals(self, K: int, k: int) -> np.ndarray:
        return np.concatenate(
            [g.standard_normal((K, sl.stop - sl.start, k)) for g, sl in zip(self.gens, self.slices)],
            axis=1,
        )


def _dirichlet_step(x, params, cfg, streams, concentration):
    mean = x + 0.5 * cfg.dt * _drift_batch(x, params)
    np.maximum(mean, 0.0, out=mean)
    g = streams.gamma(concentration * mean)
    total = _row_sum(g)
    empty = total <= 0
    if empty.any():
        g[empty] = mean[empty]
        total = _row_sum(g)
    return g / total[:, None]


def _euler_step(x, params, cfg, z):
    k = params.d - 1
    mu = _drift_batch(x, params)
    root = _sqrt_block(x[:, :k])
    head = x[:, :k] + 0.5 * mu[:, :k] * cfg.dt
    sqdt = math.sqrt(cfg.dt)
    for a in range(k):
        incr = root[:, a, 0] * z[:, 0]
        for b in range(1, k):
            incr = incr + root[:, a, b] * z[:, b]
        head[:, a] = head[:, a] + incr * sqdt
    last = 1.0 - _row_sum(head)
    x = np.clip(np.concatenate([head, last[:, None]], axis=1), cfg.eps_b, 1.0 - cfg.eps_b)
    return x / _row_sum(x)[:, None]


def _simulate_blocks(params: ModelParams, cfg: DiffusionConfig, blocks):
    d = params.d
    streams = _Blocks(cfg, blocks)
    G = streams.size
    x = np.empty((G, d))
    x[:] = np.full(d, 1.0 / d) if cfg.start is None else as_simplex_point(cfg.start)
    S = cfg.samples_per_replica
    out = np.empty((G, S, d))
    failed = np.zeros(G, dtype=bool)
    total = cfg.burn_steps + S * cfg.thin_steps
    concentration = 1.0 / cfg.dt - 1.0
    euler = cfg.scheme == "euler"
    step = 0
    while step < total:
        K = min(cfg.chunk_steps, total - step)
        noise = streams.normals(K, d - 1) if euler else None
        for t in range(K):
            if euler:
                x = _euler_step(x, params, cfg, noise[t])
            else:
                x = _dirichlet_step(x, params, cfg, streams, concentration)
            bad = ~np.isfinite(x).all(axis=1)
            if bad.any():
                failed |= bad
                x[bad] = 1.0 / d
            if cfg.check_invariants:
                assert np.all(np.abs(_row_sum(x) - 1.0) < 1e-12), "state left the simplex"
                tang = _row_sum(_drift_batch(x, params))
                assert np.all(np.abs(tang) < 1e-12), "drift left the simplex tangent space"
            step += 1
            done = step - cfg.burn_steps
            if done > 0 and done % cfg.thin_steps == 0:
                out[:, done // cfg.thin_steps - 1] = x
    return out, failed


def stationary_sample(params: ModelParams, cfg: DiffusionConfig | None = None) -> StationaryEnsemble:
    """Run ``cfg.replicas`` independent chains past burn-in and thin them.

    Replicas whose state turns non-finite are dropped and listed in
    ``failed``; if every replica fails :class:`NonFiniteState` is raised.
    """
    cfg = cfg or DiffusionConfig()
    if cfg.scheme == "euler" and not cfg.eps_b < 1.0 / params.d:
        raise InvalidParams(f"eps_b={cfg.eps_b} must be below 1/d")
    n_blocks = -(-cfg.replicas // cfg.block_size)
    parts = [p for p in np.array_split(np.arange(n_blocks), min(cfg.workers, n_blocks)) if p.size]
    if len(parts) == 1:
        results = [_simulate_blocks(params, cfg, parts[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            results = list(pool.map(lambda p: _simulate_blocks(params, cfg, p), parts))
    samples = np.concatenate([r[0] for r in results])
    failed = np.concatenate([r[1] for r in results])
    ids = np.arange(cfg.replicas)
    if failed.all():
        raise NonFiniteState("every replica produced a non-finite state")
    if failed.any():
        warnings.warn(f"{int(failed.sum())} replicas hit non-finite states and were dropped")
    times = cfg.burn_steps * cfg.dt + cfg.thin_steps * cfg.dt * np.arange(1, cfg.samples_per_replica + 1)
    return StationaryEnsemble(
        samples=samples[~failed],
        replica_ids=ids[~failed],
        times=times,
        config=cfg,
        params_hash=params.fingerprint(),
        failed=tuple(int(i) for i in ids[failed]),
    )


# ---------------------------------------------------------------------------
# Monte Carlo estimators

def _jackknife(per_replica: np.ndarray) -> tuple[float, float]:
    R = per_replica.size
    mean = float(per_replica.mean())
    if R < 2:
        return mean, math.inf
    loo = (per_replica.sum() - per_replica) / (R - 1)
    se = math.sqrt((R - 1) / R * np.sum((loo - loo.mean()) ** 2))
    return mean, se


def _moment_per_replica(n, ens: StationaryEnsemble) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore"):
        logx = np.log(ens.samples)
    terms = np.where(n > 0, logx * n, 0.0)
    return np.exp(terms.sum(axis=-1)).mean(axis=1)


def estimate_k(n, ens: StationaryEnsemble) -> tuple[float, float]:
    """Sample mean of ``prod x_i^{n_i}`` with a leave-one-replica-out SE."""
    if ens.samples.size == 0:
        raise EmptyEnsemble("ensemble has no samples")
    n = np.asarray(n, dtype=float)
    if n.sum() == 0:
        return 1.0, 0.0
    return _jackknife(_moment_per_replica(n, ens))


def estimate_log_p(n, ens: StationaryEnsemble) -> tuple[float, float]:
    """Monte Carlo ``log p(n)`` and its (delta-method) standard error."""
    k, se = estimate_k(n, ens)
    if k <= 0:
        return -math.inf, math.inf
    rel = se / k
    if rel > 0.5:
        warnings.warn(f"relative standard error of k{tuple(int(c) for c in n)} is {rel:.0%}")
    return log_multinomial(n) + math.log(k), rel


def estimate_pi(i: int, n, ens: StationaryEnsemble) -> tuple[float, float]:
    """``pi[i|n] = k(n + e_i) / k(n)`` with a jackknife SE of the ratio."""
    if ens.samples.size == 0:
        raise EmptyEnsemble("ensemble has no samples")
    n = np.asarray(n, dtype=float)
    up = n.copy()
    up[i] += 1
    num = _moment_per_replica(up, ens)
    den = _moment_per_replica(n, ens) if n.sum() > 0 else np.ones_like(num)
    R = num.size
    est = float(num.sum() / den.sum())
    if R < 2:
        return est, math.inf
    loo = (num.sum() - num) / (den.sum() - den)
    se = math.sqrt((R - 1) / R * np.sum((loo - loo.mean()) ** 2))
    return est, se


# ---------------------------------------------------------------------------
# stationary density

def _reflections(u: np.ndarray) -> list[np.ndarray]:
    """``u`` and its mirror images across every face of the chart simplex."""
    k = u.shape[1]
    images = [u]
    for a in range(k):
        r = u.copy()
        r[:, a] = -r[:, a]
        images.append(r)
    excess = (u.sum(axis=1, keepdims=True) - 1.0) / k
    images.append(u - 2.0 * excess)
    return images


class DensityEstimate:
    """Reflected Gaussian kernel density estimate on the (d-1)-coordinate chart.

    Calling the object evaluates the estimate at simplex points (last axis of
    length d) without any boundary check; :func:`estimate_density` adds the
    interior-margin guard.
    """

    label = "kde"

    def __init__(self, samples: np.ndarray, bandwidth: float | None = None):
        samples = np.asarray(samples, dtype=float)
        self.d = samples.shape[-1]
        chart = samples.reshape(-1, self.d)[:, :-1]
        N, k = chart.shape
        if N == 0:
            raise EmptyEnsemble("no samples for density estimation")
        if bandwidth is None:
            spread = math.sqrt(float(np.mean(chart.var(axis=0))))
            bandwidth = spread * N ** (-1.0 / (k + 4))
        self.bandwidth = float(bandwidth)
        self.margin = self.bandwidth
        self._images = np.concatenate(_reflections(chart))
        self._n = N
        self._k = k

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        u = np.atleast_2d(x)[:, :-1]
        h = self.bandwidth
        norm = self._n * (2.0 * math.pi * h * h) ** (self._k / 2.0)
        out = np.empty(u.shape[0])
        step = max(1, 2_000_000 // self._images.shape[0])
        for s in range(0, u.shape[0], step):
            diff = u[s : s + step, None, :] - self._images[None, :, :]
            sq = np.einsum("ijk,ijk->ij", diff, diff)
            out[s : s + step] = np.exp(-0.5 * sq / (h * h)).sum(axis=1) / norm
        return float(out[0]) if single else out


def density_estimator(ens: StationaryEnsemble, bandwidth: float | None = None) -> DensityEstimate:
    return DensityEstimate(ens.samples, bandwidth)


def estimate_density(ens: StationaryEnsemble, at, bandwidth: float | None = None) -> float:
    """Kernel estimate of the stationary density at an interior simplex point."""
    x = as_simplex_point(at)
    est = DensityEstimate(ens.samples, bandwidth)
    if np.any(x < est.margin):
        raise TooCloseToBoundary(
            f"{x.tolist()} is within one bandwidth ({est.margin:.3g}) of the boundary"
        )
    return est(x)

