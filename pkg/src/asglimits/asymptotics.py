"""Numerical convergence checks for the large-sample limit laws.

Each check walks a grid of scale parameters ``n``, evaluates a quantity at
the lattice state ``n y^(n)`` and compares it with its limit.  Sampling
probabilities come from a *p source* (closed form, recursion table or Monte
Carlo ensemble); the stationary density ``ptilde`` comes from the Dirichlet
closed form or a kernel estimate.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .chain import BRANCHING, COALESCENCE, MUTATION, transition_distribution
from .core import DirectionY, ModelParams, PimParams, ProbTable, log_beta, log_multinomial
from .dirichlet import sample_dirichlet
from .errors import InfeasibleN, InvalidConfig
from .pim import pim_asymptotic_log_p, pim_log_p

EXACT_TOL = 1e-2
JITTER = 1e-12
MC_MAX_SIZE = 30
PIM_MAX_N = 10**6


def geometric_grid(lo: int, hi: int) -> tuple:
    """``lo, 2 lo, 4 lo, ...`` up to ``hi``."""
    if lo < 1 or hi < lo:
        raise InvalidConfig(f"bad grid {lo}:{hi}")
    out = []
    n = lo
    while n <= hi:
        out.append(n)
        n *= 2
    return tuple(out)


@dataclass(frozen=True)
class ConvergenceReport:
    """Observed values along an n grid against one limit.

    ``verdict`` holds when the final error is within tolerance (relative, or
    absolute ``band`` for Monte Carlo sources, or absolute when the target is
    zero) and the errors are non-increasing over the last three grid points.
    """

    quantity: str
    n_grid: tuple
    observed: tuple
    target: float
    tol: float = EXACT_TOL
    band: float | None = None
    se: tuple | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise InvalidConfig("n grid must be strictly increasing")
        if len(self.observed) != len(self.n_grid):
            raise InvalidConfig("one observation per grid point")

    @property
    def abs_err(self) -> np.ndarray:
        return np.abs(np.asarray(self.observed, dtype=float) - self.target)

    @property
    def rel_err(self) -> np.ndarray:
        if self.target == 0:
            return self.abs_err
        return self.abs_err / abs(self.target)

    @property
    def tail_monotone(self) -> bool:
        tail = self.abs_err[-3:]
        return bool(np.all(np.diff(tail) <= JITTER * max(1.0, abs(self.target))))

    @property
    def final_ok(self) -> bool:
        if self.band is not None:
            return bool(self.abs_err[-1] <= self.band)
        return bool(self.rel_err[-1] <= self.tol)

    @property
    def verdict(self) -> bool:
        return self.final_ok and self.tail_monotone

    def rows(self) -> list[tuple]:
        """``(n, observed, target, abs_err, rel_err)`` per grid point."""
        return [
            (n, float(o), float(self.target), float(a), float(r))
            for n, o, a, r in zip(self.n_grid, self.observed, self.abs_err, self.rel_err)
        ]

    def verdict_json(self) -> str:
        return json.dumps(
            {
                "quantity": self.quantity,
                "verdict": "pass" if self.verdict else "fail",
                "final_rel_err": float(self.rel_err[-1]),
                "tail_monotone": self.tail_monotone,
                "tol": self.tol,
                "band": self.band,
                "provenance": self.provenance,
            },
            sort_keys=True,
        )


# ---------------------------------------------------------------------------
# p sources

class PimSource:
    label = "pim-exact"
    exact = True

    def __init__(self, pp: PimParams):
        self.pp = pp

    def log_p(self, n) -> tuple[float, float]:
        if sum(n) > PIM_MAX_N:
            raise InfeasibleN(f"closed form capped at size {PIM_MAX_N}")
        return pim_log_p(n, self.pp), 0.0


class TableSource:
    label = "recursion-solver"
    exact = True

    def __init__(self, table: ProbTable):
        self.table = table

    def log_p(self, n) -> tuple[float, float]:
        if sum(n) > self.table.max_size:
            raise InfeasibleN(f"size {sum(n)} exceeds table size {self.table.max_size}")
        return self.table[tuple(n)], 0.0


class EnsembleSource:
    """Monte Carlo log p; the second value is the relative standard error."""

    label = "wf-diffusion-mc"
    exact = False

    def __init__(self, ensemble, max_size: int = MC_MAX_SIZE):
        self.ensemble = ensemble
        self.max_size = max_size

    def log_p(self, n) -> tuple[float, float]:
        from .diffusion import estimate_log_p

        if sum(n) > self.max_size:
            raise InfeasibleN(f"Monte Carlo variance too large beyond size {self.max_size}")
        return estimate_log_p(n, self.ensemble)


def p_source(source):
    if isinstance(source, PimParams):
        return PimSource(source)
    if isinstance(source, ProbTable):
        return TableSource(source)
    if hasattr(source, "samples"):
        return EnsembleSource(source)
    if hasattr(source, "log_p"):
        return source
    raise InvalidConfig(f"cannot use {type(source).__name__} as a p source")


def _ptilde_at(ptilde, x) -> float:
    return float(ptilde(np.asarray(x, dtype=float)))


def _label(obj) -> str:
    return getattr(obj, "label", type(obj).__name__)


def _check_direction(direction: DirectionY, params) -> None:
    if direction.d != params.d:
        raise InvalidConfig(f"direction has d={direction.d}, parameters have d={params.d}")


# ---------------------------------------------------------------------------
# checks

def check_theorem_p(direction: DirectionY, params, n_grid, p_src, ptilde, tol: float = EXACT_TOL):
    """``n^{d-1} p(n y^(n))`` against ``||y||^{1-d} ptilde(y/||y||)``."""
    _check_direction(direction, params)
    src = p_source(p_src)
    d = direction.d
    obs, ses = [], []
    for n in n_grid:
        lp, rel = src.log_p(direction.lattice(n))
        val = math.exp((d - 1) * math.log(n) + lp)
        obs.append(val)
        ses.append(val * rel)
    target = direction.norm ** (1 - d) * _ptilde_at(ptilde, direction.unit)
    band = None if src.exact else 3.0 * ses[-1]
    return ConvergenceReport(
        "n^(d-1) p(n y)", tuple(n_grid), tuple(obs), target, tol, band,
        tuple(ses) if not src.exact else None,
        {"p": src.label, "ptilde": _label(ptilde)},
    )


@dataclass(frozen=True)
class KOverBReport:
    direct: ConvergenceReport
    dirichlet: ConvergenceReport

    @property
    def agree(self) -> bool:
        """Routes agree within three combined standard errors at every grid point."""
        a = np.asarray(self.direct.observed)
        b = np.asarray(self.dirichlet.observed)
        sa = np.asarray(self.direct.se if self.direct.se is not None else np.zeros_like(a))
        sb = np.asarray(self.dirichlet.se)
        return bool(np.all(np.abs(a - b) <= 3.0 * np.hypot(sa, sb) + 1e-12 * np.abs(a)))

    @property
    def verdict(self) -> bool:
        return self.direct.verdict and self.agree


def check_k_over_B(
    direction: DirectionY, params, n_grid, p_src, ptilde, draws: int = 100_000, seed: int = 0,
    tol: float = EXACT_TOL,
) -> KOverBReport:
    """``k(n y^(n)) / B(n y^(n) + 1)`` two ways, against ``ptilde(y/||y||)``.

    Route (a) divides the sampling probability by its multinomial factor and
    by the Beta function; route (b) averages ``ptilde`` over Dirichlet(n y^(n) + 1)
    draws, which is the same quantity written as an expectation.
    """
    _check_direction(direction, params)
    src = p_source(p_src)
    target = _ptilde_at(ptilde, direction.unit)
    a_obs, a_se, b_obs, b_se = [], [], [], []
    for idx, n in enumerate(n_grid):
        counts = direction.lattice(n)
        c = np.asarray(counts, dtype=float)
        lp, rel = src.log_p(counts)
        val = math.exp(lp - log_multinomial(counts) - log_beta(c + 1.0))
        a_obs.append(val)
        a_se.append(val * rel)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(idx,)))
        D = sample_dirichlet(c + 1.0, rng, size=draws)
        vals = np.asarray(ptilde(D), dtype=float)
        b_obs.append(float(vals.mean()))
        b_se.append(float(vals.std(ddof=1) / math.sqrt(draws)))
    prov = {"p": src.label, "ptilde": _label(ptilde)}
    grid = tuple(n_grid)
    direct = ConvergenceReport(
        "k/B (direct)", grid, tuple(a_obs), target, tol,
        None if src.exact else 3.0 * a_se[-1], tuple(a_se), prov,
    )
    dirichlet = ConvergenceReport(
        "k/B (Dirichlet expectation)", grid, tuple(b_obs), target, tol, 3.0 * b_se[-1] + tol * abs(target),
        tuple(b_se), prov,
    )
    return KOverBReport(direct, dirichlet)


def check_pi_limit(i: int, direction: DirectionY, params, n_grid, pi, tol: float = EXACT_TOL):
    """``pi[i | n y^(n)]`` against ``y_i / ||y||``."""
    _check_direction(direction, params)
    obs = [float(pi(i, direction.lattice(n))) for n in n_grid]
    return ConvergenceReport(
        f"pi[{i + 1}|n y]", tuple(n_grid), tuple(obs), float(direction.unit[i]), tol,
        provenance={"pi": _label(pi)},
    )


def check_transition_limits(
    direction: DirectionY, params: ModelParams, n_grid, pi, j: int = 0, i: int | None = None,
    tol: float = EXACT_TOL,
) -> dict:
    """Scaled one-step probabilities at ``n y^(n)`` for the three jump families.

    Returns reports keyed ``coalescence`` (``rho(e_j)``), ``mutation``
    (``n rho(e_j - e_i)``) and ``branching`` (``n rho(-e_j)``).
    """
    _check_direction(direction, params)
    d = params.d
    if i is None:
        i = (j + 1) % d
    y = direction.y
    norm = direction.norm
    targets = {
        COALESCENCE: y[j] / norm,
        MUTATION: params.theta * params.P[i, j] * y[i] / norm**2,
        BRANCHING: abs(params.gamma[j]) * y[j] / norm**2,
    }
    obs = {k: [] for k in targets}
    for n in n_grid:
        dist = transition_distribution(direction.lattice(n), params, pi)
        co = dist.entry(COALESCENCE, j)
        mu = dist.entry(MUTATION, j, i)
        br = dist.entry(BRANCHING, j)
        obs[COALESCENCE].append(co.prob if co else 0.0)
        obs[MUTATION].append(n * mu.prob if mu else 0.0)
        obs[BRANCHING].append(n * br.prob if br else 0.0)
    names = {
        COALESCENCE: f"rho(e_{j + 1})",
        MUTATION: f"n rho(e_{j + 1}-e_{i + 1})",
        BRANCHING: f"n rho(-e_{j + 1})",
    }
    return {
        k: ConvergenceReport(names[k], tuple(n_grid), tuple(obs[k]), float(targets[k]), tol,
                             provenance={"pi": _label(pi)})
        for k in targets
    }


# ---------------------------------------------------------------------------
# closed-form asymptotic stages

def _stirling_log_gamma(z):
    """``log Gamma(z)`` by the leading Stirling term without the sqrt(2 pi) factor."""
    z = np.asarray(z, dtype=float)
    return (z - 0.5) * np.log(z) - z


def stirling_chain_report(n_grid, pp: PimParams, direction: DirectionY) -> list[dict]:
    """Per n: log p exactly and through the three successive approximations.

    Stage 1 replaces every Gamma function by ``z^{z-1/2} e^{-z}`` (the
    sqrt(2 pi) factors cancel).  Stage 2 is the product of
    ``(1 + (1-theta)/(M+theta))^{M+1/2} (M+theta)^{1-theta} e^{theta-1}`` and
    the per-type factors
    ``(1 + (theta Q_i - 1)/(c_i + theta Q_i))^{c_i+1/2} (c_i + theta Q_i)^{theta Q_i - 1} e^{1 - theta Q_i}``.
    The size factor is an exact rewrite of stage 1; the per-type factor
    agrees with it only to O(1/c_i), so every ratio tends to one at rate 1/n.
    Stage 3 is ``(n||y||)^{1-d} ptilde(y/||y||)``.
    """
    if direction.d != pp.d:
        raise InvalidConfig("direction and parameters disagree on d")
    theta = pp.theta
    tq = pp.alpha
    lb = log_beta(tq)
    rows = []
    for n in n_grid:
        c = np.asarray(direction.lattice(n), dtype=float)
        M = c.sum()
        exact = pim_log_p(c, pp)
        s1 = (
            -lb
            + _stirling_log_gamma(M + 1) - _stirling_log_gamma(M + theta)
            + float(np.sum(_stirling_log_gamma(c + tq) - _stirling_log_gamma(c + 1)))
        )
        s2 = (
            -lb
            + (M + 0.5) * math.log1p((1 - theta) / (M + theta))
            + (1 - theta) * math.log(M + theta) + theta - 1
            + float(np.sum(
                (c + 0.5) * np.log1p((tq - 1) / (c + tq))
                + (tq - 1) * np.log(c + tq) + 1 - tq
            ))
        )
        s3 = pim_asymptotic_log_p(n, direction, pp)
        rows.append({
            "n": n,
            "log_p": exact,
            "stage1": float(s1),
            "stage2": float(s2),
            "stage3": s3,
            "ratio_stage1_exact": math.exp(s1 - exact),
            "ratio_stage2_stage1": math.exp(s2 - s1),
            "ratio_stage3_stage2": math.exp(s3 - s2),
        })
    return rows


# ---------------------------------------------------------------------------
# auxiliary checks

def degree_slope(p_src, direction: DirectionY, n_grid) -> float:
    """Least-squares slope of ``log p(n y^(n))`` against ``log n``."""
    src = p_source(p_src)
    x = np.log(np.asarray(n_grid, dtype=float))
    y = np.array([src.log_p(direction.lattice(n))[0] for n in n_grid])
    return float(np.polyfit(x, y, 1)[0])


@dataclass(frozen=True)
class BandwidthCheck:
    estimate: float
    halved: float
    bandwidth: float

    @property
    def shift(self) -> float:
        return abs(self.halved - self.estimate) / abs(self.estimate)

    @property
    def stable(self) -> bool:
        return self.shift < 0.05


def kde_bandwidth_check(ensemble, at, bandwidth: float | None = None) -> BandwidthCheck:
    """Kernel estimate at ``at`` and again with half the bandwidth."""
    from .diffusion import DensityEstimate

    est = DensityEstimate(ensemble.samples, bandwidth)
    half = DensityEstimate(ensemble.samples, est.bandwidth / 2.0)
    x = np.asarray(at, dtype=float)
    return BandwidthCheck(float(est(x)), float(half(x)), est.bandwidth)

