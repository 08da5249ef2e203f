"""Exact sampling probabilities from the jump-chain normalisation identity.

Requiring the backward transition probabilities out of ``n`` to sum to one,
and writing every conditional sampling probability as a ratio of sampling
probabilities, gives for ``|n| = m >= 1``::

    D(n) p(n) = m * sum_j (n_j - 1) p(n - e_j)
              + theta * sum_{i,j: n_j >= 1} P_ij (n_i + 1 - [i == j]) p(n - e_j + e_i)
              + m / (m + 1) * sum_j |gamma_j| (n_j + 1) p(n + e_j)

    D(n) = sum_r n_r |gamma_r| + m (m - 1 + theta)

The system is homogeneous; the scale is fixed by ``sum_i p(e_i) = 1``, which
replaces the (redundant under neutrality) size-1 equation for ``e_d``.
Without selection the last term vanishes and the system is block lower
triangular in sample size, so levels are solved one after another.  With
selection the upward coupling is truncated at ``n_max`` and the top level is
closed by a rule (see :class:`TruncationPolicy`).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import ModelParams, ProbTable, count_configs, shift
from .errors import (
    DimensionTooLarge,
    InvalidParams,
    NonConvergedTruncation,
    OutOfTable,
    SingularSystem,
)

log = logging.getLogger(__name__)

MAX_LEVEL_SIZE = 100_000
MAX_JOINT_SIZE = 400_000
NEUTRAL_RESIDUAL = 1e-12
SELECTION_RESIDUAL = 1e-10

CLOSURES = ("drop-branching-above-N_max", "pim-proxy-above-N_max")


@dataclass(frozen=True)
class TruncationPolicy:
    """How the selection system is cut off.

    ``n_max`` is the largest sample size kept as an unknown.  At that level the
    terms pointing to size ``n_max + 1`` are either dropped, or closed with a
    parent-independent proxy ``pi[j|n] ~ (n_j + theta q_j) / (|n| + theta)``
    where ``q`` is the invariant vector of P.  ``tol``, when given, is the
    largest accepted per-state truncation error estimate.
    """

    n_max: int
    closure: str = "pim-proxy-above-N_max"
    tol: float | None = None

    def __post_init__(self):
        aliases = {"drop": CLOSURES[0], "pim-proxy": CLOSURES[1]}
        object.__setattr__(self, "closure", aliases.get(self.closure, self.closure))
        if self.closure not in CLOSURES:
            raise InvalidParams(f"unknown closure rule {self.closure!r}")
        if self.n_max < 2:
            raise InvalidParams("n_max must be at least 2")

    @classmethod
    def default(cls, N: int) -> "TruncationPolicy":
        return cls(max(2 * N, N + 20))

    @property
    def short_name(self) -> str:
        return "drop" if self.closure == CLOSURES[0] else "pim-proxy"


@dataclass(frozen=True)
class TruncatedSolution:
    table: ProbTable
    error: np.ndarray
    n_max: int

    @property
    def max_error(self) -> float:
        return float(np.max(self.error))


# ---------------------------------------------------------------------------
# assembly

def _level_blocks(table: ProbTable, m: int, params: ModelParams, upward: bool):
    """Coefficient triplets for the equations of level ``m``.

    Returns ``(diag, same, lower, upper)`` where ``same/lower/upper`` are
    ``(rows, cols, vals)`` with rows/cols local to their levels.  The sign
    convention is ``A p = 0`` with ``A = diag - (coupling terms)``.
    """
    C = table.level(m)
    d = params.d
    theta, P = params.theta, params.P
    absg = np.abs(params.gamma)
    L = C.shape[0]
    rows_local = np.arange(L)

    diag = (C * absg).sum(axis=1) + m * (m - 1 + theta)
    for j in range(d):
        diag = diag - theta * P[j, j] * C[:, j]

    same = ([], [], [])
    for j in range(d):
        has_j = C[:, j] >= 1
        if not has_j.any():
            continue
        for i in range(d):
            if i == j or P[i, j] == 0:
                continue
            T = C[has_j].copy()
            T[:, j] -= 1
            T[:, i] += 1
            same[0].append(rows_local[has_j])
            same[1].append(table.indices(T) - table.offsets[m - 1])
            same[2].append(-theta * P[i, j] * (C[has_j, i] + 1.0))

    lower = ([], [], [])
    if m >= 2:
        for j in range(d):
            mask = C[:, j] >= 2
            if not mask.any():
                continue
            T = C[mask].copy()
            T[:, j] -= 1
            lower[0].append(rows_local[mask])
            lower[1].append(table.indices(T) - table.offsets[m - 2])
            lower[2].append(-m * (C[mask, j] - 1.0))

    upper = ([], [], [])
    if upward:
        for j in range(d):
            if absg[j] == 0:
                continue
            T = C.copy()
            T[:, j] += 1
            upper[0].append(rows_local)
            upper[1].append(table.indices(T) - table.offsets[m])
            upper[2].append(-(m / (m + 1.0)) * absg[j] * (C[:, j] + 1.0))

    def cat(block):
        if not block[0]:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        return tuple(np.concatenate(part) for part in block)

    return diag, cat(same), cat(lower), cat(upper)


def _pim_proxy_diag(C: np.ndarray, m: int, params: ModelParams) -> np.ndarray:
    q = params.stationary_distribution()
    absg = np.abs(params.gamma)
    pi_hat = (C + params.theta * q) / (m + params.theta)
    return m * (pi_hat * absg).sum(axis=1)


def _check_sizes(d: int, N: int, joint: bool):
    top = count_configs(d, N)
    if top > MAX_LEVEL_SIZE:
        raise DimensionTooLarge(f"level {N} has {top} states (limit {MAX_LEVEL_SIZE})")
    if joint:
        total = count_configs(d + 1, N) - 1
        if total > MAX_JOINT_SIZE:
            raise DimensionTooLarge(f"joint system has {total} unknowns (limit {MAX_JOINT_SIZE})")


def _condition_estimate(A, lu=None) -> float:
    try:
        if A.shape[0] <= 2000:
            return float(np.linalg.cond(A.toarray(), 1))
        inv = spla.LinearOperator(
            A.shape, matvec=lu.solve, rmatvec=lambda x: lu.solve(x, trans="T"), dtype=float
        )
        return float(spla.onenormest(A) * spla.onenormest(inv))
    except Exception:  # estimate only; never mask the original failure
        return math.inf


def _sparse_solve(A: sp.csc_matrix, b: np.ndarray, rtol: float) -> np.ndarray:
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularSystem(f"singular system: {exc}", condition=_condition_estimate(A)) from exc
    x = lu.solve(b)
    for _ in range(2):
        r = b - A @ x
        if np.linalg.norm(r, np.inf) <= rtol * max(np.linalg.norm(b, np.inf), 1e-300):
            break
        x = x + lu.solve(r)
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution", condition=_condition_estimate(A, lu))
    r = b - A @ x
    if np.linalg.norm(r, np.inf) > 1e3 * rtol * max(np.linalg.norm(b, np.inf), 1e-300):
        raise SingularSystem(
            f"residual {np.linalg.norm(r, np.inf):.3g} too large",
            condition=_condition_estimate(A, lu),
        )
    return x


def _to_log(p: np.ndarray) -> np.ndarray:
    if np.any(p <= 0):
        bad = int(np.sum(p <= 0))
        raise SingularSystem(f"{bad} non-positive sampling probabilities in the solution")
    return np.log(p)


# ---------------------------------------------------------------------------
# neutral solver

def solve_neutral(params: ModelParams, N: int, method: str = "sequential") -> ProbTable:
    """Sampling probabilities for all ``1 <= |n| <= N`` without selection.

    ``method="sequential"`` solves one sample-size level at a time (sparse LU
    per level); ``method="joint"`` assembles and solves all levels at once.
    """
    if not params.neutral:
        raise InvalidParams("solve_neutral needs gamma = 0; use solve_selection_truncated")
    if N < 1:
        raise InvalidParams(f"N must be >= 1, got {N}")
    if method == "joint":
        log_p = _solve_joint(params, N, None)
        return ProbTable(params.d, N, log_p, {"params": params.fingerprint(), "method": "joint"})
    if method != "sequential":
        raise InvalidParams(f"unknown method {method!r}")

    _check_sizes(params.d, N, joint=False)
    shell = ProbTable(params.d, N, np.zeros(count_configs(params.d + 1, N) - 1))
    p = np.empty(len(shell))
    for m in range(1, N + 1):
        diag, same, lower, _ = _level_blocks(shell, m, params, upward=False)
        L = diag.size
        A = sp.coo_matrix(
            (np.concatenate([diag, same[2]]),
             (np.concatenate([np.arange(L), same[0]]), np.concatenate([np.arange(L), same[1]]))),
            shape=(L, L),
        ).tocsr()
        if m == 1:
            A = A.tolil()
            A[L - 1, :] = np.ones(L)
            b = np.zeros(L)
            b[L - 1] = 1.0
        else:
            prev = p[shell.level_slice(m - 1)]
            b = -np.bincount(lower[0], weights=lower[2] * prev[lower[1]], minlength=L)
        p[shell.level_slice(m)] = _sparse_solve(A.tocsc(), b, NEUTRAL_RESIDUAL)
    return ProbTable(params.d, N, _to_log(p), {"params": params.fingerprint(), "method": "sequential"})


# ---------------------------------------------------------------------------
# joint (selection) solver

def _solve_joint(
    params: ModelParams, n_max: int, closure: str | None, direct: bool = False
) -> np.ndarray:
    _check_sizes(params.d, n_max, joint=True)
    shell = ProbTable(params.d, n_max, np.zeros(count_configs(params.d + 1, n_max) - 1))
    rows, cols, vals = [], [], []
    selection = not params.neutral
    for m in range(1, n_max + 1):
        top = m == n_max
        diag, same, lower, upper = _level_blocks(shell, m, params, upward=selection and not top)
        if selection and top and closure == CLOSURES[1]:
            diag = diag - _pim_proxy_diag(shell.level(m), m, params)
        off = shell.offsets[m - 1]
        L = diag.size
        rows += [off + np.arange(L), off + same[0]]
        cols += [off + np.arange(L), off + same[1]]
        vals += [diag, same[2]]
        if m >= 2:
            rows.append(off + lower[0])
            cols.append(shell.offsets[m - 2] + lower[1])
            vals.append(lower[2])
        if upper[0].size:
            rows.append(off + upper[0])
            cols.append(shell.offsets[m] + upper[1])
            vals.append(upper[2])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)

    # replace the size-1 equation for e_d by the normalisation sum_i p(e_i) = 1
    d = params.d
    keep = rows != d - 1
    rows = np.concatenate([rows[keep], np.full(d, d - 1)])
    cols = np.concatenate([cols[keep], np.arange(d)])
    vals = np.concatenate([vals[keep], np.ones(d)])
    size = len(shell)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    b = np.zeros(size)
    b[d - 1] = 1.0
    if not selection or direct:
        rtol = NEUTRAL_RESIDUAL if not selection else SELECTION_RESIDUAL
        return _to_log(_sparse_solve(A.tocsc(), b, rtol))
    return _to_log(_gmres_block_solve(A, b, shell))


def _gmres_block_solve(A: sp.csr_matrix, b: np.ndarray, shell: ProbTable) -> np.ndarray:
    """GMRES preconditioned by block forward substitution over sample sizes.

    Dropping the (weak) upward branching blocks leaves a block lower
    triangular matrix whose diagonal blocks are factorised once.
    """
    slices = [shell.level_slice(m) for m in range(1, shell.max_size + 1)]
    diag_lu, lower = [], []
    for k, sl in enumerate(slices):
        try:
            diag_lu.append(spla.splu(A[sl, sl].tocsc()))
        except RuntimeError as exc:
            raise SingularSystem(f"singular diagonal block at size {k + 1}: {exc}") from exc
        lower.append(A[sl, slices[k - 1]] if k else None)

    def precondition(r):
        z = np.empty_like(r)
        for k, sl in enumerate(slices):
            rhs = r[sl] if k == 0 else r[sl] - lower[k] @ z[slices[k - 1]]
            z[sl] = diag_lu[k].solve(rhs)
        return z

    M = spla.LinearOperator(A.shape, matvec=precondition, dtype=float)
    x, info = spla.gmres(A, b, x0=precondition(b), M=M, rtol=1e-13, atol=0.0, restart=40, maxiter=20)
    scale = np.linalg.norm(b, np.inf)
    for _ in range(3):
        r = b - A @ x
        if np.linalg.norm(r, np.inf) <= SELECTION_RESIDUAL * 1e-2 * scale:
            break
        dx, info = spla.gmres(A, r, M=M, rtol=1e-13, atol=0.0, restart=40, maxiter=20)
        x = x + dx
    res = np.linalg.norm(b - A @ x, np.inf)
    if not np.all(np.isfinite(x)) or res > SELECTION_RESIDUAL * scale:
        raise SingularSystem(f"GMRES did not converge (residual {res:.3g}, info {info})")
    return x


def solve_selection_truncated(
    params: ModelParams, N: int, policy: TruncationPolicy | None = None
) -> TruncatedSolution:
    """Sampling probabilities under selection, truncated at ``policy.n_max``.

    The returned table covers ``|n| <= N``.  ``error`` holds, per table entry,
    ``|log p(n_max) - log p(n_max - 2)|`` from a second, shallower solve.
    """
    policy = policy or TruncationPolicy.default(N)
    if policy.n_max < N + 1:
        raise InvalidParams(f"n_max={policy.n_max} must be at least N + 1 = {N + 1}")
    if N < 1:
        raise InvalidParams(f"N must be >= 1, got {N}")
    deep = _solve_joint(params, policy.n_max, policy.closure)
    shallow_max = max(policy.n_max - 2, N)
    shallow = _solve_joint(params, shallow_max, policy.closure)
    keep = count_configs(params.d + 1, N) - 1
    error = np.abs(deep[:keep] - shallow[:keep])
    meta = {
        "params": params.fingerprint(),
        "method": "truncated",
        "n_max": policy.n_max,
        "closure": policy.short_name,
    }
    table = ProbTable(params.d, N, deep[:keep], meta)
    if policy.tol is not None and error.max() > policy.tol:
        raise NonConvergedTruncation(
            f"truncation error estimate {error.max():.3g} exceeds tolerance {policy.tol:.3g}"
        )
    return TruncatedSolution(table, error, policy.n_max)


def solve(params: ModelParams, N: int, policy: TruncationPolicy | None = None) -> ProbTable:
    """Dispatch to the neutral or truncated solver and return just the table."""
    if params.neutral:
        return solve_neutral(params, N)
    return solve_selection_truncated(params, N, policy).table


# ---------------------------------------------------------------------------

def pi_from_table(i: int, n, t: ProbTable) -> float:
    """Conditional sampling probability ``pi[i|n]`` read off a table."""
    n = tuple(int(c) for c in n)
    m = sum(n)
    if m + 1 > t.max_size or len(n) != t.d:
        raise OutOfTable(f"pi[.|{n}] needs sample size {m + 1}, table stops at {t.max_size}")
    upper = t[shift(n, plus=i)]
    lower = t[n] if m > 0 else 0.0
    return (n[i] + 1.0) / (m + 1.0) * math.exp(upper - lower)
