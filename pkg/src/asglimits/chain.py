"""The typed block-counting jump chain of the ancestral selection graph.

From a state ``n`` with ``D = sum_r n_r |gamma_r| + |n| (|n| - 1 + theta)``
the chain jumps to ``n - v`` with

* coalescence ``v = e_j``:        ``n_j (n_j - 1) / D / pi[j | n - e_j]``
* mutation ``v = e_j - e_i``:     ``theta P_ij n_j / D * pi[i | n - e_j] / pi[j | n - e_j]``
* branching ``v = -e_j``:         ``|n| |gamma_j| / D * pi[j | n]``

Mutation entries with ``i = j`` are kept as explicit self-transitions.
Entries are listed coalescences by j, then mutations by (j, i), then
branchings by j; sampling uses inverse CDF over that order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DirectionY, ModelParams, PimParams, ProbTable, as_config, size
from .errors import InvalidConfig, MaxStepsExceeded, OutOfTable, PiOutOfRange
from .pim import pim_pi
from .recursion import pi_from_table

COALESCENCE, MUTATION, BRANCHING = "coalescence", "mutation", "branching"


# ---------------------------------------------------------------------------
# conditional sampling probabilities

class PimPi:
    """Closed-form ``pi[i|n] = (n_i + theta Q_i) / (|n| + theta)``."""

    tolerance = 1e-10
    label = "pim-closed-form"

    def __init__(self, pp: PimParams):
        self.pp = pp

    def __call__(self, i: int, n) -> float:
        return pim_pi(i, n, self.pp)


class TablePi:
    """``pi`` read off a sampling-probability table."""

    tolerance = 1e-10
    label = "prob-table"

    def __init__(self, table: ProbTable):
        self.table = table

    def __call__(self, i: int, n) -> float:
        try:
            return pi_from_table(i, n, self.table)
        except OutOfTable as exc:
            raise PiOutOfRange(str(exc)) from exc


class EnsemblePi:
    """Monte Carlo ``pi`` from a stationary ensemble (a private snapshot)."""

    label = "diffusion-mc"

    def __init__(self, ensemble):
        from .diffusion import StationaryEnsemble

        samples = np.array(ensemble.samples, copy=True)
        samples.setflags(write=False)
        self.ensemble = StationaryEnsemble(
            samples=samples,
            replica_ids=ensemble.replica_ids,
            times=ensemble.times,
            config=ensemble.config,
            params_hash=ensemble.params_hash,
            failed=ensemble.failed,
        )
        self.last_se = 0.0

    def with_se(self, i: int, n) -> tuple[float, float]:
        from .diffusion import estimate_pi

        return estimate_pi(i, n, self.ensemble)

    def __call__(self, i: int, n) -> float:
        est, se = self.with_se(i, n)
        self.last_se = se
        return est

    @property
    def tolerance(self) -> float:
        return 3.0 * self.last_se


def pi_provider(source) -> object:
    """Wrap a PimParams, ProbTable or StationaryEnsemble as a provider."""
    if isinstance(source, PimParams):
        return PimPi(source)
    if isinstance(source, ProbTable):
        return TablePi(source)
    if hasattr(source, "samples"):
        return EnsemblePi(source)
    if callable(source):
        return source
    raise InvalidConfig(f"cannot build a pi provider from {type(source).__name__}")


# ---------------------------------------------------------------------------
# one-step law

@dataclass(frozen=True)
class Transition:
    kind: str
    i: int
    j: int
    v: tuple
    prob: float

    @property
    def label(self) -> str:
        if self.kind == MUTATION:
            return f"mutation({self.i + 1}->{self.j + 1})"
        return f"{self.kind}({self.j + 1})"


@dataclass(frozen=True)
class TransitionDistribution:
    state: tuple
    entries: tuple
    denominator: float

    @property
    def total(self) -> float:
        return math.fsum(e.prob for e in self.entries)

    def prob(self, v) -> float:
        """Total probability of jump vector ``v`` (self-mutations share ``v = 0``)."""
        v = tuple(int(c) for c in v)
        return math.fsum(e.prob for e in self.entries if e.v == v)

    def entry(self, kind: str, j: int, i: int | None = None) -> Transition | None:
        for e in self.entries:
            if e.kind == kind and e.j == j and (i is None or e.i == i):
                return e
        return None


def _vec(d: int, plus: int | None = None, minus: int | None = None) -> tuple:
    v = [0] * d
    if plus is not None:
        v[plus] += 1
    if minus is not None:
        v[minus] -= 1
    return tuple(v)


def _ask(pi, i: int, n: tuple) -> float:
    try:
        return float(pi(i, n))
    except OutOfTable as exc:
        raise PiOutOfRange(str(exc)) from exc


def transition_distribution(n, params: ModelParams, pi) -> TransitionDistribution:
    """Exact one-step law of the jump chain at ``n``; zero-numerator entries omitted."""
    d = params.d
    n = as_config(n, d)
    m = size(n)
    if m < 1:
        raise InvalidConfig("the chain is undefined at the empty sample")
    theta, P, gamma = params.theta, params.P, params.gamma
    D = float(np.dot(n, np.abs(gamma))) + m * (m - 1 + theta)
    entries = []
    below = {}
    for j in range(d):
        if n[j] >= 1:
            lower = tuple(c - (a == j) for a, c in enumerate(n))
            below[j] = (lower, _ask(pi, j, lower))
    for j in range(d):
        if n[j] >= 2:
            prob = n[j] * (n[j] - 1) / D / below[j][1]
            entries.append(Transition(COALESCENCE, j, j, _vec(d, plus=j), prob))
    for j in range(d):
        if n[j] < 1:
            continue
        lower, pj = below[j]
        for i in range(d):
            if P[i, j] <= 0:
                continue
            prob = theta * P[i, j] * n[j] / D * _ask(pi, i, lower) / pj
            entries.append(Transition(MUTATION, i, j, _vec(d, plus=j, minus=i), prob))
    for j in range(d):
        if gamma[j] != 0:
            prob = m * abs(gamma[j]) / D * _ask(pi, j, n)
            if prob != 0:
                entries.append(Transition(BRANCHING, j, j, _vec(d, minus=j), prob))
    return TransitionDistribution(state=n, entries=tuple(entries), denominator=D)


def step(n, params: ModelParams, pi, rng: np.random.Generator) -> tuple[tuple, str]:
    """Draw one jump by inverse CDF; returns ``(next state, event label)``."""
    dist = transition_distribution(n, params, pi)
    return _draw(dist, rng)


def _draw(dist: TransitionDistribution, rng: np.random.Generator) -> tuple[tuple, str]:
    probs = np.array([e.prob for e in dist.entries])
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    k = min(int(np.searchsorted(cdf, u, side="right")), len(probs) - 1)
    while probs[k] == 0 and k > 0:
        k -= 1
    e = dist.entries[k]
    nxt = tuple(a - b for a, b in zip(dist.state, e.v))
    return nxt, e.label


@dataclass(frozen=True)
class ChainTrajectory:
    states: tuple
    events: tuple
    seed: int | None = None
    truncated: bool = False

    def __len__(self):
        return len(self.states)

    @property
    def n_events(self) -> int:
        return len(self.events)


def simulate_to_mrca(
    n0, params: ModelParams, pi, rng: np.random.Generator, max_steps: int = 1_000_000, seed=None
) -> ChainTrajectory:
    """Run the chain from ``n0`` until a single lineage is left.

    Hitting ``max_steps`` first returns a trajectory flagged ``truncated``.
    The transition law at a state is computed once and cached for the run.
    """
    state = as_config(n0, params.d)
    states = [state]
    events = []
    cache: dict = {}
    while size(state) > 1:
        if len(events) >= max_steps:
            return ChainTrajectory(tuple(states), tuple(events), seed, truncated=True)
        dist = cache.get(state)
        if dist is None:
            dist = cache[state] = transition_distribution(state, params, pi)
        state, label = _draw(dist, rng)
        states.append(state)
        events.append(label)
    return ChainTrajectory(tuple(states), tuple(events), seed)


def require_complete(traj: ChainTrajectory) -> ChainTrajectory:
    """Raise :class:`MaxStepsExceeded` for a truncated trajectory."""
    if traj.truncated:
        raise MaxStepsExceeded(f"no MRCA within {traj.n_events} steps")
    return traj


# ---------------------------------------------------------------------------
# scaled chain

def scaled_transition(v, n: int, direction: DirectionY, params: ModelParams, pi) -> float:
    """``rho^(n)(v | y^(n)) = p(n y^(n) - v | n y^(n))``, exactly."""
    state = direction.lattice(n)
    if len(state) != params.d:
        raise InvalidConfig("direction and parameters disagree on d")
    v = tuple(int(c) for c in v)
    dist = transition_distribution(state, params, pi)
    return dist.prob(v)
