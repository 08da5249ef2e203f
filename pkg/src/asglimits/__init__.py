"""Large-sample asymptotics of sampling probabilities under selection and mutation.

The package computes sampling probabilities of typed samples from the
stationary Wright-Fisher diffusion (closed form for parent-independent
mutation, a sparse lattice recursion otherwise, Monte Carlo from simulated
ensembles) and checks their polynomial decay and the limits of the
associated block-counting jump chain.
"""
from .core import DirectionY, ModelParams, PimParams, ProbTable, validate
from .errors import InvalidParams, NumericError

__all__ = [
    "DirectionY",
    "InvalidParams",
    "ModelParams",
    "NumericError",
    "PimParams",
    "ProbTable",
    "validate",
]
__version__ = "0.1.0"
