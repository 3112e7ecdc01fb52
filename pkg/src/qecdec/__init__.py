"""Toy-scale neural decoding toolkit for stabilizer quantum error-correcting codes.

Submodules
----------
gf2          dense GF(2) linear algebra
codes        CSS code constructions and decoding problems
noise        Pauli error sampling with per-sample counter-based streams
autodiff     reverse-mode automatic differentiation on float64 arrays
model        dual-stream transformer decoder over syndrome and class tokens
losses       logical-centric training losses
cpnd         constraint-projected nullspace descent post-processing
reference    maximum-likelihood oracle and ordered-statistics baselines
experiments  training, evaluation, weight studies, threshold estimation
cli          command-line entry points
"""

from . import gf2, codes, noise, autodiff, model, losses, cpnd, reference, experiments, cli

__version__ = "0.1.0"

__all__ = [
    "gf2",
    "codes",
    "noise",
    "autodiff",
    "model",
    "losses",
    "cpnd",
    "reference",
    "experiments",
    "cli",
    "__version__",
]
