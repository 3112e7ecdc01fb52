"""Training losses aimed at logical accuracy rather than bit accuracy.

Three terms, combined with fixed weights:

  prior class loss     cross entropy of the stage-1 class logits;
  refined class loss   cross entropy of the stage-2 class logits;
  parity entropy       for each logical operator row, the probability
                       that the residual error (true XOR predicted)
                       anticommutes with it, pushed through -log.

The parity term uses the closed form for the parity of independent
Bernoulli bits: if bit j of the residual flips with probability q_j,
then Pr[odd parity over support chi] = (1 - prod_{j in chi} (1 - 2 q_j)) / 2,
because E[(-1)^(sum X_j)] factorizes over independent bits.  The flip
probability of residual bit j given logit l_j and true bit e_j is
q_j = sigmoid((1 - 2 e_j) * l_j), which also equals
(1 - (1 - 2 e_j) * tanh(l_j / 2)) / 2 via sigmoid(y) = (1 + tanh(y/2)) / 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, cross_entropy_logits

__all__ = [
    "LossWeights",
    "lp_loss",
    "lc_loss",
    "residual_flip_probs",
    "parity_violation_prob",
    "entropy_loss",
    "combined_loss",
    "sigmoid_tanh_identity_gap",
]

LOG_FLOOR = 1e-12  # clamp for log arguments near certain parity violation


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights for (prior class, refined class, parity entropy)."""

    lp: float = 0.2
    lc: float = 1.0
    entropy: float = 1.0


def lp_loss(prior_logits: Tensor, classes: np.ndarray) -> Tensor:
    """Cross entropy of the stage-1 prior class logits."""
    return cross_entropy_logits(prior_logits, classes)


def lc_loss(class_logits: Tensor, classes: np.ndarray) -> Tensor:
    """Cross entropy of the refined class logits."""
    return cross_entropy_logits(class_logits, classes)


def residual_flip_probs(flip_logits: Tensor, errors: np.ndarray) -> Tensor:
    """Per-bit probability that the residual differs from the true error.

    flip_logits has shape (B, n_err); errors is the matching uint8 array.
    """
    errors = np.asarray(errors, dtype=np.float64)
    if errors.shape != flip_logits.shape:
        raise ValueError("errors and flip logits must share a shape")
    sign = Tensor(1.0 - 2.0 * errors)
    return (sign * flip_logits).sigmoid()


def parity_violation_prob(q: Tensor, support: np.ndarray) -> Tensor:
    """Pr[odd residual parity] over one logical operator's support.

    q is (B, n_err) independent flip probabilities; support lists the
    bit indices of the operator.  Empty support means parity 0 always,
    so the violation probability is identically zero.
    """
    b = q.shape[0]
    support = np.asarray(support, dtype=np.int64)
    if support.size == 0:
        return Tensor(np.zeros(b))
    prod = Tensor(np.ones(b))
    for j in support:
        prod = prod * (Tensor(np.ones(b)) - q[:, int(j)].scale(2.0))
    return (Tensor(np.ones(b)) - prod).scale(0.5)


def entropy_loss(flip_logits: Tensor, errors: np.ndarray, l_eff: np.ndarray) -> Tensor:
    """Mean over logical rows of -log(1 - violation probability).

    Averages over the batch first, then over the n_log rows; the log
    argument is clamped at LOG_FLOOR.
    """
    q = residual_flip_probs(flip_logits, errors)
    n_log = l_eff.shape[0]
    b = q.shape[0]
    row_terms = []
    for i in range(n_log):
        support = np.nonzero(l_eff[i])[0]
        pr = parity_violation_prob(q, support)
        safe = (Tensor(np.ones(b)) - pr).clamp_min(LOG_FLOOR)
        row_terms.append(-safe.log().mean())
    total = row_terms[0]
    for term in row_terms[1:]:
        total = total + term
    return total.scale(1.0 / n_log)


def combined_loss(
    prior_logits: Tensor,
    class_logits: Tensor,
    flip_logits: Tensor,
    errors: np.ndarray,
    classes: np.ndarray,
    l_eff: np.ndarray,
    weights: LossWeights = LossWeights(),
) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of the three terms plus their float values for logging."""
    t_lp = lp_loss(prior_logits, classes)
    t_lc = lc_loss(class_logits, classes)
    t_ent = entropy_loss(flip_logits, errors, l_eff)
    total = t_lp.scale(weights.lp) + t_lc.scale(weights.lc) + t_ent.scale(weights.entropy)
    parts = {
        "lp": float(t_lp.data),
        "lc": float(t_lc.data),
        "entropy": float(t_ent.data),
        "total": float(total.data),
    }
    return total, parts


def sigmoid_tanh_identity_gap(y: np.ndarray) -> float:
    """Max |sigmoid(y) - (1 + tanh(y/2)) / 2| over the given grid."""
    y = np.asarray(y, dtype=np.float64)
    lhs = 1.0 / (1.0 + np.exp(-y))
    rhs = 0.5 * (1.0 + np.tanh(0.5 * y))
    return float(np.max(np.abs(lhs - rhs)))
