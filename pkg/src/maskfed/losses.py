"""Training objectives and the entropy-based balancing weight.

Every loss returns its value together with hand-derived gradients with
respect to its immediate inputs, so the client can chain them through the
adapter and classifier backward passes.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyBatchError, InvalidInputError
from .numerics import Array, entropy_rows, softmax_cols, softmax_rows


def contrastive_loss(similarities: Array, tau: float) -> tuple[float, Array]:
    """Symmetric image/text alignment loss over a square similarity matrix.

    ``similarities[j, k]`` is the cosine similarity between gated image
    features of sample j and the text features of sample k's label. Row- and
    column-wise temperature softmaxes both want the diagonal to dominate.
    Returns the scalar loss and its gradient w.r.t. the similarity matrix.
    """
    s = np.asarray(similarities, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got {s.shape}")
    b = s.shape[0]
    if b == 0:
        raise EmptyBatchError("contrastive loss of an empty batch")
    if not (tau > 0):
        raise InvalidInputError("tau must be positive")
    p = softmax_rows(s, tau)
    q = softmax_rows(s.T, tau)
    diag = np.arange(b)
    value = -0.5 / b * (np.log(p[diag, diag]).sum() + np.log(q[diag, diag]).sum())
    eye = np.eye(b)
    d_s = ((p - eye) + (q - eye).T) / (2.0 * b * tau)
    return float(value), d_s


def cross_entropy_loss(logits: Array, labels: Array) -> tuple[float, Array]:
    """Mean cross-entropy from raw logits via log-sum-exp.

    Returns the scalar loss and its gradient w.r.t. the logits.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise InvalidInputError("logits must be (B, C)")
    b, c = logits.shape
    if b == 0:
        raise EmptyBatchError("cross entropy of an empty batch")
    if labels.shape != (b,):
        raise InvalidInputError("labels must have one entry per row")
    if np.any(labels < 0) or np.any(labels >= c):
        raise InvalidInputError(f"labels must lie in [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    value = float(np.mean(lse - shifted[np.arange(b), labels]))
    probs = softmax_rows(logits)
    d_logits = probs.copy()
    d_logits[np.arange(b), labels] -= 1.0
    return value, d_logits / b


def classwise_temp_softmax(logits: Array, temp: float) -> Array:
    """Temperature softmax normalized over the batch dimension, per class."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise EmptyBatchError("class-wise softmax needs a nonempty (B, C) array")
    if not (temp > 0):
        raise InvalidInputError("temperature must be positive")
    return softmax_cols(logits, temp)


def classwise_kl_loss(
    adapter_logits: Array,
    classifier_logits: Array,
    temp: float,
    weight: float,
) -> tuple[float, Array, Array]:
    """Weighted symmetric KL between the two heads' per-class batch profiles.

    Both logit matrices are softened over the batch dimension per class; the
    divergence runs in both directions, balanced by ``weight``, and gradients
    flow into both sides so the heads learn from each other.
    Returns (value, d_adapter_logits, d_classifier_logits).
    """
    s = np.asarray(adapter_logits, dtype=np.float64)
    o = np.asarray(classifier_logits, dtype=np.float64)
    if s.shape != o.shape:
        raise InvalidInputError(f"logit shapes differ: {s.shape} vs {o.shape}")
    if not (0.0 <= weight <= 1.0):
        raise InvalidInputError("weight must lie in [0, 1]")
    c = s.shape[1]
    q = classwise_temp_softmax(s, temp)
    p = classwise_temp_softmax(o, temp)
    log_ratio = np.log(q) - np.log(p)
    value = float(
        (weight * (q * log_ratio).sum() - (1.0 - weight) * (p * log_ratio).sum()) / c
    )
    # d/dq and d/dp of the summand, then chained through each column softmax
    g_q = (weight * (log_ratio + 1.0) - (1.0 - weight) * p / q) / c
    g_p = ((1.0 - weight) * (-log_ratio + 1.0) - weight * q / p) / c
    d_s = q * (g_q - (q * g_q).sum(axis=0, keepdims=True)) / temp
    d_o = p * (g_p - (p * g_p).sum(axis=0, keepdims=True)) / temp
    return value, d_s, d_o


def entropy_weight(p_adapter: Array, p_classifier: Array) -> float:
    """Balance in [0, 1] favoring whichever head is more certain.

    Computed as mean-entropy(adapter) / (mean-entropy(classifier) +
    mean-entropy(adapter)); a maximally uncertain adapter pushes the weight
    toward 1, i.e. toward the classifier. Accepts (B, C) batches or single
    distributions as 1-D arrays. Returns 0.5 when both entropies vanish.
    """
    pa = np.atleast_2d(np.asarray(p_adapter, dtype=np.float64))
    pc = np.atleast_2d(np.asarray(p_classifier, dtype=np.float64))
    if pa.shape[0] == 0 or pc.shape[0] == 0:
        raise EmptyBatchError("entropy weight of an empty batch")
    if pa.shape[0] != pc.shape[0]:
        raise InvalidInputError("batch sizes differ")
    h_a = float(entropy_rows(pa).mean())
    h_c = float(entropy_rows(pc).mean())
    if h_a + h_c == 0.0:
        return 0.5
    return h_a / (h_a + h_c)


def total_loss(contrastive: float, classifier: float, consistency: float, lam: float) -> float:
    """Composite objective: alignment + supervision + weighted consistency."""
    if lam < 0:
        raise InvalidInputError("lam must be nonnegative")
    return contrastive + classifier + lam * consistency


def ensemble_predict(p_classifier: Array, p_adapter: Array) -> Array:
    """Per-sample convex combination of the two heads' distributions.

    The mixing weight is the entropy balance of this sample alone, so a
    confident head dominates its uncertain counterpart.
    """
    p_c = np.asarray(p_classifier, dtype=np.float64)
    p_a = np.asarray(p_adapter, dtype=np.float64)
    if p_c.shape != p_a.shape or p_c.ndim != 1:
        raise InvalidInputError("distributions must be 1-D and of equal length")
    w = entropy_weight(p_a, p_c)
    return w * p_c + (1.0 - w) * p_a


def ensemble_predict_rows(p_classifier: Array, p_adapter: Array) -> Array:
    """Row-wise ensemble over (B, C) batches with per-sample weights."""
    p_c = np.asarray(p_classifier, dtype=np.float64)
    p_a = np.asarray(p_adapter, dtype=np.float64)
    if p_c.shape != p_a.shape or p_c.ndim != 2:
        raise InvalidInputError("expected matching (B, C) arrays")
    h_a = entropy_rows(p_a)
    h_c = entropy_rows(p_c)
    total = h_a + h_c
    w = np.where(total > 0, h_a / np.where(total > 0, total, 1.0), 0.5)
    return w[:, None] * p_c + (1.0 - w[:, None]) * p_a
