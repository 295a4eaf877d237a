"""Small numerical core: stable softmax, cosine similarity, entropy, seeded
counter-based random streams, and a central-difference gradient checker.

All training arithmetic is float64; narrower precisions appear only at
serialization boundaries.
"""

from __future__ import annotations

import hashlib
from typing import Callable

import numpy as np

from .errors import CheckFailedError, DegenerateInputError, InvalidInputError

Array = np.ndarray

PROB_ATOL = 1e-9


def stream(seed: int, name: str) -> np.random.Generator:
    """Return an independent, reproducible random stream.

    Streams are keyed by (seed, name) through SHA-256 onto a Philox
    counter-based generator, so every stochastic consumer can own a private
    stream and results stay bitwise reproducible regardless of scheduling.
    """
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def softmax(logits: Array, temperature: float = 1.0) -> Array:
    """Temperature softmax of a 1-D logit vector, with max-subtraction."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size == 0:
        raise InvalidInputError("softmax expects a nonempty 1-D array")
    if not np.all(np.isfinite(logits)):
        raise InvalidInputError("softmax received non-finite logits")
    if not (temperature > 0):
        raise InvalidInputError(f"temperature must be positive, got {temperature}")
    z = logits / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_rows(logits: Array, temperature: float = 1.0) -> Array:
    """Row-wise temperature softmax of a 2-D array (no validation, hot path)."""
    z = logits / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cols(logits: Array, temperature: float = 1.0) -> Array:
    """Column-wise temperature softmax: each column normalizes over rows."""
    z = logits / temperature
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def validate_distribution(p: Array, atol: float = PROB_ATOL) -> Array:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidInputError("probability vector must be nonempty and 1-D")
    if np.any(p < -atol) or np.any(p > 1 + atol):
        raise InvalidInputError("probability entries must lie in [0, 1]")
    if abs(p.sum() - 1.0) > atol:
        raise InvalidInputError(f"probabilities sum to {p.sum()!r}, expected 1")
    return p


def entropy(p: Array) -> float:
    """Shannon entropy in nats with the 0*log(0) = 0 convention."""
    p = validate_distribution(p)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def entropy_rows(p: Array) -> Array:
    """Per-row entropy of a matrix of distributions (no validation, hot path)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1)


def cosine_similarity(a: Array, b: Array) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity undefined for zero-norm vector")
    return float(a @ b / (na * nb))


def grad_check(
    f: Callable[[Array], tuple[float, Array]],
    theta: Array,
    h: float = 1e-5,
) -> float:
    """Max elementwise discrepancy between an analytic gradient and central
    differences: max_i |g_i - fd_i| / max(1, |g_i|).

    ``f`` maps a parameter vector to (value, gradient); only the value is used
    at the shifted points.
    """
    theta = np.asarray(theta, dtype=np.float64)
    value, grad = f(theta)
    grad = np.asarray(grad, dtype=np.float64)
    if not np.isfinite(value):
        raise CheckFailedError("objective is non-finite at the base point")
    if grad.shape != theta.shape:
        raise InvalidInputError("gradient shape does not match parameter shape")
    worst = 0.0
    for i in range(theta.size):
        tp = theta.copy()
        tp[i] += h
        tm = theta.copy()
        tm[i] -= h
        fp, _ = f(tp)
        fm, _ = f(tm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise CheckFailedError(f"objective is non-finite near index {i}")
        fd = (fp - fm) / (2.0 * h)
        err = abs(grad[i] - fd) / max(1.0, abs(grad[i]))
        worst = max(worst, err)
    return worst
