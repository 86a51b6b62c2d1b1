"""Cosine similarity and the normalized temperature-scaled cross-entropy loss.

Embedding batches hold ``2N`` rows where rows ``2k`` and ``2k + 1`` are the
two augmented views of sample ``k``.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, as_tensor, clamp_min, l2_norm, log, matmul, reduce_sum, transpose
from .autodiff import exp as t_exp

EPS = 1e-8
DENOMINATORS = ("exclude_self", "literal")


def cosine_sim(z_i, z_j, eps: float = EPS) -> float:
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    return float(z_i @ z_j / max(np.linalg.norm(z_i) * np.linalg.norm(z_j), eps))


def similarity_matrix(z, eps: float = EPS) -> Tensor:
    """All pairwise cosine similarities of the rows of ``z`` (differentiable)."""
    z = as_tensor(z)
    norms = l2_norm(z, axis=1, keepdims=True)
    return matmul(z, transpose(z)) / clamp_min(matmul(norms, transpose(norms)), eps)


def positive_index(n_rows: int) -> np.ndarray:
    idx = np.arange(n_rows)
    return idx ^ 1


def _check_batch(n_rows: int, tau: float) -> None:
    if n_rows < 2 or n_rows % 2:
        raise ValueError(f"embedding batch needs an even row count >= 2, got {n_rows}")
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")


def pairwise_softmax(sim_matrix, i: int, j: int, tau: float, denominator: str = "exclude_self") -> float:
    """Softmax probability of ``j`` among the candidates of anchor ``i``."""
    sim = np.asarray(sim_matrix.data if isinstance(sim_matrix, Tensor) else sim_matrix, dtype=np.float64)
    if i == j:
        raise ValueError("pairwise_softmax needs i != j")
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    row = sim[i] / tau
    keep = np.ones(len(row), dtype=bool)
    if denominator == "exclude_self":
        keep[i] = False
    elif denominator != "literal":
        raise ValueError(f"unknown denominator mode {denominator!r}")
    m = row[keep].max()
    return float(np.exp(row[j] - m) / np.exp(row[keep] - m).sum())


def nt_xent_loss(z, tau: float = 0.5, denominator: str = "exclude_self", eps: float = EPS) -> Tensor:
    """Mean over the ``N`` positive pairs of ``-log p(i, j) - log p(j, i)``."""
    z = as_tensor(z)
    if z.ndim != 2:
        raise ValueError(f"embeddings must be [2N, d], got {z.shape}")
    n_rows = z.shape[0]
    _check_batch(n_rows, tau)
    if denominator not in DENOMINATORS:
        raise ValueError(f"unknown denominator mode {denominator!r}")

    logits = similarity_matrix(z, eps) * (1.0 / tau)
    mask = np.ones((n_rows, n_rows), dtype=z.dtype)
    if denominator == "exclude_self":
        np.fill_diagonal(mask, 0)
    # per-row shift held constant: the loss value does not depend on it
    row_max = np.where(mask > 0, logits.data, -np.inf).max(axis=1, keepdims=True)
    shifted = logits - row_max
    denom = reduce_sum(t_exp(shifted) * mask, axis=1)
    pos = np.zeros((n_rows, n_rows), dtype=z.dtype)
    pos[np.arange(n_rows), positive_index(n_rows)] = 1
    pos_logit = reduce_sum(shifted * pos, axis=1)
    # every row is the anchor of exactly one term; two terms per pair
    return reduce_sum(log(denom) - pos_logit) * (1.0 / (n_rows // 2))
