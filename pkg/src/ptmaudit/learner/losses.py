"""Loss functions and their exact gradients.

Every ``*_grad`` function returns ``(value, gradient)`` where the gradient
is taken with respect to the function's first argument. The plain
functions return the value only.
"""

from __future__ import annotations

import numpy as np

UNIT_NORM_TOL = 1e-6


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(z))


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# -- cross-entropy -----------------------------------------------------------


def cross_entropy_grad(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean of ``-log softmax(logits)[label]`` over the batch.

    ``logits`` may be a single vector with an integer label or an ``(n, k)``
    batch with ``n`` labels.
    """
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n = z.shape[0]
    logp = _log_softmax(z)
    value = -logp[np.arange(n), y].mean()
    grad = np.exp(logp)
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return float(value), grad[0] if single else grad


def cross_entropy_loss(logits, labels) -> float:
    return cross_entropy_grad(logits, labels)[0]


# -- binary cross-entropy ------------------------------------------------------


def bce_grad(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over every (sample, label) cell of sigmoid cross-entropy."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    per_cell = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    value = per_cell.mean()
    grad = (sigmoid(z) - y) / z.size
    return float(value), grad


def bce_loss(logits, targets) -> float:
    return bce_grad(logits, targets)[0]


# -- contrastive ---------------------------------------------------------------


def _check_embeddings(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ValueError("contrastive losses need at least two embeddings")
    norms = np.linalg.norm(z, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
        raise ValueError("contrastive losses expect L2-normalized embeddings")
    return z


def _weighted_contrastive(z: np.ndarray, weights: np.ndarray, positive: np.ndarray, tau: float, reduction: str):
    """Shared core of SupCon and MultiSupCon.

    For anchor ``i`` with positive set ``P(i)`` (``positive[i]``):

        l_i = -1/|P(i)| * sum_{p in P(i)} w_ip * log softmax_{a != i}(z_i . z_a / tau)[p]

    Anchors with an empty positive set contribute zero.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    n = z.shape[0]
    sim = z @ z.T / tau
    off = ~np.eye(n, dtype=bool)
    masked = np.where(off, sim, -np.inf)
    row_max = masked.max(axis=1, keepdims=True)
    lse = row_max + np.log(np.exp(masked - row_max).sum(axis=1, keepdims=True))
    log_prob = np.where(off, sim - lse, 0.0)
    q = np.where(off, np.exp(log_prob), 0.0)

    pos = positive & off
    counts = pos.sum(axis=1)
    has = counts > 0
    w = np.where(pos, weights, 0.0)
    inv = np.zeros(n)
    inv[has] = 1.0 / counts[has]

    per_anchor = -inv * (w * log_prob).sum(axis=1)
    scale = 1.0 if reduction == "sum" else 1.0 / n
    value = per_anchor.sum() * scale

    # d l_i / d sim_ia = inv_i * (W_i * q_ia - w_ia), with W_i = sum_p w_ip
    w_tot = w.sum(axis=1, keepdims=True)
    g_sim = inv[:, None] * (w_tot * q - w) * scale
    grad = (g_sim + g_sim.T) @ z / tau
    return float(value), grad


def supcon_grad(z, labels, tau: float = 0.1, reduction: str = "sum") -> tuple[float, np.ndarray]:
    """Supervised contrastive loss summed over anchors (``reduction="mean"``
    divides by the batch size). Gradient is with respect to the unit
    embeddings."""
    z = _check_embeddings(z)
    y = np.asarray(labels)
    positive = y[:, None] == y[None, :]
    return _weighted_contrastive(z, np.ones(positive.shape), positive, tau, reduction)


def supcon_loss(z, labels, tau: float = 0.1, reduction: str = "sum") -> float:
    return supcon_grad(z, labels, tau, reduction)[0]


def jaccard_matrix(label_sets) -> np.ndarray:
    sets = [frozenset(s) for s in label_sets]
    n = len(sets)
    s = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            union = sets[i] | sets[j]
            s[i, j] = len(sets[i] & sets[j]) / len(union) if union else 0.0
    return s


def multisupcon_grad(z, label_sets, tau: float = 0.1, c: float = 0.5, reduction: str = "sum") -> tuple[float, np.ndarray]:
    """Multi-label variant: positives are the other samples whose label-set
    Jaccard similarity reaches ``c``, and each positive term is weighted by
    that similarity. ``label_sets`` may also be an ``(n, k)`` 0/1 matrix."""
    z = _check_embeddings(z)
    if not 0.0 <= c <= 1.0:
        raise ValueError("threshold c must lie in [0, 1]")
    arr = np.asarray(label_sets) if not isinstance(label_sets, (list, tuple)) else None
    if arr is not None and arr.ndim == 2:
        inter = arr @ arr.T
        sizes = arr.sum(axis=1)
        union = sizes[:, None] + sizes[None, :] - inter
        s = np.divide(inter, union, out=np.zeros_like(inter, dtype=np.float64), where=union > 0)
    else:
        s = jaccard_matrix(label_sets)
    return _weighted_contrastive(z, s, s >= c, tau, reduction)


def multisupcon_loss(z, label_sets, tau: float = 0.1, c: float = 0.5, reduction: str = "sum") -> float:
    return multisupcon_grad(z, label_sets, tau, c, reduction)[0]


def l2_normalize(u: np.ndarray, eps: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    norms = np.maximum(np.linalg.norm(u, axis=-1, keepdims=True), eps)
    return u / norms, norms


def l2_normalize_backward(z: np.ndarray, norms: np.ndarray, grad_z: np.ndarray) -> np.ndarray:
    return (grad_z - z * (z * grad_z).sum(axis=-1, keepdims=True)) / norms


def joint_loss(supervised: float, contrastive: float, lam: float) -> float:
    """``lam * contrastive + (1 - lam) * supervised``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    return lam * contrastive + (1.0 - lam) * supervised
