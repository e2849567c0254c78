"""Central finite differences and straight-from-the-formula loss oracles."""

from __future__ import annotations

import math

import numpy as np

from ptmaudit.learner import losses
from ptmaudit.learner.mlp import MlpModel, _forward
from ptmaudit.learner.train import TrainConfig, batch_loss_grad

H = 1e-6


def numeric_grad(f, x: np.ndarray, h: float = H) -> np.ndarray:
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return g


# Gradients smaller than this are compared absolutely: below it the
# finite-difference roundoff (about 1e-9) is no longer small relative to them.
SCALE_FLOOR = 1e-4


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), SCALE_FLOOR)
    return float(np.linalg.norm(a - b) / scale)


def unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    u = rng.normal(size=(n, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


# -- per-loss checks; each returns the relative error of one random instance


def check_ce(rng) -> float:
    n, k = int(rng.integers(1, 6)), int(rng.integers(2, 6))
    z = rng.normal(size=(n, k)) * 3
    y = rng.integers(0, k, size=n)
    _, g = losses.cross_entropy_grad(z, y)
    return rel_error(g, numeric_grad(lambda: losses.cross_entropy_loss(z, y), z))


def check_bce(rng) -> float:
    n, k = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    z = rng.normal(size=(n, k)) * 3
    t = (rng.random((n, k)) < 0.5).astype(float)
    _, g = losses.bce_grad(z, t)
    return rel_error(g, numeric_grad(lambda: losses.bce_loss(z, t), z))


def _through_normalize(loss_grad, rng, n, d):
    """Check the contrastive gradient composed with L2 normalization, so
    finite differences can move freely off the unit sphere."""
    u = rng.normal(size=(n, d))

    def value():
        z, _ = losses.l2_normalize(u)
        return loss_grad(z)[0]

    z, norms = losses.l2_normalize(u)
    _, gz = loss_grad(z)
    analytic = losses.l2_normalize_backward(z, norms, gz)
    return rel_error(analytic, numeric_grad(value, u))


def check_supcon(rng) -> float:
    n, d = int(rng.integers(2, 7)), int(rng.integers(2, 5))
    y = rng.integers(0, 3, size=n)
    tau = float(rng.choice([0.1, 0.5, 1.0]))
    reduction = str(rng.choice(["sum", "mean"]))
    return _through_normalize(lambda z: losses.supcon_grad(z, y, tau, reduction), rng, n, d)


def check_multisupcon(rng) -> float:
    n, d, k = int(rng.integers(2, 7)), int(rng.integers(2, 5)), 4
    sets = [set(np.flatnonzero(rng.random(k) < 0.5).tolist()) or {0} for _ in range(n)]
    tau = float(rng.choice([0.1, 0.5, 1.0]))
    c = float(rng.choice([0.0, 0.3, 0.5, 1.0]))
    return _through_normalize(lambda z: losses.multisupcon_grad(z, sets, tau, c), rng, n, d)


def _joint_instance(rng, mode: str):
    n_in, n_out, n = 5, 3, int(rng.integers(2, 6))
    cfg = TrainConfig(loss_mode=mode, hidden=(8, 6, 4), lam=float(rng.uniform(0.05, 0.95)),
                      tau=float(rng.choice([0.1, 0.5, 1.0])))
    m = MlpModel.init(n_in, [f"c{i}" for i in range(n_out)], cfg.hidden,
                      head="sigmoid" if cfg.multilabel else "softmax", embed=True, seed=int(rng.integers(1 << 30)))
    for b in m.biases:
        b += rng.normal(scale=0.1, size=b.shape)
    x = rng.normal(size=(n, n_in))
    t = (rng.random((n, n_out)) < 0.5).astype(float) if cfg.multilabel else rng.integers(0, n_out, size=n)
    return cfg, m, x, t


def _differentiable(m: MlpModel, x: np.ndarray) -> bool:
    """Finite differences only mean something away from ReLU kinks and
    away from an all-zero embedding, where the loss is not differentiable."""
    _, cache = _forward(m, x)
    near_kink = any(np.abs(a).min() < 1e-3 for a in cache.pre[:3])
    return not near_kink and np.linalg.norm(cache.pre[2], axis=1).min() > 1e-3


def _check_joint(rng, mode: str) -> float:
    while True:
        cfg, m, x, t = _joint_instance(rng, mode)
        if _differentiable(m, x):
            break
    _, d_w, d_b = batch_loss_grad(m, x, t, cfg)
    worst = 0.0
    for params, grads in ((m.weights, d_w), (m.biases, d_b)):
        for p, g in zip(params, grads):
            num = numeric_grad(lambda: batch_loss_grad(m, x, t, cfg)[0], p)
            worst = max(worst, rel_error(g, num))
    return worst


def check_joint_supcon(rng) -> float:
    return _check_joint(rng, "joint_supcon")


def check_joint_multisupcon(rng) -> float:
    return _check_joint(rng, "joint_multisupcon")


GRADIENT_CHECKS = {
    "ce": check_ce,
    "bce": check_bce,
    "supcon": check_supcon,
    "multisupcon": check_multisupcon,
    "joint_supcon": check_joint_supcon,
    "joint_multisupcon": check_joint_multisupcon,
}


# -- formula oracles -----------------------------------------------------------


def supcon_oracle(z, labels, tau) -> float:
    """Summed over anchors, written as nested loops."""
    n = len(z)
    total = 0.0
    for i in range(n):
        pos = [p for p in range(n) if p != i and labels[p] == labels[i]]
        if not pos:
            continue
        denom = sum(math.exp(float(z[i] @ z[a]) / tau) for a in range(n) if a != i)
        total += -sum(math.log(math.exp(float(z[i] @ z[p]) / tau) / denom) for p in pos) / len(pos)
    return total


def multisupcon_oracle(z, sets, tau, c) -> float:
    n = len(z)
    total = 0.0
    for i in range(n):
        sim = {p: len(sets[i] & sets[p]) / len(sets[i] | sets[p]) for p in range(n) if p != i and sets[i] | sets[p]}
        pos = [p for p, s in sim.items() if s >= c]
        if not pos:
            continue
        denom = sum(math.exp(float(z[i] @ z[a]) / tau) for a in range(n) if a != i)
        total += -sum(sim[p] * math.log(math.exp(float(z[i] @ z[p]) / tau) / denom) for p in pos) / len(pos)
    return total
