"""Numpy implementations of the quantile-loss kernels.

These are the reference semantics; the Cython module `_fast` implements the
same functions with fused loops. Both operate on float64 C-contiguous arrays.
"""
from __future__ import annotations

import numpy as np

BACKEND = "pure"


def huber(u, k: float):
    """H(u) = 0.5 u^2 inside |u| <= k, (|u| - 0.5 k) k outside."""
    u = np.asarray(u, dtype=np.float64)
    au = np.abs(u)
    return np.where(au <= k, 0.5 * u * u, (au - 0.5 * k) * k)


def pinball_huber(u, alpha, k: float):
    """Asymmetric Huber quantile loss |1_{u<0} - alpha| * H(u)."""
    u = np.asarray(u, dtype=np.float64)
    a = np.asarray(alpha, dtype=np.float64)
    w = np.where(u < 0, 1.0 - a, a)
    return w * huber(u, k)


def mc_loss_grad(q: np.ndarray, y: np.ndarray, levels: np.ndarray, k: float):
    """Monte-Carlo loss over rows: sum_j pinball(y_i - q_ij, levels_j).

    Returns (loss, dL/dq) with dL/dq shaped like q.
    """
    u = y[:, None] - q
    w = np.where(u < 0, 1.0 - levels, levels)
    au = np.abs(u)
    inner = au <= k
    loss = np.sum(w * np.where(inner, 0.5 * u * u, (au - 0.5 * k) * k))
    dq = -w * np.where(inner, u, np.sign(u) * k)
    return float(loss), dq


def td0_loss_grad(q: np.ndarray, targets: np.ndarray, levels: np.ndarray, k: float):
    """Pairwise TD(0) loss: sum over rows and all (alpha_j, target_j') pairs.

    `targets` holds the bootstrap quantile vector per row (treated as constant).
    """
    u = targets[:, None, :] - q[:, :, None]          # [N, j, j']
    w = np.where(u < 0, 1.0 - levels[None, :, None], levels[None, :, None])
    au = np.abs(u)
    inner = au <= k
    loss = np.sum(w * np.where(inner, 0.5 * u * u, (au - 0.5 * k) * k))
    dq = -(w * np.where(inner, u, np.sign(u) * k)).sum(axis=2)
    return float(loss), dq
