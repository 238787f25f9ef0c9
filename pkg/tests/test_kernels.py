"""Loss-kernel semantics, backend parity, and the pinball-minimizer oracle."""
from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import minimize

from qaff import _kernels
from qaff._kernels import pure
from qaff.quantile import LEVELS


def test_huber_zero():
    assert _kernels.huber(0.0, 0.001) == 0.0


def test_huber_quadratic_branch():
    assert _kernels.huber(0.0005, 0.001) == pytest.approx(1.25e-7)


def test_huber_linear_branch():
    assert _kernels.huber(0.01, 0.001) == pytest.approx(9.5e-6)


def test_huber_continuous_at_threshold():
    k = 0.001
    assert _kernels.huber(k, k) == pytest.approx(0.5 * k * k, rel=1e-12)
    assert _kernels.huber(k + 1e-12, k) == pytest.approx(0.5 * k * k, rel=1e-6)


def test_pinball_symmetric_at_half():
    for u in (0.3, 0.01, 0.0007):
        assert _kernels.pinball_huber(u, 0.5, 0.001) == pytest.approx(
            _kernels.pinball_huber(-u, 0.5, 0.001))


def test_pinball_underestimate_weighting():
    # positive error (underestimate) weighted by alpha
    assert _kernels.pinball_huber(0.01, 0.95, 0.001) == pytest.approx(9.025e-6)


def test_pinball_zero_residual():
    for a in LEVELS:
        assert _kernels.pinball_huber(0.0, a, 0.001) == 0.0


def test_backends_agree():
    rng = np.random.default_rng(3)
    q = rng.uniform(-1, 1, (64, 10))
    y = rng.uniform(-1, 1, 64)
    t = rng.uniform(-1, 1, (64, 10))
    for k in (0.001, 0.05):
        lf, df = _kernels.mc_loss_grad(q, y, LEVELS, k)
        lp, dp = pure.mc_loss_grad(q, y, LEVELS, k)
        assert lf == pytest.approx(lp, rel=1e-12)
        np.testing.assert_allclose(df, dp, atol=1e-15)
        lf, df = _kernels.td0_loss_grad(q, t, LEVELS, k)
        lp, dp = pure.td0_loss_grad(q, t, LEVELS, k)
        assert lf == pytest.approx(lp, rel=1e-12)
        np.testing.assert_allclose(df, dp, atol=1e-14)


def test_mc_grad_matches_finite_differences():
    rng = np.random.default_rng(7)
    q = rng.uniform(-0.8, 0.8, (5, 10))
    y = rng.uniform(-0.8, 0.8, 5)
    _, dq = _kernels.mc_loss_grad(q, y, LEVELS, 0.001)
    h = 1e-7
    for i, j in [(0, 0), (2, 5), (4, 9), (1, 3)]:
        qp, qm = q.copy(), q.copy()
        qp[i, j] += h
        qm[i, j] -= h
        lp, _ = _kernels.mc_loss_grad(qp, y, LEVELS, 0.001)
        lm, _ = _kernels.mc_loss_grad(qm, y, LEVELS, 0.001)
        assert dq[i, j] == pytest.approx((lp - lm) / (2 * h), rel=1e-4, abs=1e-12)


def pinball_minimizer_interval(samples: np.ndarray, alpha: float):
    """Exact-pinball minimizing set from sorted order statistics.

    With n*alpha fractional the minimizer is the ceil(n*alpha)-th order
    statistic; at integer n*alpha the whole closed interval between the n*alpha
    and (n*alpha + 1)-th order statistics minimizes the loss.
    """
    s = np.sort(samples)
    n = len(s)
    na = n * alpha
    m = int(np.ceil(na))
    if abs(na - round(na)) < 1e-9 and round(na) >= 1:
        lo = s[int(round(na)) - 1]
        hi = s[int(round(na))] if int(round(na)) < n else lo
    else:
        lo = hi = s[max(m, 1) - 1]
    return float(lo), float(hi)


def minimize_free_quantiles(samples: np.ndarray, k: float = 0.001) -> np.ndarray:
    """Direct minimization of the Huber quantile loss over a free 10-vector."""

    def fun(q):
        loss, _ = _kernels.mc_loss_grad(np.tile(q, (len(samples), 1)),
                                        samples, LEVELS, k)
        return loss

    def jac(q):
        _, dq = _kernels.mc_loss_grad(np.tile(q, (len(samples), 1)),
                                      samples, LEVELS, k)
        return dq.sum(axis=0)

    x0 = np.full(len(LEVELS), float(np.median(samples)))
    res = minimize(fun, x0, jac=jac, method="L-BFGS-B",
                   options={"maxiter": 500, "ftol": 1e-18, "gtol": 1e-14})
    return res.x


def run_pinball_oracle(n_dists: int = 100, seed: int = 5, tol: float = 0.01) -> float:
    """Worst distance from the exact minimizing set across random samples."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_dists):
        n = int(rng.integers(1, 51))
        samples = rng.uniform(-1, 1, n)
        q = minimize_free_quantiles(samples)
        for j, a in enumerate(LEVELS):
            lo, hi = pinball_minimizer_interval(samples, a)
            dist = max(lo - q[j], q[j] - hi, 0.0)
            worst = max(worst, dist)
    return worst


def test_pinball_minimizer_recovers_order_statistics():
    assert run_pinball_oracle(n_dists=25, seed=5) <= 0.01
