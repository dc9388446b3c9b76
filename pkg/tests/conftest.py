"""Shared helpers for the test suite."""

import math

import numpy as np
import pytest

from natgrad_lens import (
    DiscreteStep,
    UpdateGradientPair,
    build_discrete_metric,
    certified_max_learning_rate,
    combined_metric,
    discrete_gradient,
    sym_eigen,
)


def make_pair(rng, dim, psi_max=1.4, ratio_range=(0.2, 5.0)):
    """Random aligned pair with a controlled angle.

    Draws a random direction g, an angle psi uniform in [0, psi_max] (kept
    away from pi/2 so spectra stay resolvable at double precision), and
    builds y at that angle with a log-uniform norm ratio.
    """
    g_hat = rng.standard_normal(dim)
    g_hat /= np.linalg.norm(g_hat)
    g = g_hat * rng.uniform(0.3, 3.0)
    if dim == 1:
        y = g_hat * rng.uniform(*ratio_range) * np.linalg.norm(g)
        return UpdateGradientPair(g=g, y=y)
    psi = rng.uniform(0.0, psi_max)
    ortho = rng.standard_normal(dim)
    ortho -= g_hat * (ortho @ g_hat)
    ortho /= np.linalg.norm(ortho)
    ratio = np.exp(rng.uniform(np.log(ratio_range[0]), np.log(ratio_range[1])))
    y_norm = ratio * np.linalg.norm(g)
    y = y_norm * (np.cos(psi) * g_hat + np.sin(psi) * ortho)
    return UpdateGradientPair(g=g, y=y)


def pair_at_angle(psi, dim=3, norm_g=1.0, norm_y=1.0):
    """Deterministic pair with exact angle psi in the (e1, e2) plane."""
    g = np.zeros(dim)
    g[0] = norm_g
    y = np.zeros(dim)
    y[0] = norm_y * np.cos(psi)
    y[1] = norm_y * np.sin(psi)
    return UpdateGradientPair(g=g, y=y)


def random_valid_metric_matrix(rng, pair):
    """Random symmetric PD matrix with M g = y, via rank-one correction of a
    random PD base.

    The base is rescaled so its quadratic form on g stays below the pair
    alignment, which keeps the correction weight positive and bounded away
    from zero (matrix entries stay moderate).
    """
    dim = pair.dim
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eigs = np.exp(rng.uniform(np.log(0.2), np.log(5.0), size=dim))
    base = (basis * eigs) @ basis.T
    scale = rng.uniform(0.05, 0.9) * pair.alignment / float(pair.g @ base @ pair.g)
    base = scale * base
    defect = pair.y - base @ pair.g
    weight = float(defect @ pair.g)
    assert weight > 0
    return base + np.outer(defect, defect) / weight


def settle_certified_rate(oracle, theta, direction, margin=0.9, probe=1e-3):
    """Find a learning rate equal to ``margin`` times its own certified bound.

    The certified bound depends on the metric of the step actually taken, so
    the deployment is a fixed point: eta = margin * lambda_min(M_bar(eta)) / h.
    Damped (geometric-mean) iteration settles it; returns (eta, combined
    metric, step) at the self-consistent rate.
    """
    eta = probe
    step = result = metric = None
    for _ in range(200):
        step = DiscreteStep.from_direction(theta, direction, eta)
        result = discrete_gradient(oracle, step)
        metric = build_discrete_metric(step, result.y_bar)
        h = -sym_eigen(result.hessian_mid).min
        assert h > 0, "loss must be nonconvex along the step for this helper"
        target = margin * certified_max_learning_rate(metric, h)
        if abs(eta - target) <= 1e-9 * target:
            break
        eta = math.sqrt(eta * target)
    else:
        raise AssertionError("certified-rate fixed point did not settle")
    combined = combined_metric(metric, result.hessian_mid, eta)
    return eta, combined, step


def bisect_expansion_root(oracle, theta, p, iterations=60):
    """Independent oracle: 60-iteration bisection on the expansion residual
    over (0, 1), written directly from the defining identity."""
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(p, dtype=float)
    gap = float(oracle.value(theta + p) - oracle.value(theta))
    linear = float(p @ np.asarray(oracle.gradient(theta), dtype=float))

    def residual(lam):
        return gap - linear - 0.5 * float(p @ (oracle.hessian(theta + lam * p).array @ p))

    lo, hi = 1e-12, 1.0 - 1e-12
    res_lo = residual(lo)
    assert res_lo * residual(hi) <= 0, "oracle requires a bracketing interval"
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if (residual(mid) <= 0) == (res_lo <= 0):
            lo, res_lo = mid, residual(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
