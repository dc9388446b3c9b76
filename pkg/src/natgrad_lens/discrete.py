"""Discrete-time updates as natural gradient descent.

For a step ``theta_next = theta_t + eta g`` that decreases a twice
continuously differentiable loss, the exact second-order expansion

    L(x + p) = L(x) + p.grad L(x) + 1/2 p.hess L(x + lambda p) p,  lambda in (0,1)

defines a two-point (discrete) gradient whose negative, ``y_bar``, always
correlates positively with g. The canonical metric built from (g, y_bar)
reproduces the step exactly; adding ``eta`` times the half-Hessian at the
expansion midpoint turns it into a true discrete-time natural gradient
whenever the combined matrix stays positive definite, which a small enough
learning rate guarantees. The stochastic variant averages sampled steps.

LossOracle callables must not mutate state during evaluation; everything
else here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import AlignmentError, CertificateError, EffectivenessError, NoRootError
from .linalg import SymMatrix, angle_between, sym_eigen, _as_float_array, _readonly
from .metrics import Metric, UpdateGradientPair, build_canonical_metric, closed_form_spectrum
from .tolerances import (
    ALIGNMENT_RTOL,
    CORRECTION_ORTHO_RTOL,
    FD_HESSIAN_STEP_SCALE,
    GRADIENT_SELFTEST_RTOL,
    PAIRING_RTOL,
    STEP_RECONSTRUCTION_TOL,
    STOCHASTIC_RECONSTRUCTION_TOL,
    TAYLOR_RESIDUAL_RTOL,
)

_SCAN_POINTS = 64
_BISECT_ITERATIONS = 60


class LossOracle:
    """An evaluable loss with gradient and Hessian access.

    ``value`` and ``gradient`` are user-supplied callables; the Hessian is
    either exact (when ``hessian`` is given) or built from central finite
    differences of the gradient with step ``FD_HESSIAN_STEP_SCALE *
    max(1, |theta|)``. Hessians are symmetrized, so they are symmetric by
    construction either way.
    """

    def __init__(
        self,
        dim: int,
        value: Callable[[np.ndarray], float],
        gradient: Callable[[np.ndarray], np.ndarray],
        hessian: Callable[[np.ndarray], np.ndarray] | None = None,
    ):
        if dim < 1:
            raise ValueError("dim must be at least 1")
        self.dim = int(dim)
        self.value = value
        self.gradient = gradient
        self._hessian = hessian

    def hessian(self, theta) -> SymMatrix:
        theta = _as_float_array(theta, "theta").reshape(-1)
        if self._hessian is not None:
            return SymMatrix(np.asarray(self._hessian(theta), dtype=float))
        step = FD_HESSIAN_STEP_SCALE * max(1.0, float(np.linalg.norm(theta)))
        columns = np.empty((self.dim, self.dim))
        for j in range(self.dim):
            offset = np.zeros(self.dim)
            offset[j] = step
            columns[:, j] = (
                np.asarray(self.gradient(theta + offset), dtype=float)
                - np.asarray(self.gradient(theta - offset), dtype=float)
            ) / (2.0 * step)
        return SymMatrix(0.5 * (columns + columns.T))

    def check_gradient(self, rng: np.random.Generator, probes: int = 8, scale: float = 1.0) -> float:
        """Compare the gradient against central differences of the value at
        random probe points; returns the worst relative error and raises
        CertificateError when it exceeds GRADIENT_SELFTEST_RTOL."""
        worst = 0.0
        for _ in range(probes):
            theta = scale * rng.standard_normal(self.dim)
            grad = np.asarray(self.gradient(theta), dtype=float)
            step = 1e-6 * max(1.0, float(np.linalg.norm(theta)))
            fd = np.empty(self.dim)
            for j in range(self.dim):
                offset = np.zeros(self.dim)
                offset[j] = step
                fd[j] = (self.value(theta + offset) - self.value(theta - offset)) / (2.0 * step)
            denom = max(1.0, float(np.linalg.norm(grad)))
            worst = max(worst, float(np.linalg.norm(grad - fd)) / denom)
        if worst > GRADIENT_SELFTEST_RTOL:
            raise CertificateError(
                "gradient-selftest",
                f"gradient disagrees with finite differences by {worst:.3e}",
            )
        return worst


def quadratic_oracle(a) -> LossOracle:
    """Oracle for ``L(theta) = 1/2 theta^T A theta`` with symmetric A."""
    a_sym = a if isinstance(a, SymMatrix) else SymMatrix(np.asarray(a, dtype=float))
    arr = a_sym.array

    return LossOracle(
        dim=a_sym.dim,
        value=lambda theta: 0.5 * float(theta @ arr @ theta),
        gradient=lambda theta: arr @ theta,
        hessian=lambda theta: arr,
    )


def quartic_oracle(dim: int) -> LossOracle:
    """Oracle for ``L(theta) = sum_i theta_i^4``."""
    return LossOracle(
        dim=dim,
        value=lambda theta: float(np.sum(theta**4)),
        gradient=lambda theta: 4.0 * theta**3,
        hessian=lambda theta: np.diag(12.0 * theta**2),
    )


@dataclass(frozen=True)
class DiscreteStep:
    """One discrete update ``theta_next = theta_t + eta g``.

    ``g`` is always derived as ``(theta_next - theta_t) / eta`` so the three
    stored fields can never disagree.
    """

    theta_t: np.ndarray
    theta_next: np.ndarray
    eta: float

    def __post_init__(self):
        theta_t = _readonly(_as_float_array(self.theta_t, "theta_t").reshape(-1))
        theta_next = _readonly(_as_float_array(self.theta_next, "theta_next").reshape(-1))
        if theta_t.size != theta_next.size:
            raise ValueError("theta_t and theta_next must have equal dims")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta!r}")
        object.__setattr__(self, "theta_t", theta_t)
        object.__setattr__(self, "theta_next", theta_next)
        object.__setattr__(self, "eta", float(self.eta))

    @classmethod
    def from_direction(cls, theta_t, g, eta: float) -> "DiscreteStep":
        theta_t = _as_float_array(theta_t, "theta_t").reshape(-1)
        g = _as_float_array(g, "g").reshape(-1)
        return cls(theta_t=theta_t, theta_next=theta_t + eta * g, eta=eta)

    @property
    def dim(self) -> int:
        return self.theta_t.size

    @property
    def displacement(self) -> np.ndarray:
        return self.theta_next - self.theta_t

    @property
    def g(self) -> np.ndarray:
        return self.displacement / self.eta


@dataclass(frozen=True)
class DiscreteGradientResult:
    """Negative discrete gradient of a step plus its certificates.

    ``y_bar = -grad L(theta_t) - hessian_mid (theta_next - theta_t)`` where
    ``hessian_mid`` is *half* the Hessian at the expansion midpoint
    ``theta_t + lambda_taylor (theta_next - theta_t)``. ``psi_bar`` is the
    angle between y_bar and the update direction; effectiveness of the step
    forces it below pi/2.
    """

    y_bar: np.ndarray
    lambda_taylor: float
    hessian_mid: SymMatrix
    psi_bar: float


def taylor_lambda(oracle: LossOracle, theta, p, tolerance: float | None = None) -> float:
    """Interior point making the second-order expansion an exact identity.

    The residual ``L(theta+p) - L(theta) - p.grad - 1/2 p.hess(theta+l p) p``
    is evaluated on a 64-point uniform scan of (0, 1); the first sign change
    is refined by bisection. When the residual is below tolerance everywhere
    (constant Hessian) the conventional 0.5 is returned: any interior point
    is then valid and determinism matters more than the choice. No sign
    change and no near-zero residual raises NoRootError with the profile.
    """
    theta = _as_float_array(theta, "theta").reshape(-1)
    p = _as_float_array(p, "p").reshape(-1)
    if np.linalg.norm(p) == 0.0:
        raise ValueError("p must be nonzero")
    loss_0 = float(oracle.value(theta))
    loss_1 = float(oracle.value(theta + p))
    linear = float(np.dot(p, np.asarray(oracle.gradient(theta), dtype=float)))
    if tolerance is None:
        tolerance = TAYLOR_RESIDUAL_RTOL * max(1.0, abs(loss_0))

    def residual(lam: float) -> float:
        hess = oracle.hessian(theta + lam * p)
        return loss_1 - loss_0 - linear - 0.5 * float(p @ (hess.array @ p))

    lambdas = np.linspace(0.0, 1.0, _SCAN_POINTS + 2)[1:-1]
    residuals = np.array([residual(lam) for lam in lambdas])
    if np.all(np.abs(residuals) < tolerance):
        return 0.5

    crossings = np.nonzero(np.diff(np.sign(residuals)) != 0)[0]
    if crossings.size == 0:
        k = int(np.argmin(np.abs(residuals)))
        if abs(residuals[k]) <= tolerance:
            return float(lambdas[k])
        raise NoRootError(list(lambdas), list(residuals))

    k = int(crossings[0])
    lo, hi = float(lambdas[k]), float(lambdas[k + 1])
    res_lo = float(residuals[k])
    for _ in range(_BISECT_ITERATIONS):
        mid = 0.5 * (lo + hi)
        res_mid = residual(mid)
        if (res_mid <= 0.0) == (res_lo <= 0.0):
            lo, res_lo = mid, res_mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    if abs(residual(root)) > tolerance:
        raise NoRootError([root], [residual(root)])
    return root


def discrete_gradient(oracle: LossOracle, step: DiscreteStep) -> DiscreteGradientResult:
    """Negative discrete gradient of an effective step.

    Raises EffectivenessError when the step does not strictly decrease the
    loss. The result satisfies the two-point pairing identity
    ``g.(eta y_bar) = -(L(theta_next) - L(theta_t))`` to PAIRING_RTOL.
    """
    loss_before = float(oracle.value(step.theta_t))
    loss_after = float(oracle.value(step.theta_next))
    delta = loss_after - loss_before
    if not delta < 0:
        raise EffectivenessError(loss_before, loss_after)

    p = step.displacement
    lam = taylor_lambda(oracle, step.theta_t, p)
    hessian_mid = SymMatrix(0.5 * oracle.hessian(step.theta_t + lam * p).array)
    grad = np.asarray(oracle.gradient(step.theta_t), dtype=float)
    y_bar = -grad - hessian_mid.array @ p

    pairing = float(np.dot(p, y_bar)) + delta
    if abs(pairing) > PAIRING_RTOL * max(1.0, abs(delta)):
        raise CertificateError(
            "discrete-pairing",
            f"g.(eta y_bar) + delta L = {pairing:.3e} exceeds tolerance",
        )
    psi_bar = angle_between(y_bar, step.g)
    return DiscreteGradientResult(
        y_bar=_readonly(y_bar), lambda_taylor=lam, hessian_mid=hessian_mid, psi_bar=psi_bar
    )


def build_discrete_metric(step: DiscreteStep, y_bar) -> Metric:
    """Canonical metric for (g, y_bar); maps the update direction onto the
    negative discrete gradient, so the step is recovered exactly through the
    inverse metric.
    """
    pair = UpdateGradientPair(g=step.g, y=y_bar)
    metric = build_canonical_metric(pair)
    recovered = step.theta_t + step.eta * np.linalg.solve(metric.matrix.array, pair.y)
    drift = float(np.linalg.norm(recovered - step.theta_next))
    scale = max(1.0, float(np.linalg.norm(step.theta_next)))
    if drift > STEP_RECONSTRUCTION_TOL * scale:
        raise CertificateError(
            "step-reconstruction", f"inverse-metric step drifts by {drift:.3e}"
        )
    return metric


@dataclass(frozen=True)
class CombinedMetric:
    """The discrete metric plus ``eta`` times the midpoint half-Hessian.

    Non-positive-definiteness is a reported state (``is_pd``), not an error:
    it simply means this learning rate is too large for the true natural
    gradient form.
    """

    matrix: SymMatrix
    is_pd: bool
    min_eigenvalue: float


def combined_metric(m_bar: Metric, hessian_mid: SymMatrix, eta: float) -> CombinedMetric:
    """Form ``M_bar + eta H`` and report its definiteness."""
    if eta < 0:
        raise ValueError(f"eta must be nonnegative, got {eta!r}")
    if hessian_mid.dim != m_bar.dim:
        raise ValueError(
            f"dimension mismatch: metric is {m_bar.dim}, Hessian is {hessian_mid.dim}"
        )
    matrix = SymMatrix(m_bar.matrix.array + eta * hessian_mid.array)
    smallest = sym_eigen(matrix).min
    return CombinedMetric(matrix=matrix, is_pd=smallest > 0, min_eigenvalue=smallest)


def max_learning_rate(y_bar, g, h: float) -> float:
    """Largest learning rate from the closed-form bound
    ``(1/h) (|y_bar|/|g|) cos(psi_bar)``, where ``h = -lambda_min`` of the
    midpoint half-Hessian.

    The bound uses the supremum of the discrete metric's smallest eigenvalue
    over all valid metrics, which no actual construction attains; see
    ``certified_max_learning_rate`` for the guarantee against a concrete
    metric. Computed in the cancellation-free form ``y_bar.g / (h g.g)``.
    """
    y_bar = _as_float_array(y_bar, "y_bar").reshape(-1)
    g = _as_float_array(g, "g").reshape(-1)
    if not h > 0:
        raise ValueError(f"h must be positive, got {h!r}")
    alignment = float(np.dot(y_bar, g))
    tol = ALIGNMENT_RTOL * float(np.linalg.norm(y_bar) * np.linalg.norm(g))
    if alignment <= tol:
        raise AlignmentError(alignment, angle_between(y_bar, g), tol)
    return alignment / (h * float(np.dot(g, g)))


def certified_max_learning_rate(m_bar: Metric, h: float) -> float:
    """Learning rate below which ``M_bar + eta H`` is certainly positive
    definite: ``lambda_min(M_bar) / h`` (Weyl bound against the actually
    constructed metric). Always at most ``max_learning_rate``.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h!r}")
    return m_bar.min_eigenvalue / h


@dataclass(frozen=True)
class ProbeRow:
    """One learning rate in a continuum-limit probe."""

    eta: float
    effective: bool
    y_bar_gap: float | None         # |y_bar - y|
    hessian_term: float | None      # |eta H g| with H the midpoint half-Hessian
    lambda_taylor: float | None
    spectrum: object | None         # SpectrumReport of the discrete metric
    metric_gap: float | None        # max|M_bar - M| over entries


@dataclass(frozen=True)
class ContinuumProbe:
    """Table of discrete-gradient behaviour as the learning rate shrinks."""

    rows: tuple

    def effective_rows(self):
        return [row for row in self.rows if row.effective]

    def gap_slope(self) -> float:
        """Least-squares slope of log|y_bar - y| against log eta over the
        effective rows; near 1 for a first-order vanishing gap."""
        rows = [r for r in self.effective_rows() if r.y_bar_gap and r.y_bar_gap > 0]
        if len(rows) < 2:
            raise ValueError("need at least two effective rows with nonzero gap")
        log_eta = np.log([r.eta for r in rows])
        log_gap = np.log([r.y_bar_gap for r in rows])
        slope, _ = np.polyfit(log_eta, log_gap, 1)
        return float(slope)

    def fitted_gap_constant(self) -> float:
        """Least-squares C in |y_bar - y| ~ C eta over the effective rows."""
        rows = self.effective_rows()
        etas = np.array([r.eta for r in rows])
        gaps = np.array([r.y_bar_gap for r in rows])
        return float(np.dot(etas, gaps) / np.dot(etas, etas))


def continuum_limit_probe(
    oracle: LossOracle,
    theta,
    g_rule: Callable[[np.ndarray], np.ndarray],
    etas: Sequence[float],
) -> ContinuumProbe:
    """Probe the small-learning-rate limit of the discrete construction.

    For each eta, takes the step ``theta + eta g_rule(theta)``, computes the
    discrete gradient and metric, and records how far they sit from their
    continuous counterparts ``y = -grad L`` and the canonical metric of
    (g, y). Ineffective steps are kept in the table but flagged, not raised.
    """
    theta = _as_float_array(theta, "theta").reshape(-1)
    g = np.asarray(g_rule(theta), dtype=float).reshape(-1)
    y = -np.asarray(oracle.gradient(theta), dtype=float)
    limit_metric = build_canonical_metric(UpdateGradientPair(g=g, y=y))

    rows = []
    for eta in etas:
        step = DiscreteStep.from_direction(theta, g, float(eta))
        try:
            result = discrete_gradient(oracle, step)
        except EffectivenessError:
            rows.append(ProbeRow(float(eta), False, None, None, None, None, None))
            continue
        pair = UpdateGradientPair(g=step.g, y=result.y_bar)
        m_bar = build_canonical_metric(pair)
        # Unit complement weights make the canonical metric the family member
        # with unit complement scale, i.e. gamma = cos(psi) / norm_ratio.
        gamma_unit = pair.alignment / float(np.dot(pair.y, pair.y))
        spectrum = closed_form_spectrum(pair, gamma_unit)
        rows.append(
            ProbeRow(
                eta=float(eta),
                effective=True,
                y_bar_gap=float(np.linalg.norm(result.y_bar - y)),
                hessian_term=float(np.linalg.norm(eta * (result.hessian_mid.array @ g))),
                lambda_taylor=result.lambda_taylor,
                spectrum=spectrum,
                metric_gap=float(np.abs(m_bar.matrix.array - limit_metric.matrix.array).max()),
            )
        )
    return ContinuumProbe(rows=tuple(rows))


@dataclass(frozen=True)
class StochasticSample:
    """One sampled step: realized direction g, negative discrete gradient
    y_bar, and the midpoint half-Hessian applied to g."""

    g: np.ndarray
    y_bar: np.ndarray
    hg: np.ndarray


@dataclass(frozen=True)
class StochasticMetric:
    """Averaged discrete metric, with the rank-one Hessian correction when
    the averaged curvature term is not orthogonal to the averaged update."""

    matrix: SymMatrix
    is_pd: bool
    used_correction: bool
    min_eigenvalue: float
    reconstruction_residual: float


def _component_mean(vectors) -> np.ndarray:
    # fsum per component: exactly-rounded sums, so the average does not
    # depend on the order in which samples were collected.
    stacked = np.stack([np.asarray(v, dtype=float).reshape(-1) for v in vectors])
    return np.array([math.fsum(stacked[:, j]) for j in range(stacked.shape[1])]) / len(vectors)


def stochastic_average_metric(samples: Sequence[StochasticSample], eta: float) -> StochasticMetric:
    """Metric for the *average* update of a stochastic rule.

    Builds the canonical metric of (<g>, <y_bar>) and, when ``<Hg>.<g>`` is
    nonzero beyond CORRECTION_ORTHO_RTOL (relative), adds the correction
    ``eta <Hg><Hg>^T / (<Hg>.<g>)`` so that ``M <g> = <y_bar> + eta <Hg>``,
    i.e. minus the true loss gradient at the base point. When the curvature
    term is orthogonal to <g> no correction exists (or is needed along <g>):
    the base metric is returned and certified against ``M <g> = <y_bar>``.
    Average alignment ``<y_bar>.<g> > 0`` is required; definiteness of the
    corrected matrix is reported, not raised, since it can fail for large eta.
    """
    if not samples:
        raise ValueError("need at least one sample")
    if eta < 0:
        raise ValueError(f"eta must be nonnegative, got {eta!r}")
    g_mean = _component_mean([s.g for s in samples])
    y_mean = _component_mean([s.y_bar for s in samples])
    hg_mean = _component_mean([s.hg for s in samples])

    pair = UpdateGradientPair(g=g_mean, y=y_mean)
    pair.require_effective()
    base = build_canonical_metric(pair)

    cross = float(np.dot(hg_mean, g_mean))
    hg_norm = float(np.linalg.norm(hg_mean))
    g_norm = float(np.linalg.norm(g_mean))
    used_correction = abs(cross) > CORRECTION_ORTHO_RTOL * hg_norm * g_norm and hg_norm > 0
    if used_correction:
        matrix = SymMatrix(base.matrix.array + eta * np.outer(hg_mean, hg_mean) / cross)
        # with the correction, M <g> equals minus the true gradient
        target = y_mean + eta * hg_mean
    else:
        # orthogonal curvature term: the base metric already maps <g> onto
        # the averaged discrete gradient and no rank-one fix is available
        matrix = base.matrix
        target = y_mean

    residual = float(np.linalg.norm(matrix.array @ g_mean - target))
    scale = max(float(np.linalg.norm(target)), 1e-300)
    if residual / scale > STOCHASTIC_RECONSTRUCTION_TOL:
        raise CertificateError(
            "stochastic-reconstruction",
            f"|M <g> - (<y_bar> + eta <Hg>)| / scale = {residual / scale:.3e}",
        )
    smallest = sym_eigen(matrix).min
    return StochasticMetric(
        matrix=matrix,
        is_pd=smallest > 0,
        used_correction=used_correction,
        min_eigenvalue=smallest,
        reconstruction_residual=residual / scale,
    )
