"""Construction and analysis of metrics that cast an update rule as natural
gradient descent.

Given an update direction ``g`` and the negative loss gradient ``y`` with
``y.g > 0``, there is a family of symmetric positive definite matrices M with
``M g = y``; under any of them the update is steepest descent. This module
builds the canonical representative, the one-parameter family that acts as a
scalar on the complement of span{g, y}, and the condition-number-optimal
member, along with their closed-form spectra, the attainable eigenvalue
bounds, and the extension to losses with explicit time dependence.

Everything here is a pure function over immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, CertificateError
from .linalg import (
    SymMatrix,
    angle_between,
    as_matrix,
    orthonormal_complement_basis,
    sym_eigen,
    _as_float_array,
    _readonly,
)
from .tolerances import (
    ALIGNMENT_RTOL,
    METRIC_MAP_RTOL,
    SYMMETRY_DEFECT_TOL,
    VALIDITY_MAP_RTOL,
)


@dataclass(frozen=True)
class UpdateGradientPair:
    """An update direction ``g`` and negative loss gradient ``y`` at one point.

    Both vectors must be nonzero and finite. Positive alignment ``y.g > 0``
    (the instantaneous-decrease condition) is *not* required to hold: it is
    enforced by the metric constructors, which raise AlignmentError below the
    relative tolerance ``ALIGNMENT_RTOL * |y||g|``.
    """

    g: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        g = _readonly(_as_float_array(self.g, "g").reshape(-1))
        y = _readonly(_as_float_array(self.y, "y").reshape(-1))
        if g.size != y.size:
            raise ValueError(f"g has dim {g.size} but y has dim {y.size}")
        if np.linalg.norm(g) == 0.0 or np.linalg.norm(y) == 0.0:
            raise ValueError("g and y must both be nonzero")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "y", y)

    @property
    def dim(self) -> int:
        return self.g.size

    @property
    def alignment(self) -> float:
        return float(np.dot(self.y, self.g))

    @property
    def psi(self) -> float:
        """Angle between y and g, recomputed on every access."""
        return angle_between(self.y, self.g)

    @property
    def norm_ratio(self) -> float:
        return float(np.linalg.norm(self.y) / np.linalg.norm(self.g))

    @property
    def alignment_tolerance(self) -> float:
        return ALIGNMENT_RTOL * float(np.linalg.norm(self.y) * np.linalg.norm(self.g))

    @property
    def is_effective(self) -> bool:
        return self.alignment > self.alignment_tolerance

    def require_effective(self) -> None:
        if not self.is_effective:
            raise AlignmentError(self.alignment, self.psi, self.alignment_tolerance)


@dataclass(frozen=True)
class Metric:
    """A symmetric positive definite matrix mapping g to y, with certificates.

    ``map_residual`` is ``|M g - y| / |y|`` and ``min_eigenvalue`` comes from
    the certified eigendecomposition; construction fails rather than return a
    matrix violating either certificate. ``gamma`` records the family
    parameter when the metric came from the one-parameter family.
    """

    matrix: SymMatrix
    pair: UpdateGradientPair
    gamma: float | None
    map_residual: float
    min_eigenvalue: float

    @property
    def dim(self) -> int:
        return self.matrix.dim


@dataclass(frozen=True)
class SpectrumReport:
    """Spectrum summary of a family metric.

    ``lambda_bulk`` is the eigenvalue of multiplicity dim - 2 on the
    complement of span{g, y}; it is None when dim < 3.
    """

    lambda_max: float
    lambda_min: float
    lambda_bulk: float | None
    kappa: float
    psi: float
    norm_ratio: float

    def __post_init__(self):
        if not self.lambda_min > 0:
            raise ValueError(f"lambda_min must be positive, got {self.lambda_min!r}")
        if self.lambda_bulk is not None and not (
            self.lambda_min <= self.lambda_bulk <= self.lambda_max
        ):
            raise ValueError("bulk eigenvalue must lie between the extremes")
        expected = self.lambda_max / self.lambda_min
        if not math.isclose(self.kappa, expected, rel_tol=1e-12):
            raise ValueError(f"kappa {self.kappa!r} inconsistent with extremes ({expected!r})")


@dataclass(frozen=True)
class EigenvalueBounds:
    """Unattained bounds over all valid metrics for one pair.

    ``sup_lambda_min`` bounds the smallest eigenvalue from above (approached
    as gamma -> infinity), ``inf_lambda_max`` bounds the largest from below
    (approached as gamma -> 0). Every valid metric satisfies both strictly
    whenever g is not an eigenvector.
    """

    sup_lambda_min: float
    inf_lambda_max: float


@dataclass(frozen=True)
class CanonicalDecomposition:
    """Split of a metric into its rank-one part and a complement operator.

    ``m_prime = M - y y^T / (y.g)`` annihilates g (``residual_on_g`` is
    ``|M' g| / |g|``, bounded by the map residual times |y|/|g|) and is
    positive definite on the complement of g.
    """

    m_prime: SymMatrix
    residual_on_g: float
    min_eig_on_complement: float


@dataclass(frozen=True)
class ValidityReport:
    """Outcome of checking whether a matrix is a valid metric for a pair."""

    is_valid: bool
    map_residual: float
    min_eigenvalue: float
    symmetry_defect: float


@dataclass(frozen=True)
class ExtendedPair:
    """Update/gradient pair on the extended variable (theta, t).

    ``v_dot`` is (d theta/dt, 1) and ``neg_grad_v`` is -(dL/d theta, dL/dt).
    Feed ``as_pair()`` into any metric constructor; the constructor enforces
    the alignment invariant, which here encodes total-derivative decrease of
    the time-varying loss.
    """

    v_dot: np.ndarray
    neg_grad_v: np.ndarray

    def __post_init__(self):
        v_dot = _readonly(_as_float_array(self.v_dot, "v_dot").reshape(-1))
        neg = _readonly(_as_float_array(self.neg_grad_v, "neg_grad_v").reshape(-1))
        if v_dot.size != neg.size:
            raise ValueError("v_dot and neg_grad_v must have equal dims")
        if v_dot[-1] != 1.0:
            raise ValueError("last component of v_dot must be exactly 1")
        object.__setattr__(self, "v_dot", v_dot)
        object.__setattr__(self, "neg_grad_v", neg)

    @property
    def alignment(self) -> float:
        return float(np.dot(self.neg_grad_v, self.v_dot))

    def as_pair(self) -> UpdateGradientPair:
        return UpdateGradientPair(g=self.v_dot, y=self.neg_grad_v)


def _certify(matrix: np.ndarray, pair: UpdateGradientPair, gamma: float | None) -> Metric:
    sym = SymMatrix(matrix)
    y_norm = float(np.linalg.norm(pair.y))
    residual = float(np.linalg.norm(sym.array @ pair.g - pair.y)) / y_norm
    if residual > METRIC_MAP_RTOL:
        raise CertificateError(
            "metric-map", f"|M g - y| / |y| = {residual:.3e} exceeds {METRIC_MAP_RTOL:.1e}"
        )
    smallest = sym_eigen(sym).min
    if smallest <= 0:
        raise CertificateError(
            "metric-positive-definiteness", f"min eigenvalue {smallest:.3e} is not positive"
        )
    return Metric(matrix=sym, pair=pair, gamma=gamma, map_residual=residual, min_eigenvalue=smallest)


def build_canonical_metric(
    pair: UpdateGradientPair,
    weights=None,
    complement_rotation=None,
) -> Metric:
    """Canonical metric ``y y^T / (y.g) + sum_i w_i u_i u_i^T``.

    The ``u_i`` are an orthonormal basis of the complement of g; ``weights``
    (default all 1) set the eigenvalues of the complement block. Passing an
    orthogonal ``complement_rotation`` of shape (dim-1, dim-1) conjugates the
    complement basis, which together with the weights reaches every positive
    definite operator on the complement, i.e. the whole class of valid
    metrics for the pair.
    """
    pair.require_effective()
    dim = pair.dim
    basis = orthonormal_complement_basis(pair.g)
    if complement_rotation is not None:
        rot = _as_float_array(complement_rotation, "complement_rotation")
        if rot.shape != (dim - 1, dim - 1):
            raise ValueError(f"complement_rotation must be {(dim - 1, dim - 1)}, got {rot.shape}")
        defect = np.abs(rot.T @ rot - np.eye(dim - 1)).max() if dim > 1 else 0.0
        if defect > 1e-10:
            raise ValueError(f"complement_rotation is not orthogonal (defect {defect:.3e})")
        basis = basis @ rot
    if weights is None:
        w = np.ones(dim - 1)
    else:
        w = _as_float_array(weights, "weights").reshape(-1)
        if w.size != dim - 1:
            raise ValueError(f"expected {dim - 1} weights, got {w.size}")
        if np.any(w <= 0):
            raise ValueError("all weights must be positive")
    matrix = np.outer(pair.y, pair.y) / pair.alignment + (basis * w) @ basis.T
    return _certify(matrix, pair, gamma=None)


def build_family_metric(pair: UpdateGradientPair, gamma: float) -> Metric:
    """One-parameter family member: ``y y^T/(y.g) + gamma (y.y)/(y.g) (I - g g^T/(g.g))``.

    These are exactly the valid metrics acting as a scalar on the complement
    of span{g, y}; gamma = 1 gives the condition-number-optimal metric.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    pair.require_effective()
    g, y = pair.g, pair.y
    scale = gamma * float(np.dot(y, y)) / pair.alignment
    matrix = np.outer(y, y) / pair.alignment + scale * (
        np.eye(pair.dim) - np.outer(g, g) / float(np.dot(g, g))
    )
    return _certify(matrix, pair, gamma=float(gamma))


def optimal_metric(pair: UpdateGradientPair) -> Metric:
    """The gamma = 1 family member, which minimizes the condition number
    over *all* valid metrics; its kappa is (1+|sin psi|)/(1-|sin psi|)."""
    return build_family_metric(pair, 1.0)


def metric_from_matrix(pair: UpdateGradientPair, matrix) -> Metric:
    """Wrap an externally built matrix as a certified Metric.

    The matrix must map g to y within the map tolerance and be positive
    definite; otherwise CertificateError is raised.
    """
    pair.require_effective()
    return _certify(as_matrix(matrix), pair, gamma=None)


def closed_form_spectrum(pair: UpdateGradientPair, gamma: float) -> SpectrumReport:
    """Exact spectrum of the family metric without forming the matrix.

    With r = |y|/|g|, c = cos(psi) and s = sqrt((1+gamma)^2 - 4 gamma c^2):

        lambda_max  = r ((1+gamma) + s) / (2c)        (multiplicity 1)
        lambda_min  = 2 r gamma c / ((1+gamma) + s)   (multiplicity 1)
        lambda_bulk = r gamma / c                     (multiplicity dim-2)

    lambda_min uses the product form to avoid cancellation near psi = pi/2.
    At gamma = 1 these reduce to r (1/c +- |tan psi|) and r / c. For dim = 1
    the complement is empty and the single eigenvalue is r.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    pair.require_effective()
    psi = pair.psi
    ratio = pair.norm_ratio
    if pair.dim == 1:
        return SpectrumReport(
            lambda_max=ratio, lambda_min=ratio, lambda_bulk=None,
            kappa=1.0, psi=psi, norm_ratio=ratio,
        )
    cos = math.cos(psi)
    disc = math.sqrt((1.0 + gamma) ** 2 - 4.0 * gamma * cos * cos)
    lam_max = ratio * ((1.0 + gamma) + disc) / (2.0 * cos)
    lam_min = 2.0 * ratio * gamma * cos / ((1.0 + gamma) + disc)
    if pair.dim >= 3:
        # always inside [lam_min, lam_max]; clamp away last-ulp excursions
        bulk = min(max(ratio * gamma / cos, lam_min), lam_max)
    else:
        bulk = None
    return SpectrumReport(
        lambda_max=lam_max,
        lambda_min=lam_min,
        lambda_bulk=bulk,
        kappa=lam_max / lam_min,
        psi=psi,
        norm_ratio=ratio,
    )


def condition_number_bound(psi: float) -> float:
    """Smallest condition number over all valid metrics at angle psi:
    ``(1 + |sin psi|) / (1 - |sin psi|)``. Diverges as |psi| -> pi/2."""
    if not abs(psi) < math.pi / 2:
        raise ValueError(f"|psi| must be below pi/2, got {psi!r}")
    s = abs(math.sin(psi))
    return (1.0 + s) / (1.0 - s)


def extreme_eigenvalue_bounds(pair: UpdateGradientPair) -> EigenvalueBounds:
    """Strict bounds on the extreme eigenvalues over all valid metrics.

    Computed in the cancellation-free forms ``sup lambda_min = y.g / g.g``
    and ``inf lambda_max = y.y / y.g``.
    """
    pair.require_effective()
    sup_min = pair.alignment / float(np.dot(pair.g, pair.g))
    inf_max = float(np.dot(pair.y, pair.y)) / pair.alignment
    return EigenvalueBounds(sup_lambda_min=sup_min, inf_lambda_max=inf_max)


def canonical_decomposition(m: Metric) -> CanonicalDecomposition:
    """Strip the rank-one part of a metric and certify the remainder.

    Returns ``M' = M - y y^T / (y.g)`` together with ``|M' g| / |g|`` and the
    smallest eigenvalue of the complement block ``U^T M' U``. For any valid
    metric the former is at the noise floor (it equals the map residual up to
    the factor |y|/|g|) and the latter is positive; together these certify
    that the metric has the canonical rank-one-plus-complement form. For
    dim = 1 the complement is empty and its smallest eigenvalue is +inf.
    """
    pair = m.pair
    m_prime_arr = m.matrix.array - np.outer(pair.y, pair.y) / pair.alignment
    m_prime = SymMatrix(m_prime_arr)
    residual_on_g = float(
        np.linalg.norm(m_prime.array @ pair.g) / np.linalg.norm(pair.g)
    )
    if pair.dim == 1:
        return CanonicalDecomposition(m_prime, residual_on_g, math.inf)
    basis = orthonormal_complement_basis(pair.g)
    complement_block = basis.T @ m_prime.array @ basis
    smallest = sym_eigen(complement_block).min
    return CanonicalDecomposition(m_prime, residual_on_g, smallest)


def verify_natural_gradient_form(pair: UpdateGradientPair, m) -> ValidityReport:
    """Check whether a matrix casts the pair's update as natural gradient.

    Valid means: ``|M g - y| <= VALIDITY_MAP_RTOL * |y|``, smallest eigenvalue
    positive, and symmetry defect at most SYMMETRY_DEFECT_TOL. Accepts plain
    arrays; the defect is measured before symmetrizing for the eigensolve.
    """
    arr = as_matrix(m)
    if arr.shape != (pair.dim, pair.dim):
        raise ValueError(f"matrix shape {arr.shape} does not match pair dim {pair.dim}")
    defect = float(np.abs(arr - arr.T).max())
    residual = float(
        np.linalg.norm(arr @ pair.g - pair.y) / np.linalg.norm(pair.y)
    )
    smallest = sym_eigen(SymMatrix(arr)).min
    is_valid = (
        residual <= VALIDITY_MAP_RTOL
        and smallest > 0
        and defect <= SYMMETRY_DEFECT_TOL
    )
    return ValidityReport(
        is_valid=is_valid,
        map_residual=residual,
        min_eigenvalue=smallest,
        symmetry_defect=defect,
    )


def extend_time_varying(theta_dot, grad_theta, grad_t: float) -> ExtendedPair:
    """Lift a rule and a time-varying loss gradient to the extended variable.

    ``v_dot = (theta_dot, 1)`` and ``neg_grad_v = (-grad_theta, -grad_t)``.
    Alignment of the extended pair equals ``theta_dot.(-grad_theta) - grad_t``,
    the negated total time derivative of the loss; metric constructors reject
    the pair when that is not positive.
    """
    theta_dot = _as_float_array(theta_dot, "theta_dot").reshape(-1)
    grad_theta = _as_float_array(grad_theta, "grad_theta").reshape(-1)
    if theta_dot.size != grad_theta.size:
        raise ValueError("theta_dot and grad_theta must have equal dims")
    grad_t = float(grad_t)
    if not math.isfinite(grad_t):
        raise ValueError("grad_t must be finite")
    v_dot = np.append(theta_dot, 1.0)
    neg_grad_v = np.append(-grad_theta, -grad_t)
    return ExtendedPair(v_dot=v_dot, neg_grad_v=neg_grad_v)
