"""Desk-scale experiments casting concrete learning rules as natural gradient.

Two runs: a stable linear time-invariant system whose quadratic stability
function is the loss (the flow is not a gradient flow, yet it is a natural
gradient flow under the constructed metric), and feedback alignment training
of a small two-layer network, where the realized update and the true
backpropagation gradient form the pair. Plus the windowed effectiveness
checker for raw loss sequences.

Runs are single-threaded and deterministic in their seeds; independent runs
share no state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import datasets
from .errors import ConfigError
from .linalg import SymMatrix, solve_lyapunov
from .metrics import UpdateGradientPair, closed_form_spectrum
from .tolerances import VALIDITY_MAP_RTOL

HURWITZ_MARGIN = 0.5


@dataclass(frozen=True)
class EffectivenessReport:
    """Windowed loss-decrease diagnostics for a trace.

    ``windowed_decrease_ok`` means ``loss[t + m] < loss[t]`` for every valid
    t; by the moving-average identity this forces the width-m average loss to
    decrease monotonically, which ``avg_loss_monotone_ok`` checks directly.
    """

    window_m: int
    windowed_decrease_ok: bool
    avg_loss_monotone_ok: bool
    instantaneous_monotone_ok: bool
    violation_count: int


def check_effectiveness(losses, window_m: int) -> EffectivenessReport:
    """Evaluate windowed, averaged and instantaneous decrease of a sequence."""
    losses = [float(x) for x in losses]
    if window_m < 1:
        raise ValueError(f"window_m must be positive, got {window_m!r}")
    if len(losses) <= window_m:
        raise ValueError(
            f"sequence of length {len(losses)} is too short for window {window_m}"
        )
    n = len(losses)
    violations = sum(1 for t in range(n - window_m) if not losses[t + window_m] < losses[t])
    # Moving sums via fsum; comparing sums instead of sums/m avoids the
    # division rounding that could break strictness.
    window_sums = [math.fsum(losses[t : t + window_m]) for t in range(n - window_m + 1)]
    avg_ok = all(b < a for a, b in zip(window_sums, window_sums[1:]))
    instantaneous_ok = all(b < a for a, b in zip(losses, losses[1:]))
    return EffectivenessReport(
        window_m=window_m,
        windowed_decrease_ok=violations == 0,
        avg_loss_monotone_ok=avg_ok,
        instantaneous_monotone_ok=instantaneous_ok,
        violation_count=violations,
    )


@dataclass(frozen=True)
class TrajectoryTrace:
    """Time-indexed record of an experiment run.

    ``spectra[k]`` is None at steps where the pair was not positively
    aligned (no metric exists there). All parallel sequences have equal
    length. ``truncated`` flags runs cut short by alignment loss.
    """

    times: np.ndarray
    losses: np.ndarray
    pairs: tuple
    spectra: tuple
    effectiveness: EffectivenessReport
    truncated: bool = False
    truncation_reason: str | None = None

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.losses) == len(self.pairs) == len(self.spectra) == n):
            raise ValueError("trace arrays must have equal lengths")

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class LtiConfig:
    """Stable linear system ``d theta/dt = A theta`` integrated at fixed step.

    Provide ``a_matrix`` explicitly or leave it None to generate a random
    Hurwitz matrix from the seed by shifting a standard normal matrix:
    ``A = R - (max Re eig(R) + margin) I``. ``theta0`` defaults to a seeded
    standard normal vector.
    """

    dim: int
    dt: float
    t_end: float
    seed: int = 0
    a_matrix: np.ndarray | None = None
    theta0: np.ndarray | None = None

    def resolve(self):
        if self.dim < 1:
            raise ConfigError(f"dim must be positive, got {self.dim!r}")
        if not self.dt > 0 or not self.t_end >= self.dt:
            raise ConfigError("need dt > 0 and t_end >= dt")
        rng = np.random.default_rng(self.seed)
        if self.a_matrix is None:
            raw = rng.standard_normal((self.dim, self.dim))
            shift = np.max(np.linalg.eigvals(raw).real) + HURWITZ_MARGIN
            a = raw - shift * np.eye(self.dim)
        else:
            a = np.asarray(self.a_matrix, dtype=float)
            if a.shape != (self.dim, self.dim):
                raise ConfigError(f"a_matrix shape {a.shape} does not match dim {self.dim}")
        if np.max(np.linalg.eigvals(a).real) >= 0:
            raise ConfigError("a_matrix must be Hurwitz (all eigenvalue real parts negative)")
        if self.theta0 is None:
            theta0 = rng.standard_normal(self.dim)
        else:
            theta0 = np.asarray(self.theta0, dtype=float).reshape(-1)
            if theta0.size != self.dim:
                raise ConfigError(f"theta0 has dim {theta0.size}, expected {self.dim}")
        if np.linalg.norm(theta0) == 0:
            raise ConfigError("theta0 must be nonzero")
        return a, theta0


def _rk4_step(a: np.ndarray, theta: np.ndarray, dt: float) -> np.ndarray:
    k1 = a @ theta
    k2 = a @ (theta + 0.5 * dt * k1)
    k3 = a @ (theta + 0.5 * dt * k2)
    k4 = a @ (theta + dt * k3)
    return theta + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def run_lti(config: LtiConfig) -> TrajectoryTrace:
    """Integrate the stable system and certify it as natural gradient flow.

    The loss is ``theta^T P theta`` with P from the Lyapunov solve against
    Q = I, so ``y = -2 P theta`` and ``g = A theta``; their alignment equals
    ``theta^T theta > 0``. At every recorded step the condition-number-optimal
    metric is built and its map residual checked against VALIDITY_MAP_RTOL;
    the recorded spectra are its closed-form eigenvalues. If alignment is
    ever lost numerically the trace is truncated and flagged.
    """
    a, theta = config.resolve()
    p = solve_lyapunov(a, SymMatrix(np.eye(config.dim)))
    n_steps = int(round(config.t_end / config.dt))

    times, losses, pairs, spectra = [], [], [], []
    truncated = False
    reason = None
    for k in range(n_steps + 1):
        g = a @ theta
        y = -2.0 * (p.array @ theta)
        pair = UpdateGradientPair(g=g, y=y)
        if not pair.is_effective:
            truncated = True
            reason = f"alignment lost at step {k} (y.g = {pair.alignment:.3e})"
            break
        spectrum = closed_form_spectrum(pair, 1.0)
        _check_map_residual(pair)
        times.append(k * config.dt)
        losses.append(float(theta @ p.array @ theta))
        pairs.append(pair)
        spectra.append(spectrum)
        theta = _rk4_step(a, theta, config.dt)

    if len(losses) > 1:
        effectiveness = check_effectiveness(losses, 1)
    else:
        # trace truncated before a single comparison was possible
        effectiveness = EffectivenessReport(1, False, False, False, 0)
    return TrajectoryTrace(
        times=np.array(times),
        losses=np.array(losses),
        pairs=tuple(pairs),
        spectra=tuple(spectra),
        effectiveness=effectiveness,
        truncated=truncated,
        truncation_reason=reason,
    )


def _check_map_residual(pair: UpdateGradientPair) -> None:
    # Assemble the optimal metric (uncertified: no eigensolve inside the
    # integration loop) and verify M g = y against the full matrix.
    g, y = pair.g, pair.y
    matrix = np.outer(y, y) / pair.alignment
    if pair.dim > 1:
        scale = float(np.dot(y, y)) / pair.alignment
        matrix = matrix + scale * (np.eye(pair.dim) - np.outer(g, g) / float(np.dot(g, g)))
    residual = float(np.linalg.norm(matrix @ g - y)) / float(np.linalg.norm(y))
    if residual > VALIDITY_MAP_RTOL:
        raise RuntimeError(
            f"natural-gradient residual {residual:.3e} exceeded {VALIDITY_MAP_RTOL:.1e}"
        )


@dataclass
class FaConfig:
    """Feedback-alignment training of a two-layer network.

    The forward pass is ``output = W2 act(W1 x)`` with ``act`` either the
    identity (default) or tanh; the loss is the mean over samples of
    ``1/2 |output - one_hot|^2``. The top layer updates with its true
    gradient; the hidden layer replaces the transposed forward weights with a
    fixed random backward matrix in the error signal. ``tie_backward = True``
    ties the backward matrix to the transposed forward weights on every step,
    which makes the rule exact backpropagation (control case).

    ``batch_size = None`` trains on the full dataset each step; a positive
    value draws seeded minibatches, making single steps stochastic while the
    recorded loss and true gradient stay full-dataset quantities.
    """

    seed: int = 42
    input_dim: int = 64
    hidden_dim: int = 16
    output_dim: int = 3
    dataset: str = "synthetic"            # "synthetic" | "digits"
    classes: int | None = None            # defaults to output_dim
    samples_per_class: int = 100
    cluster_spread: float = 0.6
    learning_rate: float = 0.005
    steps: int = 2000
    window_m: int = 50
    batch_size: int | None = 32
    nonlinearity: str = "linear"          # "linear" | "tanh"
    tie_backward: bool = False
    digits_path: str | None = None

    def validate(self):
        for name in ("input_dim", "hidden_dim", "output_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.steps < self.window_m or self.window_m < 1:
            raise ConfigError("need steps >= window_m >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.dataset not in ("synthetic", "digits"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.nonlinearity not in ("linear", "tanh"):
            raise ConfigError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be positive or None")
        if self.classes is not None and self.classes != self.output_dim:
            raise ConfigError("classes must equal output_dim for one-hot targets")


def _load_fa_data(config: FaConfig):
    classes = config.classes if config.classes is not None else config.output_dim
    if config.dataset == "synthetic":
        features, labels = datasets.synthetic_clusters(
            seed=config.seed,
            classes=classes,
            samples_per_class=config.samples_per_class,
            dim=config.input_dim,
            cluster_spread=config.cluster_spread,
        )
    else:
        try:
            if config.digits_path is not None:
                features, labels = datasets.load_dataset_file(config.digits_path)
            else:
                features, labels = datasets.load_bundled_digits()
        except (OSError, ValueError) as exc:
            raise ConfigError(f"could not load digit dataset: {exc}") from exc
        if features.shape[1] != config.input_dim:
            raise ConfigError(
                f"digit features have dim {features.shape[1]}, config says {config.input_dim}"
            )
        if labels.max() >= config.output_dim:
            raise ConfigError(
                f"digit labels go up to {labels.max()}, need output_dim > that"
            )
    targets = datasets.one_hot(labels, config.output_dim)
    return features, targets


def run_feedback_alignment(config: FaConfig) -> TrajectoryTrace:
    """Train with feedback alignment and record the natural-gradient pair.

    Per step the trace records the full-dataset loss, the pair
    ``g`` = flattened realized update direction (hidden weights then output
    weights, row-major) and ``y`` = negative flattened full-dataset gradient,
    and, whenever ``y.g > 0``, the closed-form spectrum of the optimal
    metric. Identical seeds give bit-identical traces.
    """
    config.validate()
    features, targets = _load_fa_data(config)
    n_samples = features.shape[0]
    rng = np.random.default_rng(config.seed + 1)

    w1 = rng.standard_normal((config.hidden_dim, config.input_dim)) / math.sqrt(config.input_dim)
    w2 = rng.standard_normal((config.output_dim, config.hidden_dim)) / math.sqrt(config.hidden_dim)
    backward = rng.standard_normal((config.hidden_dim, config.output_dim)) / math.sqrt(
        config.hidden_dim
    )
    use_tanh = config.nonlinearity == "tanh"

    def grads(x, t, w1_, w2_, b_):
        # Returns the (possibly feedback-aligned) weight gradients of the
        # mean half-squared error on batch (x, t).
        pre = x @ w1_.T
        hidden = np.tanh(pre) if use_tanh else pre
        error = hidden @ w2_.T - t            # (n, out)
        n = x.shape[0]
        grad_w2 = error.T @ hidden / n
        back = error @ b_.T                   # (n, hidden)
        if use_tanh:
            back = back * (1.0 - hidden**2)
        grad_w1 = back.T @ x / n
        return grad_w1, grad_w2

    times, losses, pairs, spectra = [], [], [], []
    for step in range(config.steps):
        b = w2.T if config.tie_backward else backward

        pre = features @ w1.T
        hidden = np.tanh(pre) if use_tanh else pre
        output = hidden @ w2.T
        loss = 0.5 * float(np.mean(np.sum((output - targets) ** 2, axis=1)))

        true_w1, true_w2 = grads(features, targets, w1, w2, w2.T)
        if config.batch_size is None or config.batch_size >= n_samples:
            fa_w1, fa_w2 = grads(features, targets, w1, w2, b)
        else:
            idx = rng.choice(n_samples, size=config.batch_size, replace=False)
            fa_w1, fa_w2 = grads(features[idx], targets[idx], w1, w2, b)

        g = -np.concatenate([fa_w1.reshape(-1), fa_w2.reshape(-1)])
        y = -np.concatenate([true_w1.reshape(-1), true_w2.reshape(-1)])

        times.append(step)
        losses.append(loss)
        if np.linalg.norm(g) > 0 and np.linalg.norm(y) > 0:
            pair = UpdateGradientPair(g=g, y=y)
            pairs.append(pair)
            spectra.append(closed_form_spectrum(pair, 1.0) if pair.is_effective else None)
        else:
            pairs.append(None)
            spectra.append(None)

        w1 = w1 - config.learning_rate * fa_w1
        w2 = w2 - config.learning_rate * fa_w2

    effectiveness = check_effectiveness(losses, config.window_m)
    return TrajectoryTrace(
        times=np.array(times, dtype=float),
        losses=np.array(losses),
        pairs=tuple(pairs),
        spectra=tuple(spectra),
        effectiveness=effectiveness,
    )
