"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete.
"""

import time

import numpy as np
import pytest

import natgrad_lens as ngl
from natgrad_lens.cli import main as cli_main
from natgrad_lens.fileio import (
    read_report,
    read_table_csv,
    read_table_json,
    write_pairs_csv,
)
from conftest import (
    bisect_expansion_root,
    make_pair,
    pair_at_angle,
    random_valid_metric_matrix,
    settle_certified_rate,
)

SWEEP_DIMS = (1, 2, 3, 5, 10, 50)
SWEEP_GAMMAS = (0.01, 0.1, 1.0, 10.0, 100.0)
SWEEP_PAIRS = 500


def report(number, name, detail=""):
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {number:02d} {name}: PASS{suffix}")


class SweepRecord:
    __slots__ = ("pair", "gamma", "map_residual", "min_eigenvalue", "symmetric", "eigs", "spectrum")

    def __init__(self, pair, gamma, metric, eigs, spectrum):
        self.pair = pair
        self.gamma = gamma
        self.map_residual = metric.map_residual
        self.min_eigenvalue = metric.min_eigenvalue
        self.symmetric = bool(np.array_equal(metric.matrix.array, metric.matrix.array.T))
        self.eigs = eigs
        self.spectrum = spectrum


@pytest.fixture(scope="module")
def sweep():
    """500 seeded pairs spread over the dims, one family metric per gamma."""
    rng = np.random.default_rng(1234)
    pairs = [make_pair(rng, SWEEP_DIMS[k % len(SWEEP_DIMS)]) for k in range(SWEEP_PAIRS)]
    records = []
    start = time.perf_counter()
    for pair in pairs:
        for gamma in SWEEP_GAMMAS:
            metric = ngl.build_family_metric(pair, gamma)
            eigs = ngl.sym_eigen(metric.matrix).eigenvalues
            records.append(SweepRecord(pair, gamma, metric, eigs, ngl.closed_form_spectrum(pair, gamma)))
    elapsed = time.perf_counter() - start
    return pairs, records, elapsed


def test_criterion_01_metric_correctness(sweep):
    pairs, records, elapsed = sweep
    assert len(pairs) == SWEEP_PAIRS
    for record in records:
        assert record.map_residual <= 1e-10
        assert record.symmetric
        assert record.min_eigenvalue > 0
    assert elapsed < 10.0, f"sweep took {elapsed:.2f}s"
    report(1, "metric-correctness", f"{len(records)} metrics in {elapsed:.2f}s")


def test_criterion_02_closed_form_spectrum(sweep):
    _, records, _ = sweep
    for record in records:
        spectrum = record.spectrum
        eigs = record.eigs
        assert spectrum.lambda_min == pytest.approx(eigs[0], rel=1e-9)
        assert spectrum.lambda_max == pytest.approx(eigs[-1], rel=1e-9)
        if record.pair.dim >= 3:
            bulk = eigs[1:-1]
            assert bulk.size == record.pair.dim - 2
            assert np.allclose(bulk, spectrum.lambda_bulk, rtol=1e-9, atol=0.0)
    report(2, "closed-form-spectrum", f"{len(records)} spectra matched at 1e-9")


def test_criterion_03_optimal_condition_number(sweep):
    pairs, records, _ = sweep
    # closed-form kappa formula against the numerical spectrum, all pairs
    for record in records:
        if record.gamma == 1.0 and record.pair.dim >= 2:
            numeric = record.eigs[-1] / record.eigs[0]
            formula = ngl.condition_number_bound(record.pair.psi)
            assert numeric == pytest.approx(formula, rel=1e-9)
    # optimal member never loses to another family member (numeric kappas)
    by_pair = {}
    for record in records:
        by_pair.setdefault(id(record.pair), {})[record.gamma] = record.eigs[-1] / record.eigs[0]
    for kappas in by_pair.values():
        for gamma, kappa in kappas.items():
            assert kappas[1.0] <= kappa + 1e-9
    # nor to random canonical metrics: 1000 per pair on a 25-pair subset
    rng = np.random.default_rng(99)
    subset = [p for p in pairs if 2 <= p.dim <= 10][:25]
    assert len(subset) == 25
    checked = 0
    for pair in subset:
        kappa_opt = ngl.condition_number_bound(pair.psi)
        dim = pair.dim
        for _ in range(1000):
            weights = np.exp(rng.uniform(np.log(0.05), np.log(20.0), size=dim - 1))
            rotation = None
            if dim > 2 and checked % 3 == 0:
                rotation, _ = np.linalg.qr(rng.standard_normal((dim - 1, dim - 1)))
            metric = ngl.build_canonical_metric(pair, weights=weights, complement_rotation=rotation)
            eigs = ngl.sym_eigen(metric.matrix).eigenvalues
            assert kappa_opt <= eigs[-1] / eigs[0] + 1e-9
            checked += 1
    # spot values
    assert ngl.condition_number_bound(np.pi / 6) == pytest.approx(3.0, rel=1e-9)
    assert ngl.condition_number_bound(0.0) == pytest.approx(1.0, rel=1e-9)
    spot = ngl.closed_form_spectrum(pair_at_angle(np.pi / 6), 1.0)
    assert spot.kappa == pytest.approx(3.0, rel=1e-9)
    report(3, "optimal-condition-number", f"{checked} random metrics never beat gamma = 1")


def test_criterion_04_strict_eigenvalue_bounds(sweep):
    pairs, records, _ = sweep
    # strictness for every sampled metric (dim 1 is the equality case: there
    # the update direction is an eigenvector and the bounds are attained)
    for record in records:
        if record.pair.dim == 1:
            continue
        bounds = ngl.extreme_eigenvalue_bounds(record.pair)
        assert record.eigs[0] < bounds.sup_lambda_min
        assert record.eigs[-1] > bounds.inf_lambda_max
    # monotone approach along gamma ladders
    for pair in pairs:
        if pair.dim == 1:
            continue
        bounds = ngl.extreme_eigenvalue_bounds(pair)
        min_gaps = [
            bounds.sup_lambda_min - ngl.closed_form_spectrum(pair, 10.0**k).lambda_min
            for k in range(4)
        ]
        max_gaps = [
            ngl.closed_form_spectrum(pair, 10.0**-k).lambda_max - bounds.inf_lambda_max
            for k in range(4)
        ]
        assert all(g > 0 for g in min_gaps)
        assert all(g > 0 for g in max_gaps)
        assert all(b < a for a, b in zip(min_gaps, min_gaps[1:]))
        assert all(b < a for a, b in zip(max_gaps, max_gaps[1:]))
    report(4, "strict-eigenvalue-bounds")


def test_criterion_05_canonical_form():
    rng = np.random.default_rng(555)
    for k in range(200):
        dim = int(rng.integers(2, 9))
        pair = make_pair(rng, dim, ratio_range=(0.5, 2.0))
        matrix = random_valid_metric_matrix(rng, pair)
        metric = ngl.metric_from_matrix(pair, matrix)
        decomp = ngl.canonical_decomposition(metric)
        assert decomp.residual_on_g <= 1e-10
        assert decomp.min_eig_on_complement > 0
    report(5, "canonical-form", "200 conjugated metrics decomposed")


def test_criterion_06_discrete_gradient_identity():
    rng = np.random.default_rng(777)
    # quadratic oracle; rates below the curvature threshold keep descent steps effective
    raw = rng.standard_normal((4, 4))
    curvature = raw @ raw.T + 4.0 * np.eye(4)
    quad = ngl.quadratic_oracle(curvature)
    eta_cap = 0.8 / np.linalg.eigvalsh(curvature).max()
    for _ in range(25):
        theta = rng.standard_normal(4)
        grad = np.asarray(quad.gradient(theta))
        step = ngl.DiscreteStep.from_direction(theta, -grad, float(rng.uniform(0.1, 1.0) * eta_cap))
        result = ngl.discrete_gradient(quad, step)
        delta = quad.value(step.theta_next) - quad.value(step.theta_t)
        assert abs(float(step.displacement @ -result.y_bar) - delta) <= 1e-9
    # quartic oracle
    quartic = ngl.quartic_oracle(3)
    for _ in range(25):
        theta = rng.uniform(0.5, 1.5, size=3)
        grad = np.asarray(quartic.gradient(theta))
        step = ngl.DiscreteStep.from_direction(theta, -grad, float(rng.uniform(0.005, 0.05)))
        result = ngl.discrete_gradient(quartic, step)
        delta = quartic.value(step.theta_next) - quartic.value(step.theta_t)
        assert abs(float(step.displacement @ -result.y_bar) - delta) <= 1e-9
    # interior-point example against the independent bisection oracle
    scalar_quartic = ngl.quartic_oracle(1)
    theta, p = np.array([1.0]), np.array([-0.5])
    oracle_root = bisect_expansion_root(scalar_quartic, theta, p)
    lam = ngl.taylor_lambda(scalar_quartic, theta, p)
    assert abs(lam - oracle_root) <= 1e-6
    assert oracle_root == pytest.approx(0.3167491769396535, abs=1e-9)
    report(6, "discrete-gradient-identity", f"interior point {lam:.7f}")


def test_criterion_07_discrete_natural_gradient():
    # two nonconvex 2-D losses with known negative curvature h = 0.5
    saddle = ngl.quadratic_oracle(np.diag([1.0, -1.0]))
    theta_a = np.array([1.0, 0.3])
    quartic_saddle = ngl.LossOracle(
        dim=2,
        value=lambda t: float(t[0] ** 4 - 0.5 * t[1] ** 2),
        gradient=lambda t: np.array([4.0 * t[0] ** 3, -t[1]]),
        hessian=lambda t: np.diag([12.0 * t[0] ** 2, -1.0]),
    )
    theta_b = np.array([1.0, 0.5])
    for oracle, theta in ((saddle, theta_a), (quartic_saddle, theta_b)):
        grad = np.asarray(oracle.gradient(theta))
        eta, combined, step = settle_certified_rate(oracle, theta, -grad)
        assert combined.is_pd
        reconstructed = -np.linalg.solve(combined.matrix.array, grad)
        assert np.linalg.norm(reconstructed - step.g) <= 1e-8 * np.linalg.norm(step.g)
    # continuum probe on the nonconvex quartic: first-order gap in eta
    probe = ngl.continuum_limit_probe(
        quartic_saddle,
        theta_b,
        lambda t: -np.asarray(quartic_saddle.gradient(t)),
        [1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
    )
    slope = probe.gap_slope()
    assert 0.9 <= slope <= 1.1
    report(7, "discrete-natural-gradient", f"gap slope {slope:.3f}")


def test_criterion_08_stochastic_average():
    rng = np.random.default_rng(2468)
    raw = rng.standard_normal((5, 5))
    curvature = raw @ raw.T + 5.0 * np.eye(5)
    oracle = ngl.quadratic_oracle(curvature)
    theta = rng.standard_normal(5)
    grad = np.asarray(oracle.gradient(theta))
    eta = 0.01
    half = 0.5 * curvature
    samples = []
    for _ in range(1000):
        g = -grad + 0.1 * rng.standard_normal(5)
        samples.append(
            ngl.StochasticSample(g=g, y_bar=-grad - eta * (half @ g), hg=half @ g)
        )
    stochastic = ngl.stochastic_average_metric(samples, eta)
    assert stochastic.is_pd
    g_mean = np.mean([s.g for s in samples], axis=0)
    recovered = -np.linalg.solve(stochastic.matrix.array, grad)
    gap = np.linalg.norm(recovered - g_mean) / np.linalg.norm(g_mean)
    assert gap <= 1e-6
    report(8, "stochastic-average", f"mean-update gap {gap:.2e}")


def test_criterion_09_lti_experiment():
    start = time.perf_counter()
    config = ngl.LtiConfig(dim=8, dt=1e-3, t_end=5.0, seed=17)
    trace = ngl.run_lti(config)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"run took {elapsed:.2f}s"

    a, _ = config.resolve()
    p = ngl.solve_lyapunov(a, ngl.SymMatrix(np.eye(8)))
    residual = np.abs(p.array @ a + a.T @ p.array + np.eye(8)).max()
    assert residual <= 1e-9
    assert np.all(np.diff(trace.losses) < 0)
    for k, pair in enumerate(trace.pairs):
        matrix = ngl.build_family_metric(pair, 1.0).matrix.array
        map_gap = np.linalg.norm(matrix @ pair.g - pair.y) / np.linalg.norm(pair.y)
        assert map_gap <= 1e-8
        if k % 500 == 0:
            # inverse form: -M^{-1} grad L reproduces the flow direction
            recovered = np.linalg.solve(matrix, pair.y)
            assert np.linalg.norm(recovered - pair.g) <= 1e-8 * np.linalg.norm(pair.g)

    flow = ngl.run_lti(
        ngl.LtiConfig(dim=2, dt=1e-2, t_end=1.0, a_matrix=-np.eye(2), theta0=np.array([1.0, 0.5]))
    )
    for spectrum in flow.spectra:
        assert spectrum.lambda_min == pytest.approx(1.0, abs=1e-12)
        assert spectrum.lambda_max == pytest.approx(1.0, abs=1e-12)
    report(9, "lti-experiment", f"{len(trace)} steps in {elapsed:.2f}s")


def test_criterion_10_feedback_alignment():
    start = time.perf_counter()
    trace = ngl.run_feedback_alignment(ngl.FaConfig())  # seed 42, 2000 steps, m = 50
    effectiveness = trace.effectiveness
    assert effectiveness.window_m == 50
    assert effectiveness.windowed_decrease_ok
    assert effectiveness.avg_loss_monotone_ok
    increases = int(np.sum(np.diff(trace.losses) > 0))
    assert increases >= 1
    assert not effectiveness.instantaneous_monotone_ok

    control = ngl.run_feedback_alignment(
        ngl.FaConfig(steps=300, window_m=50, batch_size=None, tie_backward=True)
    )
    # tied backward weights make the update the exact gradient, so the angle
    # vanishes identically (bitwise-equal vectors)
    worst = max(pair.psi for pair in control.pairs)
    assert worst <= 1e-12
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"runs took {elapsed:.2f}s"
    report(10, "feedback-alignment", f"{increases} setbacks, control angle <= {worst:.1e}")


def test_criterion_11_cli_round_trip(tmp_path):
    out = tmp_path / "out"
    rng = np.random.default_rng(31415)

    # analyze: 100 random rows plus a degenerate one
    pairs = [(p.g, p.y) for p in (make_pair(rng, 4) for _ in range(100))]
    pairs.append((np.array([1.0, 0, 0, 0]), np.array([0, 1.0, 0, 0])))
    pair_file = tmp_path / "pairs.csv"
    write_pairs_csv(pair_file, pairs)
    assert cli_main(["analyze", str(pair_file), "--out", str(out), "--format", "csv"]) == 0
    _, rows = read_table_csv(out / "spectra.csv")
    assert len(rows) == 101
    degenerate = [r for r in rows if r["status"] == "degenerate"]
    assert len(degenerate) == 1 and degenerate[0]["lambda_max"] is None
    for row in rows:
        if row["status"] != "ok":
            continue
        pair = ngl.UpdateGradientPair(*pairs[int(row["index"])])
        spectrum = ngl.closed_form_spectrum(pair, 1.0)
        assert row["lambda_min"] == spectrum.lambda_min
        assert row["lambda_bulk"] == spectrum.lambda_bulk
        assert row["lambda_max"] == spectrum.lambda_max
        assert row["kappa"] == spectrum.kappa

    # lti: emitted rows re-parse equal across formats and match a rerun
    lti_cfg = tmp_path / "lti.cfg"
    lti_cfg.write_text("dim = 3\ndt = 0.001\nt_end = 0.5\nseed = 9\n")
    assert cli_main(["lti", "--config", str(lti_cfg), "--out", str(out), "--format", "csv"]) == 0
    assert cli_main(["lti", "--config", str(lti_cfg), "--out", str(out), "--format", "json"]) == 0
    _, csv_rows = read_table_csv(out / "lti_trace.csv")
    _, json_rows = read_table_json(out / "lti_trace.json")
    rerun = ngl.run_lti(ngl.LtiConfig(dim=3, dt=0.001, t_end=0.5, seed=9))
    assert len(csv_rows) == len(json_rows) == len(rerun)
    for k, (a, b) in enumerate(zip(csv_rows, json_rows)):
        for key in ("time", "loss", "psi", "lambda_min", "lambda_bulk", "lambda_max", "kappa"):
            assert a[key] == b[key]
        assert a["loss"] == float(rerun.losses[k])
        assert a["lambda_max"] == rerun.spectra[k].lambda_max

    # fa: small run, both formats agree, effectiveness report round-trips
    fa_cfg = tmp_path / "fa.cfg"
    fa_cfg.write_text(
        "steps = 80\nwindow_m = 10\ninput_dim = 8\nhidden_dim = 4\nsamples_per_class = 20\nseed = 5\n"
    )
    assert cli_main(["fa", "--config", str(fa_cfg), "--out", str(out), "--format", "csv"]) == 0
    assert cli_main(["fa", "--config", str(fa_cfg), "--out", str(out), "--format", "json"]) == 0
    _, fa_csv = read_table_csv(out / "fa_trace.csv")
    _, fa_json = read_table_json(out / "fa_trace.json")
    for a, b in zip(fa_csv, fa_json):
        assert a["loss"] == b["loss"]
        assert a["status"] == ("ok" if b["status"] == "ok" else a["status"])
    _, rep_csv = read_report(out / "fa_effectiveness.csv", "csv")
    _, rep_json = read_report(out / "fa_effectiveness.json", "json")
    assert str(rep_json["windowed_decrease_ok"]) == rep_csv["windowed_decrease_ok"]

    # effectiveness on the emitted fa trace
    assert cli_main(
        ["effectiveness", str(out / "fa_trace.csv"), "--m", "10", "--out", str(out), "--format", "json"]
    ) == 0
    _, rep = read_report(out / "effectiveness.json", "json")
    assert rep["window_m"] == 10
    report(11, "cli-round-trip", "analyze/lti/fa/effectiveness all bit-exact")
