"""Command-line front end.

Commands::

    natgrad-lens analyze       spectra for (g, y) pairs from a file
    natgrad-lens lti           stable linear system as natural gradient flow
    natgrad-lens fa            feedback-alignment training run
    natgrad-lens discrete      discrete-gradient continuum probe
    natgrad-lens effectiveness windowed-decrease report for a loss trace

Shared flags: ``--config PATH`` (flat ``key = value`` file), ``--seed N``,
``--out DIR`` (falls back to $NATGRAD_LENS_OUT, then ./natgrad-out),
``--format csv|json``, ``--gamma X``, ``--m N``, ``--svg``, and repeatable
``--set KEY=VALUE`` overrides. Precedence: command line > config file >
defaults. Every output file echoes the effective configuration including the
seed. Exit status is 0 unless a command fails; degenerate input rows are
flagged in the output, not fatal.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import fileio
from .discrete import continuum_limit_probe, quadratic_oracle, quartic_oracle
from .errors import AlignmentError, CertificateError, ConfigError, ParseError
from .experiments import FaConfig, LtiConfig, run_feedback_alignment, run_lti
from .experiments import check_effectiveness
from .metrics import UpdateGradientPair, closed_form_spectrum

OUT_ENV_VAR = "NATGRAD_LENS_OUT"
DEFAULT_OUT = "natgrad-out"


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    seed: int
    output_dir: str
    format: str


def parse_config_file(path) -> dict:
    """Flat ``key = value`` text; '#' starts a comment."""
    values = {}
    with open(path) as fh:
        for line_number, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(path, line_number, f"expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _coerce(key: str, text: str, schema: dict):
    kind = schema[key]
    if kind is bool:
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    if kind == "floats":
        return [float(v) for v in text.split(",") if v.strip()]
    if kind == "optional_int":
        return None if text.lower() in ("none", "") else int(text)
    try:
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def resolve_options(args, schema: dict, defaults: dict) -> dict:
    """Merge defaults, config file and --set overrides under the schema."""
    options = dict(defaults)
    if args.config:
        for key, text in parse_config_file(args.config).items():
            if key not in schema:
                raise ConfigError(f"unknown config key {key!r} for this command")
            options[key] = _coerce(key, text, schema)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, text = item.partition("=")
        key = key.strip()
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r} for this command")
        options[key] = _coerce(key, text.strip(), schema)
    if args.seed is not None:
        options["seed"] = args.seed
    return options


def _ensure_outdir(args) -> str:
    out = args.out or os.environ.get(OUT_ENV_VAR) or DEFAULT_OUT
    os.makedirs(out, exist_ok=True)
    probe = os.path.join(out, ".writable-probe")
    with open(probe, "w") as fh:
        fh.write("")
    os.unlink(probe)
    return out


def _spectrum_row(index: int, status: str, pair=None, spectrum=None, gamma=None) -> dict:
    row = {"index": index, "status": status, "gamma": gamma}
    if pair is not None:
        row["psi"] = pair.psi
        row["norm_ratio"] = pair.norm_ratio
    if spectrum is not None:
        row.update(
            lambda_min=spectrum.lambda_min,
            lambda_bulk=spectrum.lambda_bulk,
            lambda_max=spectrum.lambda_max,
            kappa=spectrum.kappa,
        )
    return row


def _write_table(path_base: str, fields, rows, config: dict, fmt_name: str) -> str:
    path = f"{path_base}.{fmt_name}"
    if fmt_name == "json":
        fileio.write_table_json(path, fields, rows, config)
    else:
        fileio.write_table_csv(path, fields, rows, config)
    return path


def _trace_rows(trace) -> list:
    rows = []
    for k in range(len(trace)):
        pair = trace.pairs[k]
        spectrum = trace.spectra[k]
        if pair is None:
            status = "invalid"
        elif spectrum is None:
            status = "degenerate"
        else:
            status = "ok"
        row = {
            "step": k,
            "time": float(trace.times[k]),
            "loss": float(trace.losses[k]),
            "status": status,
            "gamma": 1.0 if spectrum is not None else None,
        }
        if pair is not None:
            row["psi"] = pair.psi
            row["norm_ratio"] = pair.norm_ratio
        if spectrum is not None:
            row["lambda_min"] = spectrum.lambda_min
            row["lambda_bulk"] = spectrum.lambda_bulk
            row["lambda_max"] = spectrum.lambda_max
            row["kappa"] = spectrum.kappa
        rows.append(row)
    return rows


def _effectiveness_dict(report) -> dict:
    return {
        "window_m": report.window_m,
        "windowed_decrease_ok": report.windowed_decrease_ok,
        "avg_loss_monotone_ok": report.avg_loss_monotone_ok,
        "instantaneous_monotone_ok": report.instantaneous_monotone_ok,
        "violation_count": report.violation_count,
    }


def _spectra_svg(out_dir: str, name: str, rows) -> str | None:
    xs, mins, bulks, maxs = [], [], [], []
    for row in rows:
        if row.get("status") == "ok":
            xs.append(row.get("step", row.get("index", 0)))
            mins.append(row["lambda_min"])
            bulks.append(row["lambda_bulk"] if row.get("lambda_bulk") is not None else row["lambda_min"])
            maxs.append(row["lambda_max"])
    if not xs:
        return None
    series = {
        "lambda_max": (xs, maxs),
        "lambda_bulk": (xs, bulks),
        "lambda_min": (xs, mins),
    }
    path = os.path.join(out_dir, f"{name}_spectra.svg")
    fileio.atomic_write_text(path, fileio.svg_line_chart(series, f"{name}: metric spectrum over time"))
    return path


# ------------------------------------------------------------------ commands


ANALYZE_SCHEMA = {"input": str, "gamma": float, "seed": int}
ANALYZE_DEFAULTS = {"input": None, "gamma": 1.0, "seed": 0}


def cmd_analyze(args) -> int:
    manifest = _manifest(args, "analyze")
    options = resolve_options(args, ANALYZE_SCHEMA, ANALYZE_DEFAULTS)
    input_path = args.input or options["input"]
    if not input_path:
        print("analyze: an input pair file is required", file=sys.stderr)
        return 2
    gamma = args.gamma if args.gamma is not None else options["gamma"]
    if input_path.endswith(".json"):
        raw_pairs = fileio.read_pairs_json(input_path)
    else:
        raw_pairs = fileio.read_pairs_csv(input_path)

    rows = []
    for k, (g, y) in enumerate(raw_pairs):
        try:
            pair = UpdateGradientPair(g=g, y=y)
        except ValueError:
            rows.append(_spectrum_row(k, "invalid", gamma=None))
            continue
        if not pair.is_effective:
            rows.append(_spectrum_row(k, "degenerate", pair=pair, gamma=None))
            continue
        rows.append(_spectrum_row(k, "ok", pair=pair, spectrum=closed_form_spectrum(pair, gamma), gamma=gamma))

    config = {"command": "analyze", "input": input_path, "gamma": gamma, "seed": manifest.seed}
    fields = ("index",) + fileio.SPECTRUM_FIELDS
    path = _write_table(os.path.join(manifest.output_dir, "spectra"), fields, rows, config, manifest.format)
    if args.svg:
        _spectra_svg(manifest.output_dir, "analyze", rows)
    print(path)
    return 0


LTI_SCHEMA = {
    "dim": int, "dt": float, "t_end": float, "seed": int,
    "theta0": "floats", "a_matrix": "floats",
}
LTI_DEFAULTS = {"dim": 8, "dt": 1e-3, "t_end": 5.0, "seed": 0, "theta0": None, "a_matrix": None}


def cmd_lti(args) -> int:
    manifest = _manifest(args, "lti")
    options = resolve_options(args, LTI_SCHEMA, LTI_DEFAULTS)
    a = options["a_matrix"]
    if a is not None:
        a = np.array(a, dtype=float).reshape(options["dim"], options["dim"])
    config = LtiConfig(
        dim=options["dim"], dt=options["dt"], t_end=options["t_end"],
        seed=options["seed"], a_matrix=a,
        theta0=None if options["theta0"] is None else np.array(options["theta0"], dtype=float),
    )
    trace = run_lti(config)
    rows = _trace_rows(trace)
    echo = {
        "command": "lti", "dim": options["dim"], "dt": options["dt"],
        "t_end": options["t_end"], "seed": options["seed"],
        "truncated": trace.truncated,
    }
    path = _write_table(os.path.join(manifest.output_dir, "lti_trace"), fileio.TRACE_FIELDS, rows, echo, manifest.format)
    report = _effectiveness_dict(trace.effectiveness)
    fileio.write_report(
        os.path.join(manifest.output_dir, f"lti_effectiveness.{manifest.format}"),
        report, echo, manifest.format,
    )
    if args.svg:
        _spectra_svg(manifest.output_dir, "lti", rows)
    print(path)
    return 0


FA_SCHEMA = {
    "seed": int, "input_dim": int, "hidden_dim": int, "output_dim": int,
    "dataset": str, "samples_per_class": int, "cluster_spread": float,
    "learning_rate": float, "steps": int, "window_m": int,
    "batch_size": "optional_int", "nonlinearity": str, "tie_backward": bool,
    "digits_path": str,
}
FA_DEFAULTS = {
    "seed": 42, "input_dim": 64, "hidden_dim": 16, "output_dim": 3,
    "dataset": "synthetic", "samples_per_class": 100, "cluster_spread": 0.6,
    "learning_rate": 0.005, "steps": 2000, "window_m": 50,
    "batch_size": 32, "nonlinearity": "linear", "tie_backward": False,
    "digits_path": None,
}


def cmd_fa(args) -> int:
    manifest = _manifest(args, "fa")
    options = resolve_options(args, FA_SCHEMA, FA_DEFAULTS)
    if args.m is not None:
        options["window_m"] = args.m
    config = FaConfig(**options)
    trace = run_feedback_alignment(config)
    rows = _trace_rows(trace)
    echo = {"command": "fa", **{k: options[k] for k in sorted(options)}}
    path = _write_table(os.path.join(manifest.output_dir, "fa_trace"), fileio.TRACE_FIELDS, rows, echo, manifest.format)
    report = _effectiveness_dict(trace.effectiveness)
    fileio.write_report(
        os.path.join(manifest.output_dir, f"fa_effectiveness.{manifest.format}"),
        report, echo, manifest.format,
    )
    if args.svg:
        _spectra_svg(manifest.output_dir, "fa", rows)
    print(path)
    return 0


DISCRETE_SCHEMA = {"loss": str, "dim": int, "theta0": "floats", "etas": "floats", "seed": int}
DISCRETE_DEFAULTS = {
    "loss": "quartic", "dim": 3, "theta0": None,
    "etas": [1e-1, 1e-2, 1e-3, 1e-4, 1e-5], "seed": 0,
}


def cmd_discrete(args) -> int:
    manifest = _manifest(args, "discrete")
    options = resolve_options(args, DISCRETE_SCHEMA, DISCRETE_DEFAULTS)
    dim = options["dim"]
    if options["loss"] == "quartic":
        oracle = quartic_oracle(dim)
    elif options["loss"] == "quadratic":
        rng = np.random.default_rng(options["seed"])
        basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        curvature = (basis * rng.uniform(0.5, 3.0, size=dim)) @ basis.T
        oracle = quadratic_oracle(curvature)
    else:
        raise ConfigError(f"unknown loss {options['loss']!r} (quadratic or quartic)")
    if options["theta0"] is None:
        theta0 = np.full(dim, 0.9)
    else:
        theta0 = np.array(options["theta0"], dtype=float)
        if theta0.size != dim:
            raise ConfigError(f"theta0 has dim {theta0.size}, expected {dim}")
    probe = continuum_limit_probe(
        oracle, theta0, lambda t: -np.asarray(oracle.gradient(t)), options["etas"]
    )
    rows = []
    for row in probe.rows:
        out = {"eta": row.eta, "effective": row.effective}
        if row.effective:
            out.update(
                y_bar_gap=row.y_bar_gap,
                hessian_term=row.hessian_term,
                lambda_taylor=row.lambda_taylor,
                metric_gap=row.metric_gap,
                lambda_min=row.spectrum.lambda_min,
                lambda_bulk=row.spectrum.lambda_bulk,
                lambda_max=row.spectrum.lambda_max,
                kappa=row.spectrum.kappa,
            )
        rows.append(out)
    echo = {
        "command": "discrete", "loss": options["loss"], "dim": dim, "seed": options["seed"],
        "etas": ",".join(fileio.fmt(e) for e in options["etas"]),
    }
    fields = (
        "eta", "effective", "y_bar_gap", "hessian_term", "lambda_taylor",
        "metric_gap", "lambda_min", "lambda_bulk", "lambda_max", "kappa",
    )
    path = _write_table(os.path.join(manifest.output_dir, "discrete_probe"), fields, rows, echo, manifest.format)
    print(path)
    return 0


def cmd_effectiveness(args) -> int:
    manifest = _manifest(args, "effectiveness")
    if not args.input:
        print("effectiveness: an input loss file is required", file=sys.stderr)
        return 2
    window_m = args.m if args.m is not None else 1
    losses = _read_losses(args.input)
    report = check_effectiveness(losses, window_m)
    echo = {"command": "effectiveness", "input": args.input, "m": window_m, "seed": manifest.seed}
    path = os.path.join(manifest.output_dir, f"effectiveness.{manifest.format}")
    fileio.write_report(path, _effectiveness_dict(report), echo, manifest.format)
    print(path)
    return 0


def _read_losses(path) -> list:
    """Loss sequence from a JSON list, a trace file, or a one-column CSV."""
    if path.endswith(".json"):
        with open(path) as fh:
            payload = json.load(fh)
        if isinstance(payload, list):
            return [float(v) for v in payload]
        return [float(row["loss"]) for row in payload["rows"]]
    _, rows = fileio.read_table_csv(path)
    if rows and "loss" in rows[0]:
        return [float(row["loss"]) for row in rows]
    key = next(iter(rows[0])) if rows else None
    if key is None:
        raise ParseError(path, 0, "no loss values found")
    return [float(row[key]) for row in rows]


def _manifest(args, command: str) -> RunManifest:
    return RunManifest(
        command=command,
        config_path=args.config,
        seed=args.seed if args.seed is not None else 0,
        output_dir=_ensure_outdir(args),
        format=args.format,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="natgrad-lens",
        description="Reconstruct and analyze the metric casting a learning rule as natural gradient descent.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("analyze", "spectra for (g, y) pairs from a file"),
        ("lti", "stable linear system as natural gradient flow"),
        ("fa", "feedback-alignment training run"),
        ("discrete", "discrete-gradient continuum probe"),
        ("effectiveness", "windowed-decrease report for a loss trace"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("input", nargs="?", default=None, help="input file (analyze, effectiveness)")
        cmd.add_argument("--config", default=None, help="flat key = value config file")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--out", default=None, help=f"output dir (default ${OUT_ENV_VAR} or ./{DEFAULT_OUT})")
        cmd.add_argument("--format", choices=("csv", "json"), default="csv")
        cmd.add_argument("--gamma", type=float, default=None, help="family parameter (analyze)")
        cmd.add_argument("--m", type=int, default=None, help="effectiveness window")
        cmd.add_argument("--svg", action="store_true", help="also emit a spectra line chart")
        cmd.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    return parser


_HANDLERS = {
    "analyze": cmd_analyze,
    "lti": cmd_lti,
    "fa": cmd_fa,
    "discrete": cmd_discrete,
    "effectiveness": cmd_effectiveness,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ParseError, ConfigError, AlignmentError, CertificateError, OSError, ValueError) as exc:
        print(f"natgrad-lens {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
