"""``symloss`` command-line interface.

Exit codes: 0 success, 1 a requested check failed, 2 usage or config
error, 3 training aborted on a non-finite loss, 4 degenerate problem.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import centroid as cen
from . import regression as reg
from . import verify
from .data import (
    LabeledDataset,
    SyntheticSpec,
    gaussian_blobs,
    load_classification_csv,
    load_regression_csv,
    save_classification_csv,
)
from .experiment import SEED_ENV_VAR, ConfigError, load_config, robustness_comparison, run_experiment
from .losses import LOSS_NAMES, make_loss
from .model import TrainingAborted
from .numerics import InvalidArgumentError
from .schemas import CENTROID_SCHEMA_VERSION, REGRESS_SCHEMA_VERSION, SYMCHECK_SCHEMA_VERSION

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_DEGENERATE = 4

CHECKS = ("symmetry", "permutation", "gradient", "non_increasing", "local_unhinged")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _emit(obj, path) -> None:
    text = _dump(obj)
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _fail(message: str, code: int) -> int:
    print(f"symloss: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# symcheck
# ---------------------------------------------------------------------------


def cmd_symcheck(args) -> int:
    params = {}
    if args.q is not None:
        params["q"] = args.q
    if args.alpha is not None:
        params["alpha"] = args.alpha
    if args.base is not None:
        params["base"] = args.base
    try:
        loss = make_loss(args.loss, args.classes, **params)
    except KeyError as exc:
        return _fail(exc.args[0], EXIT_USAGE)
    except InvalidArgumentError as exc:
        return _fail(str(exc), EXIT_USAGE)
    checks = [c.strip() for c in args.checks.split(",") if c.strip()]
    unknown = [c for c in checks if c not in CHECKS]
    if unknown or not checks:
        return _fail(f"unknown check(s) {unknown}; choose from {', '.join(CHECKS)}", EXIT_USAGE)
    seed = _resolve_seed(args.seed, 0)
    probes = {} if args.probes is None else {"probes": args.probes}
    reports = []
    for name in checks:
        if name == "symmetry":
            reports.append(verify.check_symmetry(loss, seed=seed, **probes))
        elif name == "permutation":
            reports.append(verify.check_permutation_invariance(loss, seed=seed, **probes))
        elif name == "gradient":
            reports.append(verify.check_gradient(loss, seed=seed, **probes))
        elif name == "non_increasing":
            reports.append(verify.check_non_increasing(loss, seed=seed, **probes))
        else:
            reports.append(verify.check_local_unhinged(loss, 0.0))
    for r in reports:
        print(r.to_text(), file=sys.stderr)
    passed = all(r.passed for r in reports)
    _emit({
        "schema": SYMCHECK_SCHEMA_VERSION,
        "loss": loss.name,
        "num_classes": loss.num_classes,
        "params": params,
        "passed": passed,
        "reports": [r.to_record() for r in reports],
    }, args.output)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _resolve_seed(flag, fallback):
    """Flag beats the environment variable, which beats the fallback."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV_VAR, "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return fallback


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _curve_rows(record):
    keys = ("epoch", "lr", "mean_train_loss", "train_accuracy", "test_accuracy", "max_grad_norm")
    return keys, [[e[k] for k in keys] for e in record.epochs]


def _write_outputs(record, record_path: Path, curve_path: Path) -> None:
    record_path.write_text(record.to_json() + "\n")
    keys, rows = _curve_rows(record)
    with open(curve_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def cmd_train(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_USAGE)
    config_path = Path(args.config)
    record_path = Path(args.output or cfg.record_path or config_path.with_suffix(".record.json"))
    curve_path = Path(args.curve or cfg.curve_path or config_path.with_suffix(".curve.csv"))
    try:
        record = run_experiment(cfg)
    except TrainingAborted as exc:
        _write_outputs(exc.record, record_path, curve_path)
        return _fail(f"training aborted: {exc}", EXIT_NUMERICAL)
    except (InvalidArgumentError, KeyError, OSError) as exc:
        return _fail(f"invalid experiment: {exc}", EXIT_USAGE)
    _write_outputs(record, record_path, curve_path)
    acc = record.final_test_accuracy
    print("final clean-test accuracy: " + ("n/a (0 epochs)" if acc is None else f"{acc:.4f}"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# centroid
# ---------------------------------------------------------------------------


def cmd_centroid(args) -> int:
    if not args.radius > 0:
        return _fail("--radius must be positive", EXIT_USAGE)
    try:
        data = load_classification_csv(args.dataset, args.classes)
    except (InvalidArgumentError, OSError) as exc:
        return _fail(str(exc), EXIT_USAGE)
    mu = cen.compute_centroid(data, bias=args.bias)
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.dataset).parent
    stem = Path(args.dataset).stem
    cen.export_centroid_csv(mu, out_dir / f"{stem}.centroid.csv")
    try:
        W = cen.closed_form_linear_solution(mu, args.radius)
    except cen.DegenerateProblemError as exc:
        return _fail(str(exc), EXIT_DEGENERATE)
    # compare the trace form against a direct average at the returned solution
    direct = cen.empirical_unhinged_loss(W, data, bias=args.bias)
    via_trace = cen.empirical_unhinged_loss_via_trace(W, mu)
    Psi = cen.feature_matrix(data, bias=args.bias)
    alignment = cen.kernel_alignment(LabeledDataset(Psi, data.labels, data.num_classes))
    result = {
        "schema": CENTROID_SCHEMA_VERSION,
        "num_classes": data.num_classes,
        "num_examples": len(data),
        "bias": bool(args.bias),
        "radius": float(args.radius),
        "centroid": mu.tolist(),
        "centroid_norm": float(np.linalg.norm(mu)),
        "weights": W.tolist(),
        "trace_identity_residual": abs(direct - via_trace),
        "kernel_alignment": alignment,
        "kkt_residual": cen.kkt_residual(W, mu, args.radius),
    }
    _emit(result, args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# regress
# ---------------------------------------------------------------------------


def cmd_regress(args) -> int:
    if not args.lam > 0:
        return _fail("--lam must be positive", EXIT_USAGE)
    if args.loss_kind == "clipped" and (args.delta is None or not args.delta > 0):
        return _fail("--loss-kind clipped needs --delta > 0", EXIT_USAGE)
    try:
        density = reg.CorruptionDensity.parse(args.density)
        data = load_regression_csv(args.dataset)
    except (InvalidArgumentError, OSError) as exc:
        return _fail(str(exc), EXIT_USAGE)
    delta = args.delta if args.loss_kind == "clipped" else None
    w = reg.closed_form_regression_weights(data.features, data.targets, lam=args.lam,
                                           loss_kind=args.loss_kind, delta=delta)
    residual = reg.stationarity_residual(w, data.features, data.targets, lam=args.lam,
                                         loss_kind=args.loss_kind, delta=delta)
    if args.loss_kind == "clipped":
        def f(t):
            return np.clip(t, -delta, delta)
        f.__name__ = f"clip_{delta:g}"
    else:
        def f(t):
            return t
        f.__name__ = "identity"
    report = reg.check_linear_symmetry(f, density)
    print(report.to_text(), file=sys.stderr)
    _emit({
        "schema": REGRESS_SCHEMA_VERSION,
        "loss_kind": args.loss_kind,
        "delta": delta,
        "lam": float(args.lam),
        "density": args.density,
        "weights": w.tolist(),
        "stationarity_residual": residual,
        "symmetry": report.to_record(),
    }, args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# data generation and the robustness experiment
# ---------------------------------------------------------------------------


def cmd_gen_blobs(args) -> int:
    try:
        spec = SyntheticSpec(args.classes, args.per_class, args.dim, args.radius, args.stddev,
                             _resolve_seed(args.seed, 0))
    except InvalidArgumentError as exc:
        return _fail(str(exc), EXIT_USAGE)
    save_classification_csv(gaussian_blobs(spec, args.stream), args.output)
    return EXIT_OK


def cmd_robustness(args) -> int:
    result = robustness_comparison()
    for entry in result["losses"]:
        means = entry["mean_accuracy"]
        print(f"{entry['label']:>16}  " + "  ".join(f"eta={k}: {v:.4f}" for k, v in means.items())
              + f"  drop={entry['drop']:.4f}", file=sys.stderr)
    _emit(result, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="symloss", description="Symmetric losses: property checks, training, closed forms.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("symcheck", help="run property checks on a loss")
    s.add_argument("--loss", required=True, help=f"one of {', '.join(LOSS_NAMES)}, optionally sym_-prefixed")
    s.add_argument("--classes", type=int, default=10)
    s.add_argument("--q", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--base", help="base loss for dirichlet")
    s.add_argument("--probes", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--checks", default="symmetry,permutation,gradient",
                   help=f"comma-separated subset of {', '.join(CHECKS)}")
    s.add_argument("--output", help="write the JSON report here instead of stdout")
    s.set_defaults(func=cmd_symcheck)

    t = sub.add_parser("train", help="corrupt, train and evaluate from a config file")
    t.add_argument("config")
    t.add_argument("--seed", type=int, help=f"overrides {SEED_ENV_VAR} and the config seed")
    t.add_argument("--output", help="TrainRecord JSON path")
    t.add_argument("--curve", help="per-epoch CSV path")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("centroid", help="unhinged centroid and closed-form linear solution")
    c.add_argument("dataset")
    c.add_argument("--radius", type=float, default=1.0)
    c.add_argument("--bias", action="store_true", help="append a constant-1 feature")
    c.add_argument("--classes", type=int, help="number of classes (default: max label + 1)")
    c.add_argument("--out-dir", help="directory for the centroid CSV (default: next to the dataset)")
    c.add_argument("--output", help="write the JSON result here instead of stdout")
    c.set_defaults(func=cmd_centroid)

    r = sub.add_parser("regress", help="closed-form symmetric linear regression")
    r.add_argument("dataset")
    r.add_argument("--loss-kind", choices=("unhinged", "clipped"), default="unhinged")
    r.add_argument("--delta", type=float)
    r.add_argument("--lam", type=float, default=1.0)
    r.add_argument("--density", default="uniform:1", help="uniform:HALF_WIDTH or gaussian:MEAN:SIGMA")
    r.add_argument("--output")
    r.set_defaults(func=cmd_regress)

    g = sub.add_parser("gen-blobs", help="write a Gaussian-blob classification CSV")
    g.add_argument("output")
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--per-class", type=int, default=1000)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--radius", type=float, default=4.0)
    g.add_argument("--stddev", type=float, default=1.0)
    g.add_argument("--seed", type=int)
    g.add_argument("--stream", type=int, default=0)
    g.set_defaults(func=cmd_gen_blobs)

    b = sub.add_parser("robustness", help="run the desk-scale label-noise comparison")
    b.add_argument("--output")
    b.set_defaults(func=cmd_robustness)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
