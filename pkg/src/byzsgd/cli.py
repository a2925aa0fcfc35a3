"""Command line: ``byzsgd run``, ``byzsgd check`` and ``byzsgd toy``.

Exit codes: 0 success (a diverged run still counts), 1 toy mismatch,
2 configuration error, 3 file I/O error.
"""

import argparse
import sys

import numpy as np

from .aggregation import CoordinateWiseMedian, Krum, krum_scores
from .config import ConfigError, load_config
from .exceptions import ConfigurationError
from .metrics_csv import format_metrics
from .simulator import run_experiment
from .tolerance import build_krum_attack_instance, check_tolerance, median_attack_condition

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

MEDIAN_TOY_INPUTS = [-0.1, 0.1, 0.3, -4.0, -2.0]
MEDIAN_TOY_EXPECTED = -0.1
KRUM_TOY_INPUTS = [-0.1, -0.1, -0.1, 0.0, 0.02, 0.14, 0.26, 0.38, 0.5]
KRUM_TOY_Q = 3
KRUM_TOY_SCORES = [0.0244, 0.0244, 0.0244, 0.0304, 0.0436, 0.1060, 0.1440, 0.2160, 0.4320]
KRUM_TOY_EXPECTED = -0.1
TOY_TOLERANCE = 1e-12


def _yes(flag):
    return "yes" if flag else "no"


def _fmt(x):
    return f"{x:.17g}"


def cmd_run(config_path, output_path="-", seed=None, out=None):
    out = out or sys.stdout
    try:
        loaded = load_config(config_path, seed=seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    trace = run_experiment(loaded.experiment)
    text = format_metrics(trace)
    if output_path in (None, "-"):
        out.write(text)
    else:
        try:
            with open(output_path, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error: cannot write output: {exc}", file=sys.stderr)
            return EXIT_IO
    if trace.diverged:
        print(f"run diverged at iteration {trace.metrics[-1].iteration}", file=sys.stderr)
    return EXIT_OK


def _report_tolerance(loaded, trials, out):
    exp, chk = loaded.experiment, loaded.check
    g = chk.g if chk.g is not None else exp.problem.full_gradient(exp.initial_point())
    sigma = chk.sigma if chk.sigma is not None else getattr(exp.problem, "sigma", 1.0)
    trials = trials or chk.trials
    verdict = check_tolerance(exp.rule, exp.attack, g, sigma, exp.m, exp.q, trials=trials,
                              seed=exp.seed, confidence=chk.confidence)
    lines = [
        ("mode", "tolerance"),
        ("rule", exp.rule.name),
        ("attack", exp.attack.name),
        ("epsilon", _fmt(getattr(exp.attack, "epsilon", 0.0))),
        ("m", exp.m),
        ("q", exp.q),
        ("sigma", _fmt(sigma)),
        ("g_norm", _fmt(float(np.linalg.norm(g)))),
        ("trials", verdict.trials),
        ("inner_product", _fmt(verdict.inner_product_with_g)),
        ("standard_error", _fmt(verdict.standard_error)),
        ("z_score", _fmt(verdict.z_score)),
        ("confidence", _fmt(verdict.confidence)),
        ("upper_bound", _fmt(verdict.upper_bound)),
        ("tolerant", _yes(verdict.tolerant)),
    ]
    if exp.m - exp.q >= 2 and sigma > 0:
        cond = median_attack_condition(g, sigma, exp.m, exp.q)
        lines += [("median_condition", _yes(cond.holds)),
                  ("median_condition_margin", _fmt(cond.margin))]
    for k, v in lines:
        print(f"{k}: {v}", file=out)
    return EXIT_OK


def _report_krum_instance(loaded, out):
    exp = loaded.experiment
    eps = getattr(exp.attack, "epsilon", 0.0)
    inst = build_krum_attack_instance(exp.m, exp.q, eps, exp.problem.dimension, seed=exp.seed)
    r = inst.report
    lines = [
        ("mode", "krum_instance"),
        ("m", exp.m),
        ("q", exp.q),
        ("epsilon", _fmt(eps)),
        ("d", exp.problem.dimension),
        ("mean_norm_sq", _fmt(float(r.honest_mean @ r.honest_mean))),
        ("beta_sq", _fmt(r.beta_sq)),
        ("radius_ok", _yes(r.radius_ok)),
        ("distinct_ok", _yes(r.distinct_ok)),
        ("epsilon_ok", _yes(r.epsilon_ok)),
        ("size_ok", _yes(r.size_ok)),
        ("krum_score_gap", _fmt(r.krum_score_gap)),
        ("selected_index", r.selected_index),
        ("selected", "byzantine" if r.selected_is_byzantine else "correct"),
        ("inner_product_with_mean", _fmt(r.inner_product_with_mean)),
    ]
    for k, v in lines:
        print(f"{k}: {v}", file=out)
    return EXIT_OK


def cmd_check(config_path, trials=None, seed=None, out=None):
    out = out or sys.stdout
    try:
        loaded = load_config(config_path, seed=seed)
        if loaded.check.mode == "krum_instance":
            return _report_krum_instance(loaded, out)
        return _report_tolerance(loaded, trials, out)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO


def cmd_toy(out=None):
    """Recompute both one-dimensional toy examples and compare them with the
    published values."""
    out = out or sys.stdout
    ok = True

    med = float(CoordinateWiseMedian().aggregate(MEDIAN_TOY_INPUTS).aggregate[0])
    good = abs(med - MEDIAN_TOY_EXPECTED) <= TOY_TOLERANCE
    ok &= good
    print(f"Median = {med:g} (expected {MEDIAN_TOY_EXPECTED:g})"
          + ("" if good else f"  MISMATCH diff={med - MEDIAN_TOY_EXPECTED:.3g}"), file=out)

    scores = krum_scores(KRUM_TOY_INPUTS, KRUM_TOY_Q)
    for x, got, want in zip(KRUM_TOY_INPUTS, scores, KRUM_TOY_SCORES):
        good = abs(got - want) <= TOY_TOLERANCE
        ok &= good
        print(f"KR({x:g}) = {got:.4f} (expected {want:.4f})"
              + ("" if good else f"  MISMATCH diff={got - want:.3g}"), file=out)
    chosen = float(Krum(KRUM_TOY_Q).aggregate(KRUM_TOY_INPUTS).aggregate[0])
    good = abs(chosen - KRUM_TOY_EXPECTED) <= TOY_TOLERANCE
    ok &= good
    print(f"Krum = {chosen:g} (expected {KRUM_TOY_EXPECTED:g})"
          + ("" if good else f"  MISMATCH diff={chosen - KRUM_TOY_EXPECTED:.3g}"), file=out)
    return EXIT_OK if ok else EXIT_MISMATCH


def build_parser():
    parser = argparse.ArgumentParser(prog="byzsgd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one experiment and write per-iteration CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    p.add_argument("--seed", type=int, default=None, help="override run.seed")

    p = sub.add_parser("check", help="tolerance verdict or Krum attack instance report")
    p.add_argument("--config", required=True)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    sub.add_parser("toy", help="reproduce the one-dimensional toy examples")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out, seed=args.seed)
    if args.command == "check":
        return cmd_check(args.config, trials=args.trials, seed=args.seed)
    return cmd_toy()


if __name__ == "__main__":
    sys.exit(main())
