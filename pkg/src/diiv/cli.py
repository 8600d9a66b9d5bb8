"""Command-line front end: ``diiv estimate | simulate | shares``.

Exit codes: 0 success, 1 estimation error, 2 input error.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path
from typing import Any

from .errors import DiivError, RelevanceViolated, SchemaError
from .estimand import (
    DirectedDesign,
    aligned_cell_means,
    diiv_estimate,
    diiv_from_cells,
    edge_contrasts,
    pooled_iv,
)
from .io import ConfigError, dump_json, fmt, format_kv, load_config, read_table, write_table
from .microsim import QUANTILES, analytic_shares, overidentified_iv, run_monte_carlo, simulate_trial
from .table import ObservationTable
from .twostage import two_stage_joint, two_stage_parallel

EXIT_OK, EXIT_ESTIMATION, EXIT_INPUT = 0, 1, 2


def _companion(out: dict, key: str, fn, notes: list[str]) -> None:
    try:
        out[key] = fn()
    except DiivError as exc:
        notes.append(f"{key} unavailable: {type(exc).__name__}")


def estimate_report(
    table: ObservationTable,
    design: str | None = None,
    directives: DirectedDesign | None = None,
    covariates=(),
    se_kind: str = "robust",
    drop_cross: bool = False,
) -> dict[str, Any]:
    """Run the DIIV 2SLS plus comparison estimators; raises DiivError on failure."""
    mode = table.resolve_mode(design)
    directives = directives or DirectedDesign()
    notes: list[str] = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if mode == "parallel":
            rep = two_stage_parallel(table, se_kind, covariates)
            ratio = diiv_estimate(table, mode="parallel")
        else:
            rep = two_stage_joint(table, directives, se_kind, covariates, drop_cross)
            y_cells, d_cells, _ = aligned_cell_means(table, directives)
            ratio = diiv_from_cells(y_cells, d_cells)
    out: dict[str, Any] = {
        "status": "ok",
        "design": mode,
        "method": rep.method,
        "s1": directives.s1,
        "s2": directives.s2,
        "tau": rep.tau,
        "se": rep.se,
        "se_kind": rep.se_kind,
        "first_stage_beta": rep.first_stage_beta,
        "first_stage_se": rep.first_stage_se,
        "first_stage_f": rep.first_stage_f,
        "first_stage_f_classical": rep.first_stage_f_classical,
        "first_stage_f_robust": rep.first_stage_f_robust,
        "n": rep.n,
        "controls": list(rep.controls),
        "tau_ratio": ratio.tau,
        "ratio_numerator": ratio.numerator,
        "ratio_denominator": ratio.denominator,
    }
    c1 = c2 = None
    try:
        c1, c2 = edge_contrasts(table, 1, mode), edge_contrasts(table, 2, mode)
    except DiivError as exc:
        notes.append(f"raw edge contrasts unavailable: {type(exc).__name__}")
    if c1 is not None:
        for j, c in ((1, c1), (2, c2)):
            out[f"rf{j}"] = c.rf
            out[f"fs{j}"] = c.fs
            _companion(out, f"single_iv_{j}", lambda c=c: c.wald, notes)
        label = ("z", "h") if mode == "parallel" else ("z1", "z2")
        for (a, b), count in c1.cell_counts.items():
            out[f"cells.{label[0]}{a}_{label[1]}{b}"] = count
    if mode == "parallel":
        _companion(out, "pooled_iv", lambda: pooled_iv(table), notes)
    _companion(out, "overidentified_iv", lambda: overidentified_iv(table, se_kind), notes)
    out["warnings"] = list(rep.warnings) + notes
    return out


def _emit(report: dict[str, Any], out_dir: str | None, stem: str) -> None:
    text = format_kv(report.items())
    sys.stdout.write(text)
    if out_dir:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        (path / f"{stem}.txt").write_text(text, encoding="utf-8")
        (path / f"{stem}.json").write_text(dump_json(report), encoding="utf-8")


def _fail(kind: str, message: str, code: int, out_dir: str | None, stem: str) -> int:
    _emit({"status": "error", "error": kind, "message": message}, out_dir, stem)
    sys.stderr.write(f"error: {kind}: {message}\n")
    return code


def cmd_estimate(args: argparse.Namespace) -> int:
    covs = [c.strip() for c in (args.covariates or "").split(",") if c.strip()]
    try:
        directives = DirectedDesign(args.s1, args.s2)
        table = read_table(args.csv, args.design, covs)
        table.resolve_mode(args.design)
    except (SchemaError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_INPUT, args.out, "estimate")
    try:
        report = estimate_report(table, args.design, directives, covs, args.se, args.drop_cross)
    except SchemaError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_INPUT, args.out, "estimate")
    except DiivError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_ESTIMATION, args.out, "estimate")
    _emit(report, args.out, "estimate")
    return EXIT_OK


def _config_items(run) -> list[tuple[str, Any]]:
    env = run.env
    p, r = env.profile, env.response
    items = [("preset", run.preset or ""), ("design", env.design),
             ("s1", env.directives.s1), ("s2", env.directives.s2),
             ("n", env.n), ("trials", env.trials), ("seed", env.seed)]
    items += [(f"shares.{k}", v) for k, v in zip(("pi_A", "pi_N", "pi_C", "pi_F"), p.shares)]
    items += [(f"effects.{k}", v) for k, v in zip(("tau_A", "tau_N", "tau_C", "tau_F"), p.effects)]
    items += [(f"kappa.{k}", v) for k, v in zip(("C1", "C2", "F1", "F2"), r.flat)]
    items += [("sigma", r.sigma), ("rho", r.rho), ("threshold", r.threshold)]
    return items


def _shares_items(a) -> list[tuple[str, Any]]:
    return [("analytic.pC1", a.pC1), ("analytic.pC2", a.pC2), ("analytic.pF1", a.pF1),
            ("analytic.pF2", a.pF2), ("analytic.lambda", a.lam),
            ("analytic.target_tau", a.target_tau), ("analytic.ordering_ok", a.ordering_ok)]


def _moment_items(prefix: str, m) -> list[tuple[str, Any]]:
    items = [(f"{prefix}.mean", m.mean), (f"{prefix}.sd", m.sd),
             (f"{prefix}.trimmed_mean", m.trimmed_mean), (f"{prefix}.trimmed_sd", m.trimmed_sd)]
    items += [(f"{prefix}.q{q:g}", m.quantiles[q]) for q in QUANTILES]
    return items


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        run = load_config(args.config, args.seed)
    except ConfigError as exc:
        return _fail("ConfigError", str(exc), EXIT_INPUT, None, "summary")
    summary = run_monte_carlo(run.env, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    lines = ["trial,diiv,overidentified_iv,flagged\n"]
    lines += [f"{t.trial},{fmt(t.diiv)},{fmt(t.overidentified_iv)},{int(t.flagged)}\n"
              for t in summary.trials]
    items = _config_items(run) + [("trials_flagged", summary.n_flagged)]
    items += _moment_items("diiv", summary.diiv) + _moment_items("overidentified_iv", summary.overid)
    if summary.analytic is not None:
        items += _shares_items(summary.analytic)
    hist = summary.hist
    hlines = ["bin_lo,bin_hi,diiv,overidentified_iv\n"]
    hlines += [f"{fmt(lo)},{fmt(hi)},{a},{b}\n" for lo, hi, a, b in
               zip(hist.edges[:-1], hist.edges[1:], hist.diiv_counts, hist.overid_counts)]

    (out / "trials.csv").write_text("".join(lines), encoding="utf-8")
    (out / "summary.txt").write_text(format_kv(items), encoding="utf-8")
    (out / "histogram.csv").write_text("".join(hlines), encoding="utf-8")
    for k in args.dump_trial or ():
        write_table(simulate_trial(run.env, k).table, out / f"trial_{k:05d}.csv")
    sys.stdout.write(format_kv(items))
    return EXIT_OK


def cmd_shares(args: argparse.Namespace) -> int:
    try:
        run = load_config(args.config)
    except ConfigError as exc:
        return _fail("ConfigError", str(exc), EXIT_INPUT, None, "shares")
    try:
        a = analytic_shares(run.env)
    except RelevanceViolated as exc:
        return _fail("RelevanceViolated", str(exc), EXIT_ESTIMATION, None, "shares")
    sys.stdout.write(format_kv(_shares_items(a)))
    return EXIT_OK


def _sign(text: str) -> int:
    try:
        s = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected +1 or -1") from None
    if s not in (1, -1):
        raise argparse.ArgumentTypeError("expected +1 or -1")
    return s


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diiv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate DIIV from a CSV file")
    est.add_argument("csv")
    est.add_argument("--design", choices=("parallel", "joint"))
    est.add_argument("--s1", type=_sign, default=1)
    est.add_argument("--s2", type=_sign, default=1)
    est.add_argument("--covariates", default="", help="comma-separated covariate columns")
    est.add_argument("--se", choices=("classical", "robust"), default="robust")
    est.add_argument("--drop-cross", action="store_true", help="leave x_cross out of the joint 2SLS")
    est.add_argument("--out", help="directory for estimate.txt and estimate.json")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="run the Monte Carlo study")
    sim.add_argument("config")
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--dump-trial", type=int, action="append",
                     help="also write the simulated table of this trial (repeatable)")
    sim.set_defaults(func=cmd_simulate)

    sh = sub.add_parser("shares", help="analytic behavioral shares and DIIV weight")
    sh.add_argument("config")
    sh.set_defaults(func=cmd_shares)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
