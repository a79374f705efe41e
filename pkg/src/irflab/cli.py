"""Command-line entry point.

Subcommands: ``dgp`` (draw specifications and population summaries),
``run`` (Monte Carlo experiment), ``analytic`` (closed-form asymptotic
surfaces), and ``report`` (plain-text digest of a results file).  All
outputs are CSV or plain text; every subcommand is deterministic given
the configuration and master seed.

Exit codes: 0 success, 2 configuration error, 3 input-file error,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import analytic, harness
from .dgp import SchemaError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4

REPORT_HORIZONS = (0, 4, 8, 12, 16, 19)


class ConfigError(ValueError):
    pass


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not KEY=VALUE")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def load_config(path, overrides, args) -> harness.ExperimentConfig:
    tree = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                tree = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    for text in overrides or []:
        key, value = _parse_override(text)
        tree[key] = value
    if args.seed is not None:
        tree["master_seed"] = args.seed
    if args.out is not None:
        tree["out_dir"] = args.out
    workers = args.workers
    if workers is None:
        env = os.environ.get("IRFLAB_WORKERS")
        workers = int(env) if env else None
    if workers is not None:
        tree["workers"] = workers
    try:
        return harness.ExperimentConfig.from_dict(tree)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _write_csv(path, header, rows):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    return repr(float(x))


def cmd_dgp(config: harness.ExperimentConfig) -> int:
    """Draw specifications; write dgp_specs.csv and dgp_summary.csv."""
    os.makedirs(config.out_dir, exist_ok=True)
    params, records = harness.draw_experiment_dgps(config)

    spec_rows = []
    for r in records:
        s = r.spec
        spec_rows.append([
            r.dgp_id, r.policy, s.scheme,
            " ".join(str(i) for i in s.variable_indices),
            s.response_index, s.normalization_index, s.innovation_index,
            _fmt(s.iv_params.rho_z) if s.iv_params else "",
            _fmt(s.iv_params.sigma_nu2) if s.iv_params else "",
        ])
    _write_csv(
        os.path.join(config.out_dir, "dgp_specs.csv"),
        ["dgp_id", "policy", "scheme", "variable_indices", "response_index",
         "normalization_index", "innovation_index", "iv_rho_z", "iv_sigma_nu2"],
        spec_rows,
    )

    keys = sorted({k for r in records for k in r.summary})
    rows = [
        [r.dgp_id] + [_fmt(r.summary[k]) if k in r.summary else "" for k in keys]
        for r in records
    ]
    quant_labels = ["min", "p10", "p25", "p50", "p75", "p90", "max"]
    quants = [0, 10, 25, 50, 75, 90, 100]
    for label, q in zip(quant_labels, quants):
        row = [f"q_{label}"]
        for k in keys:
            vals = [r.summary[k] for r in records if k in r.summary]
            row.append(_fmt(np.percentile(vals, q)) if vals else "")
        rows.append(row)
    _write_csv(os.path.join(config.out_dir, "dgp_summary.csv"), ["dgp_id"] + keys, rows)
    return EXIT_OK


def cmd_run(config: harness.ExperimentConfig) -> int:
    """Run the experiment and emit results, curves, and decision maps.

    Exits 4 when some DGP aborts entirely (no method produced a single
    successful replication); partial results and the checkpoint are
    still written.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    checkpoint = os.path.join(config.out_dir, "checkpoint.npz")
    store = harness.run_experiment(config, checkpoint_path=checkpoint)
    aborted = [
        r.dgp_id for r in store.records
        if np.all(store.counts[r.dgp_id, ..., 0] == 0)
    ]
    harness.write_results_csv(store, os.path.join(config.out_dir, "results.csv"))

    horizons = list(range(config.h_bar + 1))
    for stat in harness.AGG_STATISTICS:
        curves = harness.aggregate_curves(store, stat)
        rows = [
            [method] + [_fmt(curves[mi, h]) for h in horizons]
            for mi, method in enumerate(store.methods)
        ]
        _write_csv(
            os.path.join(config.out_dir, f"curves_{stat}.csv"),
            ["method"] + [f"h{h}" for h in horizons],
            rows,
        )

    omega = list(config.omega_grid)
    omega_header = ["horizon"] + [_fmt(w) for w in omega]
    for a, b in _headtohead_pairs(store.methods):
        frac = harness.headtohead_map(store, a, b, omega)
        rows = [[h] + [_fmt(frac[h, wi]) for wi in range(len(omega))] for h in horizons]
        _write_csv(
            os.path.join(config.out_dir, f"headtohead_{a}_vs_{b}.csv"),
            omega_header, rows,
        )
    if len(store.methods) >= 2:
        best = harness.best_method_map(store, omega)
        rows = [[h] + [best[h, wi] for wi in range(len(omega))] for h in horizons]
        _write_csv(os.path.join(config.out_dir, "best_method.csv"), omega_header, rows)
    if aborted:
        print(f"error: DGP(s) {aborted} produced no successful replication",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _headtohead_pairs(methods):
    preferred = [("ls_lp", "ls_var"), ("ls_lp", "pen_lp"), ("ls_var", "bvar"),
                 ("svar_iv", "ls_var")]
    return [(a, b) for a, b in preferred if a in methods and b in methods]


def cmd_analytic(config: harness.ExperimentConfig) -> int:
    """Evaluate the closed-form asymptotic surfaces on the configured grids."""
    os.makedirs(config.out_dir, exist_ok=True)
    h_grid = range(config.h_bar + 1)
    sigma2 = config.analytic_sigma2
    moment_rows, weight_rows = [], []
    for rho in config.analytic_rho:
        for alpha in config.analytic_alpha:
            params = analytic.SimpleDGPParams(rho=rho, sigma2=sigma2, alpha=alpha)
            for h in h_grid:
                lp = analytic.asy_lp(params, h)
                var = lp if h == 0 else analytic.asy_var(params, h)
                moment_rows.append([
                    _fmt(rho), _fmt(alpha), _fmt(sigma2), h,
                    _fmt(lp.abias), _fmt(lp.avar), _fmt(np.sqrt(lp.avar)),
                    _fmt(var.abias), _fmt(var.avar), _fmt(np.sqrt(var.avar)),
                ])
                if h >= 2:
                    w = analytic.indifference_weight(params, h)
                    weight_rows.append([_fmt(rho), _fmt(alpha), _fmt(sigma2), h, _fmt(w)])
    _write_csv(
        os.path.join(config.out_dir, "analytic_moments.csv"),
        ["rho", "alpha", "sigma2", "horizon", "lp_abias", "lp_avar", "lp_astd",
         "var_abias", "var_avar", "var_astd"],
        moment_rows,
    )
    _write_csv(
        os.path.join(config.out_dir, "indifference.csv"),
        ["rho", "alpha", "sigma2", "horizon", "omega_star"],
        weight_rows,
    )
    return EXIT_OK


def cmd_report(results_path, out_dir, by_policy: bool = False) -> int:
    """Digest a results file into a text summary and long-format CSV.

    Pooled across policies by default; ``by_policy`` adds one block per
    (policy, method) pair instead.
    """
    rows = harness.read_results_csv(results_path)
    os.makedirs(out_dir, exist_ok=True)

    methods = sorted({r["method"] for r in rows})
    groups = [(None, m) for m in methods]
    if by_policy:
        policies = sorted({r["policy"] for r in rows})
        groups = [(p, m) for p in policies for m in methods]

    long_rows = []
    lines = ["impulse response estimator report", "=" * 34, ""]
    for policy, method in groups:
        label = method if policy is None else f"{method} [{policy}]"
        lines.append(f"method: {label}")
        lines.append(f"  {'h':>3} {'med |bias|/s':>14} {'med std/s':>12} {'n_ok':>7} {'n_fail':>7}")
        for h in REPORT_HORIZONS:
            sel = [
                r for r in rows
                if r["method"] == method and r["horizon"] == h
                and (policy is None or r["policy"] == policy)
            ]
            if not sel:
                continue
            nb = np.array([abs(r["bias"]) / r["scale"] for r in sel])
            ns = np.array([np.sqrt(r["variance"]) / r["scale"] for r in sel])
            n_ok = sum(r["n_ok"] for r in sel)
            n_fail = sum(r["n_fail"] for r in sel)
            med_b, med_s = np.nanmedian(nb), np.nanmedian(ns)
            lines.append(f"  {h:>3} {med_b:>14.6f} {med_s:>12.6f} {n_ok:>7} {n_fail:>7}")
            long_rows.append([policy or "pooled", method, h,
                              _fmt(med_b), _fmt(med_s), n_ok, n_fail])
        lines.append("")
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    _write_csv(
        os.path.join(out_dir, "report_curves.csv"),
        ["policy", "method", "horizon", "median_abs_bias", "median_std", "n_ok", "n_fail"],
        long_rows,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irflab",
        description="impulse response estimator laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (
        ("dgp", "draw DGP specifications and population summaries"),
        ("run", "run a Monte Carlo experiment"),
        ("analytic", "emit closed-form asymptotic surfaces"),
        ("report", "summarize a results file"),
    ):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="config override (repeatable)")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        if name == "report":
            p.add_argument("results", help="path to a results.csv file")
            p.add_argument("--by-policy", action="store_true",
                           help="break the summary down by policy instead of pooling")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.override, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "dgp":
            return cmd_dgp(config)
        if args.command == "run":
            return cmd_run(config)
        if args.command == "analytic":
            return cmd_analytic(config)
        if args.command == "report":
            return cmd_report(args.results, config.out_dir, by_policy=args.by_policy)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surface as runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
