"""Command-line interface.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric error.
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from sddp.errors import ConfigError, SddpError
from sddp.evaluation.config import ExperimentConfig, PanelSource, load_config
from sddp.evaluation.experiment import repetition_panel, run_experiment
from sddp.evaluation.metrics import ErrorTable, normalize_table
from sddp.linalg import derive_seed
from sddp.panel import MaskedPanel, load_masked_panel, load_panel, write_panel
from sddp.pipeline import METHODS, Pipeline, fit_pipeline
from sddp.serialize import write_json, write_matrix
from sddp.simulate import SyntheticConfig, convergence_study, simulate, write_study

SYNTH_FLAGS = {
    "N": int, "T": int, "K": int, "K1": int, "q": int, "nu": float, "sigma_u": float,
    "sigma_eps": float, "loading_kind": str, "link_kind": str, "horizon": int,
    "zeta_scale": float,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None


def _target(text):
    return int(text) if text is not None and text.lstrip("-").isdigit() else text


def _synthetic(args, cfg=None):
    base = dict((cfg.panel.synthetic or {}) if cfg is not None else {})
    for key in SYNTH_FLAGS:
        v = getattr(args, key, None)
        if v is not None:
            base[key] = v
    return SyntheticConfig(**base, seed=args.seed)


def _add_synth_flags(p):
    for key, typ in SYNTH_FLAGS.items():
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ, default=None)


def cmd_simulate(args):
    cfg = load_config(args.config) if args.config else None
    sc = _synthetic(args, cfg)
    truth = simulate(sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_panel(truth.panel, out / "panel.csv")
    write_matrix(out / "factors.csv", truth.f)
    write_matrix(out / "gstar_true.csv", truth.gstar_true)
    write_matrix(out / "common.csv", truth.common)
    if truth.loadings["kind"] == "linear":
        write_matrix(out / "loadings.csv", truth.loadings["B"])
    write_json(out / "truth.json", {"config": sc.to_dict(), "beta": truth.beta.tolist()})
    print(f"wrote N={sc.N} T={sc.T} panel to {out / 'panel.csv'}")
    return 0


def _panel_from(args, cfg):
    if args.csv:
        if args.mask:
            return load_masked_panel(args.csv, _target(args.target), args.delimiter,
                                     mask_path=args.mask)
        return load_panel(args.csv, _target(args.target), args.delimiter)
    if cfg is None:
        raise ConfigError("give --csv or a --config with a data source")
    if cfg.panel.synthetic is not None and cfg.panel.csv is None:
        return simulate(cfg.synthetic_config(derive_seed(cfg.base_seed, 0, "data"))).panel
    return repetition_panel(cfg, 0)


def cmd_train(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig(
        panel=PanelSource(csv=args.csv))
    panel = _panel_from(args, cfg)
    method = args.method or cfg.methods[0]
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    seed = args.seed if args.seed is not None else derive_seed(cfg.base_seed, 0, method)
    tc = replace(cfg.train, seed=seed)
    horizon = args.horizon or cfg.horizon
    window = args.window or cfg.window
    cfg = replace(cfg, horizon=horizon, window=window)
    pipe = fit_pipeline(panel, method, horizon, window, cfg.K, cfg.kmax, cfg.step_net(),
                        cfg.head_net(), tc, cfg.refinement_passes, cfg.panel.standardize,
                        cfg.correlation_selection)
    pipe.save(args.out)
    print(f"trained {method} pipeline (K={pipe.K}) -> {args.out}")
    return 0


def cmd_forecast(args):
    pipe = Pipeline.load(args.bundle)
    if args.mask:
        panel = load_masked_panel(args.csv, _target(args.target), args.delimiter,
                                  mask_path=args.mask)
    else:
        panel = load_panel(args.csv, _target(args.target), args.delimiter)
    preds = pipe.forecast(panel)
    base = panel.panel if isinstance(panel, MaskedPanel) else panel
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "target_time", "forecast"])
        for t in range(base.T):
            w.writerow([t, t + pipe.horizon, repr(float(preds[t]))])
    print(f"wrote {base.T} forecasts (h={pipe.horizon}) to {out}")
    return 0


def cmd_evaluate(args):
    cfg = load_config(args.config)
    if args.repetitions:
        cfg = replace(cfg, repetitions=args.repetitions)
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    report = run_experiment(cfg, workers=args.workers)
    report.write(args.out)
    failed = sum(c["status"] != "ok" for c in report.cells)
    print(f"{len(report.cells)} cells ({failed} failed) -> {Path(args.out) / 'report.json'}")
    return 0


def cmd_normalize(args):
    table = ErrorTable.read_csv(args.table)
    result = normalize_table(table)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table.write_csv(out / "normalized.csv", result.normalized, fmt="{:.%df}" % args.digits)
    with open(out / "nce.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "nce"])
        for m, v in zip(table.methods, result.nce):
            w.writerow([m, f"{v:.{args.digits}f}"])
    flags = [f"{d}_{k}" for j, d in enumerate(table.datasets)
             for i, k in enumerate(("MAE", "RMSE")) if result.degenerate[j, i]]
    write_json(out / "normalize_summary.json", {
        "methods": table.methods,
        "datasets": table.datasets,
        "nce": {m: float(v) for m, v in zip(table.methods, result.nce)},
        "degenerate_columns": flags,
    })
    best = table.methods[int(np.argmin(result.nce))]
    print(f"normalized {len(table.methods)} methods x {len(table.datasets)} datasets; "
          f"lowest NCE: {best}")
    return 0


def cmd_convergence(args):
    cfg = load_config(args.config) if args.config else None
    base = _synthetic(args, cfg)
    seeds = list(range(args.num_seeds)) if args.seeds is None else _int_list(args.seeds)
    rows, summary = convergence_study(base, _int_list(args.n_grid), seeds, K=args.factors,
                                      workers=args.workers)
    write_study(rows, summary, args.out)
    print(f"spearman rho(mean residual, N) = {summary['spearman_rho']:.4f}")
    for r in summary["table"]:
        print(f"  N={r['N']:>5}  mean={r['mean_residual']:.5f}  std={r['std_residual']:.5f}")
    return 0


def build_parser():
    p = _Parser(prog="sddp", description="Supervised deep dynamic PCA toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="draw a synthetic panel with ground truth")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    _add_synth_flags(s)
    s.set_defaults(func=cmd_simulate)

    def data_flags(q):
        q.add_argument("--csv")
        q.add_argument("--target", default="0", help="target column name or index")
        q.add_argument("--mask", help="mask CSV for partially observed covariates")
        q.add_argument("--delimiter", default=",")

    t = sub.add_parser("train", help="fit a forecasting pipeline and write a bundle")
    t.add_argument("--config")
    data_flags(t)
    t.add_argument("--method", choices=METHODS)
    t.add_argument("--horizon", type=int)
    t.add_argument("--window", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    f = sub.add_parser("forecast", help="forecast from a bundle and a CSV panel")
    f.add_argument("--bundle", required=True)
    data_flags(f)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_forecast)

    e = sub.add_parser("evaluate", help="run a repetition experiment from a config file")
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--workers", type=int)
    e.add_argument("--repetitions", type=int)
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_evaluate)

    n = sub.add_parser("normalize", help="min-max normalize an error table and sum per method")
    n.add_argument("table")
    n.add_argument("--out", required=True)
    n.add_argument("--digits", type=int, default=4)
    n.set_defaults(func=cmd_normalize)

    c = sub.add_parser("convergence", help="factor recovery error as N grows")
    c.add_argument("--config")
    c.add_argument("--n-grid", default="25,50,100,200")
    c.add_argument("--seeds")
    c.add_argument("--num-seeds", type=int, default=10)
    c.add_argument("--factors", type=int)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    _add_synth_flags(c)
    c.set_defaults(func=cmd_convergence)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "command", None) == "forecast" and not args.csv:
            raise ConfigError("forecast needs --csv")
        return args.func(args)
    except SddpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
