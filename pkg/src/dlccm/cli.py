"""Command-line entry points for dataset generation, training, evaluation,
sweeps, channel-estimation experiments, and the theory tools.

Every subcommand reads an INI config (--config), writes to --out, and
accepts --seed to override the configured base seed.  Run
``dlccm <subcommand> --help`` for per-command options.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dataset import build_dataset, load_dataset, save_dataset
from .errors import DlccmError, EmptyNeighborhood
from .experiments import (
    DICTIONARY_METHOD,
    LEARNED_METHOD,
    ExperimentConfig,
    ResultsTable,
    build_cell_dataset,
    emit_plotdata,
    evaluate_methods,
    load_config,
    run_mmse_experiment,
    run_sweep,
    summarize_mmse,
    summarize_sweep,
    write_manifest,
)
from .learner import load_model, save_model, train
from .theory import KQuery, bound_components, k_constant


def _load(args) -> tuple[ExperimentConfig, str]:
    config_text = Path(args.config).read_text(encoding="utf-8")
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, base_seed=args.seed)
    return config, config_text


def _dataset_for(config: ExperimentConfig, args):
    if getattr(args, "dataset", None):
        return load_dataset(args.dataset)
    return build_cell_dataset(config, "base", None, config.base_seed)


def cmd_gen_dataset(args) -> int:
    config, _ = _load(args)
    ds = build_cell_dataset(config, "base", None, config.base_seed)
    save_dataset(ds, args.out)
    print(f"dataset with {ds.n_users} users written to {args.out}")
    return 0


def cmd_train(args) -> int:
    config, _ = _load(args)
    ds = _dataset_for(config, args)
    model, trace = train(ds, config.hyper)
    save_model(model, args.out)
    print(f"trained in {trace.n_iter} iterations "
          f"(objective {trace.objective[0]:.6g} -> {trace.objective[-1]:.6g}, "
          f"sigma {model.sigma:.6g}); model written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    config, _ = _load(args)
    ds = _dataset_for(config, args)
    model = load_model(args.model) if args.model else train(ds, config.hyper)[0]
    reports = evaluate_methods(ds, model, config.dictionary_k)
    table = ResultsTable(columns=["method", "n_test", "nmse", "cmd", "dm"])
    for method, report in reports.items():
        table.append(method=method, n_test=len(report.nmse_values),
                     nmse=report.nmse, cmd=report.cmd, dm=report.dm)
        print(f"{method}: nmse={report.nmse:.4g} cmd={report.cmd:.4g} "
              f"dm={report.dm:.4g}")
    table.write_csv(args.out)
    return 0


def cmd_sweep(args) -> int:
    config, config_text = _load(args)
    out_dir = Path(args.out)
    results = run_sweep(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    results.write_csv(out_dir / "results.csv")
    summary = summarize_sweep(results)
    summary.write_csv(out_dir / "summary.csv")
    emit_plotdata(summary, out_dir, name=f"sweep_{config.sweep_axis}",
                  x_label=config.sweep_axis)
    write_manifest(out_dir, config_text, sorted(set(results.column("seed"))))
    failed = [r for r in results.rows if r["status"] != "ok"]
    print(f"sweep over {config.sweep_axis} done: {len(results.rows)} rows, "
          f"{len(failed)} failed cells; results in {out_dir}")
    return 0


def cmd_mmse(args) -> int:
    config, config_text = _load(args)
    out_dir = Path(args.out)
    results = run_mmse_experiment(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    results.write_csv(out_dir / "results.csv")
    summary = summarize_mmse(results)
    summary.write_csv(out_dir / "summary.csv")
    for experiment, label in (("pilot_snr_db", "pilot SNR (dB)"),
                              ("n_pilots", "number of pilots")):
        part = summary.select(experiment=experiment)
        if part.rows:
            emit_plotdata(part, out_dir, name=f"mmse_{experiment}",
                          x_label=label, metrics=("nmse",))
    write_manifest(out_dir, config_text, sorted(set(results.column("dataset_seed"))))
    print(f"channel-estimation experiments done; results in {out_dir}")
    return 0


def cmd_kconst(args) -> int:
    config, _ = _load(args)
    f_r = config.kconst_f_r if config.kconst_f_r is not None else config.f_dl / config.f_ul
    table = ResultsTable(columns=["delta_deg", "k_value"])
    for delta_deg in config.kconst_deltas_deg:
        k = k_constant(KQuery(f_r=f_r, delta=math.radians(delta_deg),
                              m_range=(config.kconst_m_lo, config.kconst_m_hi),
                              b_grid=config.kconst_b_grid))
        table.append(delta_deg=float(delta_deg), k_value=k)
        print(f"delta = {delta_deg:g} deg -> K = {k:.4f}")
    table.write_csv(args.out)
    return 0


def cmd_bound(args) -> int:
    config, _ = _load(args)
    ds = _dataset_for(config, args)
    model = load_model(args.model) if args.model else train(ds, config.hyper)[0]

    train_ul = ds.train_inputs()
    if config.bound_delta is not None:
        delta = config.bound_delta
    else:
        from scipy.spatial.distance import cdist

        d = cdist(train_ul, train_ul)
        np.fill_diagonal(d, np.inf)
        delta = 2.0 * float(np.median(d.min(axis=1)))
    spread_hi = math.radians(config.spread_hi_deg)
    k = k_constant(KQuery(f_r=config.f_dl / config.f_ul, delta=spread_hi))

    table = ResultsTable(columns=["test_index", "n_neighbors", "neighborhood_error",
                                  "lipschitz_term", "slack_term", "bound_rhs",
                                  "observed_error", "status"])
    held = 0
    for idx in range(len(ds.test)):
        try:
            rep = bound_components(model, ds, idx, delta, config.bound_epsilon, k)
        except EmptyNeighborhood:
            table.append(test_index=idx, n_neighbors=0, neighborhood_error=math.nan,
                         lipschitz_term=math.nan, slack_term=math.nan,
                         bound_rhs=math.nan, observed_error=math.nan,
                         status="empty_neighborhood")
            continue
        held += rep.total >= rep.observed_test_error
        table.append(test_index=idx, n_neighbors=rep.n_neighbors,
                     neighborhood_error=rep.neighborhood_error,
                     lipschitz_term=rep.lipschitz_term, slack_term=rep.slack_term,
                     bound_rhs=rep.total, observed_error=rep.observed_test_error,
                     status="ok")
    table.write_csv(args.out)
    n_ok = sum(1 for r in table.rows if r["status"] == "ok")
    print(f"bound held for {held}/{n_ok} test points with a neighborhood "
          f"(delta={delta:.4g}, K={k:.4f}); report in {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dlccm",
        description="UL-to-DL channel covariance interpolation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, extra=()):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--out", required=True, help="output file or directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured base seed")
        for flag, kwargs in extra:
            p.add_argument(flag, **kwargs)
        p.set_defaults(func=func)
        return p

    dataset_opt = ("--dataset", dict(default=None, help="existing dataset directory"))
    model_opt = ("--model", dict(default=None, help="existing model file"))
    add("gen-dataset", cmd_gen_dataset, "generate and save a dataset")
    add("train", cmd_train, "train an interpolator", (dataset_opt,))
    add("eval", cmd_eval, "evaluate methods on a test split",
        (dataset_opt, model_opt))
    add("sweep", cmd_sweep, "run the configured parameter sweep")
    add("mmse", cmd_mmse, "run the channel-estimation experiments")
    add("kconst", cmd_kconst, "tabulate the distance-ratio constant")
    add("bound", cmd_bound, "evaluate the test-error bound components",
        (dataset_opt, model_opt))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DlccmError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
