"""Command-line driver: simulate, fit, decompose, bootstrap, report.

All commands share one JSON configuration whose hash is embedded in every
output file, so reruns with identical inputs are byte-identical and stale
artifacts are rejected.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import copulas, counterfactual as cfstats, decomposition, inference
from . import pipeline, report
from .simulate import default_spec as dgp_default_spec
from .simulate import simulate as dgp_simulate
from .config import RunConfig, apply_override, config_hash, load_config
from .data import load_dataset, stratify
from .errors import ConfigError, QrsError, StalenessError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


def _header(cfg: RunConfig) -> str:
    return "# config_hash=%s seed=%d\n" % (config_hash(cfg), cfg.seed)


def _open_csv(path, cfg):
    fh = open(path, "w", newline="")
    fh.write(_header(cfg))
    return fh, csv.writer(fh)


def _load(cfg: RunConfig, data_path, stratify_col=None):
    schema = cfg.to_schema()
    if stratify_col is not None and schema.stratify_col != stratify_col:
        schema = type(schema)(
            outcome_col=schema.outcome_col, selection_col=schema.selection_col,
            group_col=schema.group_col, instrument_col=schema.instrument_col,
            covariate_cols=schema.covariate_cols, stratify_col=stratify_col)
    ds = load_dataset(data_path, schema)
    if schema.stratify_col is None:
        return [("", ds)]
    out = []
    for value, stratum in stratify(ds).items():
        if not stratum.usable:
            print("warning: stratum %r skipped: %s"
                  % (value, "; ".join(stratum.problems)), file=sys.stderr)
            continue
        out.append((str(value), stratum.dataset))
    if not out:
        raise ConfigError("no usable strata in %s" % data_path)
    return out


def cmd_simulate(cfg: RunConfig, args) -> int:
    d = cfg.dgp
    spec = dgp_default_spec(
        n_per_group=int(d.get("n_per_group", 5000)),
        seed=int(d.get("seed", cfg.seed)),
        theta0=float(d.get("theta0", -5.0)), theta1=float(d.get("theta1", -2.0)),
        family=d.get("family", copulas.FRANK))
    ds = dgp_simulate(spec)
    os.makedirs(args.out, exist_ok=True)
    data_path = os.path.join(args.out, "data.csv")
    ds.write(data_path)
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump({"config_hash": config_hash(cfg), "seed": spec.seed,
                   "n_per_group": spec.n_per_group, "rows": ds.n,
                   "data": "data.csv"}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print("wrote %s (%d rows)" % (data_path, ds.n))
    return EXIT_OK


def _fit_path(out, stratum, d):
    tag = ("_%s" % stratum) if stratum else ""
    return os.path.join(out, "fit%s_g%d.json" % (tag, d))


def cmd_fit(cfg: RunConfig, args) -> int:
    qrs = cfg.to_qrs_config()
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for stratum, ds in _load(cfg, args.data, args.stratify):
        fits = pipeline.fit_both_groups(ds, qrs)
        for fit in fits:
            for msg in fit.warnings:
                print("warning: group %d%s: %s"
                      % (fit.d, (" stratum %s" % stratum) if stratum else "",
                         msg), file=sys.stderr)
            payload = pipeline.fit_to_dict(fit)
            payload["config_hash"] = config_hash(cfg)
            with open(_fit_path(args.out, stratum, fit.d), "w") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
            rows.append([stratum, fit.d, fit.copula.family,
                         "%.10g" % fit.copula.theta,
                         "%.10g" % copulas.kendall_tau(fit.copula),
                         "%.10g" % fit.criterion_value,
                         ";".join(fit.warnings)])
    fh, w = _open_csv(os.path.join(args.out, "kendall_tau.csv"), cfg)
    with fh:
        w.writerow(["stratum", "group", "family", "theta", "kendall_tau",
                    "criterion", "warnings"])
        w.writerows(rows)
    print("wrote fits for %d stratum/group cells" % len(rows))
    return EXIT_OK


def _load_fits(cfg, fits_dir, stratum):
    fits = []
    for d in (0, 1):
        path = _fit_path(fits_dir, stratum, d)
        if not os.path.exists(path):
            raise ConfigError("missing fit artifact %s (run fit first)" % path)
        with open(path) as fh:
            payload = json.load(fh)
        if payload.get("config_hash") != config_hash(cfg):
            raise StalenessError(
                "fit artifact %s was produced under a different configuration"
                % path)
        fits.append(pipeline.fit_from_dict(payload))
    return tuple(fits)


def _standard_stats(cfg):
    stats = [cfstats.CfStat(cfstats.MEAN_PARTICIPANTS),
             cfstats.CfStat(cfstats.MEAN_POPULATION),
             cfstats.CfStat(cfstats.MEAN_PROPENSITY),
             cfstats.CfStat(cfstats.MEAN_U),
             cfstats.CfStat(cfstats.POTENTIAL_MEAN)]
    for tau in cfg.quantile_taus:
        stats.append(cfstats.CfStat(cfstats.QUANTILE_PARTICIPANTS, tau))
        stats.append(cfstats.CfStat(cfstats.QUANTILE_POPULATION, tau))
        stats.append(cfstats.CfStat(cfstats.POTENTIAL_QUANTILE, tau))
    return stats


def _result_row(stratum, stat, res):
    comp = {name: "%.10g" % value for name, value in res.components.items()}
    return [stratum, stat.kind,
            "" if stat.arg is None else "%g" % stat.arg,
            "%.10g" % res.total,
            comp.get("EC", ""), comp.get("CC", ""),
            comp.get("SC", ""), comp.get("PC", ""),
            ";".join(res.notes)]


def cmd_decompose(cfg: RunConfig, args) -> int:
    os.makedirs(args.out, exist_ok=True)
    fits_dir = args.fits or args.out
    rows = []
    for stratum, ds in _load(cfg, args.data, args.stratify):
        fits = _load_fits(cfg, fits_dir, stratum)
        for stat in _standard_stats(cfg):
            res = decomposition.run_decomposition(fits, ds, stat)
            rows.append(_result_row(stratum, stat, res))
    fh, w = _open_csv(os.path.join(args.out, "decompositions.csv"), cfg)
    with fh:
        w.writerow(["stratum", "statistic", "tau", "total",
                    "EC", "CC", "SC", "PC", "notes"])
        w.writerows(rows)
    print("wrote %d decomposition rows" % len(rows))
    return EXIT_OK


def cmd_bootstrap(cfg: RunConfig, args) -> int:
    os.makedirs(args.out, exist_ok=True)
    qrs = cfg.to_qrs_config()
    boot = inference.BootstrapConfig(
        replications=int(cfg.bootstrap.get("replications", 200)),
        seed=int(cfg.bootstrap.get("seed", cfg.seed)),
        weight_law=cfg.bootstrap.get("weight_law",
                                     inference.EXPONENTIAL_UNIT_MEAN))
    stats = _standard_stats(cfg)
    summary_rows = []
    for stratum, ds in _load(cfg, args.data, args.stratify):
        result = inference.bootstrap_run(
            ds, qrs, boot, stats, workers=args.workers,
            draws_path=os.path.join(
                args.out, "bootstrap_draws%s.csv"
                % (("_%s" % stratum) if stratum else "")))
        for msg in ("replication %d failed: %s" % f for f in result.failures):
            print("warning: %s" % msg, file=sys.stderr)
        summaries = inference.summarize(result)
        for stat in stats:
            sid = inference.stat_id(stat)
            res = summaries[sid]
            labels = ("total", *res.components)
            values = (res.total, *res.components.values())
            for label, value in zip(labels, values):
                summary_rows.append([
                    stratum, stat.kind,
                    "" if stat.arg is None else "%g" % stat.arg,
                    label, "%.10g" % value, "%.10g" % res.se[label],
                    res.significance[label]])
    fh, w = _open_csv(os.path.join(args.out, "bootstrap_summary.csv"), cfg)
    with fh:
        w.writerow(["stratum", "statistic", "tau", "component",
                    "estimate", "se", "stars"])
        w.writerows(summary_rows)
    print("wrote %d bootstrap summary rows" % len(summary_rows))
    return EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    decomp_path = os.path.join(args.out, "decompositions.csv")
    if not os.path.exists(decomp_path):
        raise ConfigError("no decompositions.csv under %s; run decompose first"
                          % args.out)
    made = report.render(os.path.join(args.out, "report"), decomp_path,
                         kendall_path=os.path.join(args.out, "kendall_tau.csv"),
                         header_comment=_header(cfg))
    for path in made:
        print("wrote %s" % path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qrsdecomp",
        description="Selection-corrected distributional decompositions.")
    p.add_argument("--config", help="path to a JSON run configuration")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel bootstrap workers")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config override, e.g. tau_grid.step=0.02")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, needs_data in (("simulate", cmd_simulate, False),
                                 ("fit", cmd_fit, True),
                                 ("decompose", cmd_decompose, True),
                                 ("bootstrap", cmd_bootstrap, True),
                                 ("report", cmd_report, False)):
        sp = sub.add_parser(name)
        sp.set_defaults(fn=fn)
        sp.add_argument("--out", required=True, help="output directory")
        if needs_data:
            sp.add_argument("--data", required=True, help="input CSV path")
            sp.add_argument("--stratify", help="stratification column name")
        if name == "decompose":
            sp.add_argument("--fits", help="directory with fit artifacts "
                                           "(defaults to --out)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.seed is not None:
            cfg = apply_override(cfg, "seed=%d" % args.seed)
        return args.fn(cfg, args)
    except QrsError as exc:
        print("error: %s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
