"""Command-line front end: ``hlis {simulate,fit,test,evaluate,ingest}``.

Every command writes its artifacts plus a ``manifest.json`` into ``--out``.
Exit status is 0 on success, 1 on runtime failure and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import BACKEND, __version__
from .em import FitConfig, bic_select_K, em_fit
from .evaluation import PROCEDURES, SettingPreset, get_setting, run_setting
from .ingest import ingest_summary_stats
from .inference import compute_hlis
from .model import Dataset, ModelParams, simulate_dataset
from .procedures import bh_procedure, lfdr_procedure, step_up_select


def _default_jobs():
    try:
        return max(1, int(os.environ.get("HLIS_THREADS", "1")))
    except ValueError:
        return 1


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _fit_config(args):
    base = {}
    if getattr(args, "config", None):
        base = json.loads(Path(args.config).read_text())
        base = base.get("fit", base)
    cfg = FitConfig.from_dict(base) if base else FitConfig()
    over = {}
    for name in ("max_iters", "restarts", "rel_tol", "bandwidth"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    if getattr(args, "fix_null", False):
        over["fix_null_density"] = True
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    over["n_jobs"] = args.jobs
    return FitConfig.from_dict({**cfg.to_dict(), **over})


def _write(out, name, text, written):
    path = out / name
    path.write_text(text)
    written.append(name)


def _manifest(out, args, argv, config, written, started):
    canon = json.dumps(config, sort_keys=True, default=str)
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "seed": getattr(args, "seed", None),
        "config": config,
        "config_hash": hashlib.sha256(canon.encode()).hexdigest(),
        "versions": {"hlis": __version__, "backend": BACKEND, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "outputs": written,
        "wall_time_s": time.time() - started,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _load_dataset(path):
    return Dataset.from_tsv(Path(path).read_text(), meta={"source": str(path)})


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args, out, written):
    if args.params:
        params = ModelParams.from_json(Path(args.params).read_text())
        m = args.m or 9000
        meta = {"params_file": args.params}
    else:
        preset = get_setting(args.setting)
        params = preset.params(args.grid_index)
        m = args.m or preset.m
        meta = {"setting": preset.name, "grid_index": args.grid_index,
                "grid_value": preset.grid[args.grid_index]}
    data = simulate_dataset(params, m, args.seed, meta={**meta, "seed": args.seed})
    _write(out, "dataset.tsv", data.to_tsv(), written)
    _write(out, "dataset.json", data.to_json() + "\n", written)
    _write(out, "params.json", params.to_json(indent=2) + "\n", written)
    return {"m": m, **meta}


def cmd_fit(args, out, written):
    data = _load_dataset(args.input)
    cfg = _fit_config(args)
    fit = em_fit(data.z, args.K, args.S, cfg)
    _write(out, "fit.json", fit.to_json(indent=2) + "\n", written)
    if fit.message.startswith("fit failed"):
        raise RuntimeError(fit.message)
    return {"fit": cfg.to_dict(), "K": args.K, "S": args.S}


def _decide(z, args, cfg, out, written, prefix=""):
    proc = args.procedure
    info = {}
    if proc == "bh":
        dec = bh_procedure(z, args.alpha)
    elif proc == "lfdr":
        dec = lfdr_procedure(z, args.alpha, cfg, fix_null_density=True)
    elif proc == "hlis-oracle":
        if not args.params:
            raise RuntimeError("hlis-oracle needs --params")
        params = ModelParams.from_json(Path(args.params).read_text())
        dec = step_up_select(compute_hlis(params, z), args.alpha, proc)
    else:
        fit = None
        if proc == "lis":
            K = 1
        elif args.select_K:
            K, table, fits = bic_select_K(z, args.S, args.select_K, cfg)
            _write(out, f"{prefix}bic.json", json.dumps(table, indent=2) + "\n", written)
            info["selected_K"] = K
            fit = fits[K]
        else:
            K = args.K
        if fit is None:
            fit = em_fit(z, K, args.S, cfg)
        _write(out, f"{prefix}fit.json", fit.to_json(indent=2) + "\n", written)
        if fit.message.startswith("fit failed"):
            raise RuntimeError(fit.message)
        dec = step_up_select(compute_hlis(fit.params, z), args.alpha, proc)
        info["K"] = K
    _write(out, f"{prefix}decisions.tsv", dec.to_tsv(), written)
    _write(out, f"{prefix}decisions.json", dec.to_json() + "\n", written)
    info["rejections"] = dec.l
    return info


def cmd_test(args, out, written):
    cfg = _fit_config(args)
    summary = {"fit": cfg.to_dict(), "procedure": args.procedure, "alpha": args.alpha}
    if args.sumstats:
        res = ingest_summary_stats(args.sumstats, delimiter=args.delimiter)
        _write(out, "rejects.tsv", res.rejects_tsv(), written)
        if args.K is None and not args.select_K and args.procedure == "hlis":
            args.select_K = [1, 2, 3]
        per = {}
        for chrom, data in res.datasets.items():
            per[chrom] = _decide(data.z, args, cfg, out, written, prefix=f"chr{chrom}_")
        summary.update(per_chromosome=per, parsed=res.n_parsed, rejected=res.n_rejected)
    else:
        if args.K is None:
            args.K = 2
        data = _load_dataset(args.input)
        summary.update(_decide(data.z, args, cfg, out, written))
    _write(out, "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n", written)
    return summary


def cmd_evaluate(args, out, written):
    if args.config and "setting" in json.loads(Path(args.config).read_text()):
        preset = SettingPreset.from_dict(json.loads(Path(args.config).read_text())["setting"])
    else:
        preset = get_setting(args.setting)
    overrides = {}
    if args.restarts is not None:
        overrides["restarts"] = args.restarts
    report = run_setting(preset, procedures=args.procedures, alpha=args.alpha, reps=args.reps,
                         seed=args.seed, grid_indices=args.grid_index, m=args.m,
                         n_jobs=args.jobs, fit_overrides=overrides or None)
    _write(out, "report.csv", report.to_csv(), written)
    _write(out, "summary.json", report.to_json(indent=2) + "\n", written)
    _write(out, "timing.json", json.dumps(report.timings(), indent=2) + "\n", written)
    return {"setting": preset.to_dict(), "procedures": list(args.procedures),
            "alpha": args.alpha, "reps": args.reps, "grid_index": args.grid_index}


def cmd_ingest(args, out, written):
    cmap = {k: v for k, v in (("snp_id", args.col_snp), ("chromosome", args.col_chr),
                              ("position", args.col_pos), ("or_value", args.col_or),
                              ("se", args.col_se)) if v}
    res = ingest_summary_stats(args.input, column_map=cmap, delimiter=args.delimiter)
    for chrom, data in res.datasets.items():
        _write(out, f"chr{chrom}.tsv", data.to_tsv(), written)
    _write(out, "rejects.tsv", res.rejects_tsv(), written)
    counts = {"parsed": res.n_parsed, "rejected": res.n_rejected,
              "per_chromosome": {c: len(r) for c, r in res.records.items()}}
    _write(out, "counts.json", json.dumps(counts, indent=2) + "\n", written)
    return {"columns": cmap, "delimiter": args.delimiter, **counts}


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="hlis", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--jobs", type=int, default=_default_jobs(),
                       help="worker processes (default: $HLIS_THREADS or 1)")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    def fit_opts(p):
        p.add_argument("--config", help="JSON file with fit settings")
        p.add_argument("--max-iters", dest="max_iters", type=int)
        p.add_argument("--restarts", type=int)
        p.add_argument("--rel-tol", dest="rel_tol", type=float)
        p.add_argument("--bandwidth", type=float, help="fixed kernel bandwidth")
        p.add_argument("--fix-null", action="store_true",
                       help="keep f0 = N(0, 1) instead of re-estimating it")

    p = sub.add_parser("simulate", help="draw a dataset from a setting or params file")
    common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--setting", type=int, choices=range(1, 13))
    src.add_argument("--params", help="ModelParams JSON")
    p.add_argument("--grid-index", type=int, default=0)
    p.add_argument("--m", type=int)

    p = sub.add_parser("fit", help="EM fit of the HHMM to a z TSV")
    common(p)
    fit_opts(p)
    p.add_argument("--input", required=True)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--S", type=int, default=30)

    p = sub.add_parser("test", help="run a multiple testing procedure")
    common(p)
    fit_opts(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="z TSV")
    src.add_argument("--sumstats", help="summary statistics file (per-chromosome analysis)")
    p.add_argument("--delimiter", default="auto", help="auto, tab, comma or whitespace")
    p.add_argument("--procedure", choices=["hlis", "hlis-oracle", "lis", "lfdr", "bh"],
                   default="hlis")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--K", type=int)
    p.add_argument("--S", type=int, default=30)
    p.add_argument("--select-K", dest="select_K", type=_int_list,
                   help="candidate K values for BIC selection, e.g. 1,2,3")
    p.add_argument("--params", help="true ModelParams JSON (hlis-oracle)")

    p = sub.add_parser("evaluate", help="Monte Carlo error rates for a setting")
    common(p)
    p.add_argument("--setting", type=int, choices=range(1, 13), default=1)
    p.add_argument("--config", help="JSON file; a 'setting' key defines a custom preset")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--grid-index", type=int, action="append",
                   help="restrict to grid points (repeatable)")
    p.add_argument("--procedures", type=lambda s: s.split(","), default=list(PROCEDURES))
    p.add_argument("--m", type=int)
    p.add_argument("--restarts", type=int)

    p = sub.add_parser("ingest", help="summary statistics -> per-chromosome z TSVs")
    common(p, seed=False)
    p.add_argument("--input", required=True)
    p.add_argument("--delimiter", default="auto")
    for col in ("snp", "chr", "pos", "or", "se"):
        p.add_argument(f"--col-{col}", dest=f"col_{col}")
    return parser


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "test": cmd_test,
            "evaluate": cmd_evaluate, "ingest": cmd_ingest}


def run_command(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "procedures", None):
        bad = [p for p in args.procedures if p not in PROCEDURES]
        if bad:
            parser.print_usage(sys.stderr)
            print(f"hlis: error: unknown procedures {bad}", file=sys.stderr)
            return 2
    if args.command == "test" and args.procedure == "hlis-oracle" and not args.params:
        parser.print_usage(sys.stderr)
        print("hlis: error: --procedure hlis-oracle requires --params", file=sys.stderr)
        return 2
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        config = COMMANDS[args.command](args, out, written)
    except (RuntimeError, ValueError, KeyError, OSError) as exc:
        print(f"hlis {args.command}: {exc}", file=sys.stderr)
        return 1
    _manifest(out, args, argv, config, written, started)
    return 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
