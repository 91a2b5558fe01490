"""Command line entry point: gen, run, stats, plotdata, oracle."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .baselines import brute_force_min
from .instancegen import InstanceFormatError, read_instance
from .qaoa import ConfigError
from .harness.dataset import DatasetError, GenConfig, generate_dataset
from .harness.experiment import dump_json, load_config, read_report, run_experiment
from .harness.plotdata import FIGURES, UnknownFigure, emit_plot_data
from .qsim import SimulationResourceError


def _load_mapping(path: Path) -> dict:
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml
        return yaml.safe_load(text) or {}
    return json.loads(text)


def cmd_gen(args) -> int:
    data = _load_mapping(Path(args.config)) if args.config else {}
    if args.sources:
        data["sources"] = args.sources
    elif data.get("sources") and args.config:
        base = Path(args.config).parent
        data["sources"] = [str(base / s) if not Path(s).is_absolute() else s for s in data["sources"]]
    cfg = GenConfig.from_dict(data)
    manifest = generate_dataset(cfg, args.out, seed=args.seed)
    c = manifest["counts"]
    print(f"{len(manifest['instances'])} instances written to {args.out} "
          f"({c['passed_filter']} of {c['positions']} positions passed the filter)")
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.dataset:
        cfg = replace(cfg, dataset=str(Path(args.dataset).resolve()))
    if args.limit:
        cfg = replace(cfg, limit=args.limit)
    report = run_experiment(cfg, out_dir=args.out, jobs=args.jobs)
    for label in report["arm_order"]:
        arm = report["arms"][label]
        parts = []
        for metric, s in arm["metrics"].items():
            if s["n"]:
                parts.append(f"{metric}={s['mean']:.4g}")
        print(f"{label:>16}  ok={arm['n_ok']} failed={arm['n_failed']}  " + "  ".join(parts))
    print(f"report: {Path(args.out) / 'report.json'}")
    return 1 if report["partial"] and args.strict else 0


STAT_COLUMNS = ["metric", "arm_a", "arm_b", "n", "mean_a", "mean_b", "mean_diff", "t_statistic", "p_value",
                "p_bonferroni", "cohens_d", "ci_low", "ci_high", "flags"]


def _stat_rows(report: dict, metrics=None) -> list:
    rows = []
    for s in report["stats"]:
        if metrics and s["metric"] not in metrics:
            continue
        rows.append([s["metric"], s["arm_a"], s["arm_b"], s["n"], s["mean_a"], s["mean_b"], s["mean_diff"],
                     s["t_statistic"], s["p_value"], s["p_bonferroni"], s["cohens_d"], s["ci95"][0],
                     s["ci95"][1], ";".join(s["flags"])])
    return rows


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def cmd_stats(args) -> int:
    report = read_report(args.report)
    rows = _stat_rows(report, args.metric)
    widths = [max(len(c), *(len(_fmt(r[i])) for r in rows)) if rows else len(c) for i, c in enumerate(STAT_COLUMNS)]
    print("  ".join(c.ljust(w) for c, w in zip(STAT_COLUMNS, widths)))
    for r in rows:
        print("  ".join(_fmt(v).ljust(w) for v, w in zip(r, widths)))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "stats.csv", "w", newline="") as fh:
            fh.write(f"# experiment={report['experiment']} config_hash={report['config_hash']}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(STAT_COLUMNS)
            w.writerows([["" if v is None else v for v in r] for r in rows])
    return 0


def cmd_plotdata(args) -> int:
    report = read_report(args.report)
    figures = sorted(FIGURES) if args.figure == "all" else [args.figure]
    for fig in figures:
        for path in emit_plot_data(report, fig, args.out):
            print(path)
    return 0


def cmd_oracle(args) -> int:
    inst = read_instance(args.instance)
    res = brute_force_min(inst.qubo, inst.layout)
    choice = inst.layout.decode(res.feasible_bits)
    m, f = choice
    out = {
        "instance_id": inst.id,
        "n_qubits": inst.n_qubits,
        "global_min": {"bits": "".join(map(str, res.bits)), "energy": res.energy,
                       "feasible": inst.layout.decode(res.bits) is not None},
        "feasible_min": {"bits": "".join(map(str, res.feasible_bits)), "energy": res.feasible_energy,
                         "move": inst.candidates[m].move,
                         "followup": inst.followups[m][f].move if f is not None else None,
                         "coverage": inst.selection_coverage(m, f)},
    }
    text = dump_json(out)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qkrd", description="QKRD benchmark generation and QAOA experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="PGN/FEN sources -> instance dataset + manifest")
    g.add_argument("sources", nargs="*", help="PGN or FEN-list files (default: bundled fixtures)")
    g.add_argument("--config", help="dataset config (YAML/JSON): instance fields, max_instances, per_game")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="experiment config -> report")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, help="override the master seed")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out", required=True)
    r.add_argument("--dataset", help="override the manifest path")
    r.add_argument("--limit", type=int, help="use only the first N instances")
    r.add_argument("--strict", action="store_true", help="exit 1 when any run failed")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("stats", help="report -> paired test table")
    s.add_argument("report")
    s.add_argument("--metric", action="append")
    s.add_argument("--out")
    s.set_defaults(func=cmd_stats)

    pd = sub.add_parser("plotdata", help="report -> per-figure CSV files")
    pd.add_argument("report")
    pd.add_argument("--figure", default="all", help=f"one of {', '.join(sorted(FIGURES))} or 'all'")
    pd.add_argument("--out", required=True)
    pd.set_defaults(func=cmd_plotdata)

    o = sub.add_parser("oracle", help="instance -> brute-force minimum")
    o.add_argument("instance")
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DatasetError, InstanceFormatError, SimulationResourceError, UnknownFigure,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
