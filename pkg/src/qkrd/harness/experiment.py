"""Experiment orchestration: arms x instances -> run records -> report."""

from __future__ import annotations

import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import baselines, qsim
from ..instancegen import DOMAIN_WALL, InstanceFormatError, read_instance
from ..qaoa import ConfigError, OptimizationError, QaoaConfig, convergence_steps, initial_parameters, optimize
from . import stats
from .dataset import DatasetError, canonical_hash, derive_seed, load_manifest

log = logging.getLogger(__name__)

REPORT_FORMAT = "qkrd-report"
REPORT_VERSION = 1
METRICS = ("convergence_steps", "final_energy", "coverage", "feasible_mass", "decoded_feasible")
BASELINE_KINDS = ("greedy", "random", "brute")
SIMPLEX_NOTE = "Nelder-Mead simplex; one objective call per step (COBYLA-style budget)"


@dataclass(frozen=True)
class ArmSpec:
    label: str
    baseline: Optional[str] = None          # greedy | random | brute; None for QAOA
    qaoa: Optional[QaoaConfig] = None
    lambda_onehot: Optional[float] = None   # instance penalty overrides
    lambda_gate: Optional[float] = None

    @classmethod
    def from_dict(cls, data: dict, defaults: Optional[dict] = None) -> "ArmSpec":
        data = dict(data)
        label = data.pop("label", None)
        if not label:
            raise ConfigError("every arm needs a label")
        baseline = data.pop("baseline", None)
        lam = data.pop("lambda_onehot", None)
        gate = data.pop("lambda_gate", None)
        if baseline is not None:
            if baseline not in BASELINE_KINDS:
                raise ConfigError(f"arm {label}: unknown baseline {baseline!r}")
            if data:
                raise ConfigError(f"arm {label}: baseline arms take no QAOA fields ({sorted(data)})")
            return cls(label, baseline, None, lam, gate)
        merged = dict(defaults or {})
        merged.update(data)
        return cls(label, None, QaoaConfig.from_dict(merged), lam, gate)

    def to_dict(self) -> dict:
        d = {"label": self.label, "lambda_onehot": self.lambda_onehot, "lambda_gate": self.lambda_gate}
        if self.baseline:
            d["baseline"] = self.baseline
        else:
            d["qaoa"] = self.qaoa.to_dict()
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    id: str
    dataset: str
    arms: tuple
    master_seed: int = 0
    limit: Optional[int] = None
    metrics: tuple = METRICS
    comparisons: Optional[tuple] = None     # (label_a, label_b) pairs; None -> every pair
    bootstrap_resamples: int = 10000

    def __post_init__(self):
        labels = [a.label for a in self.arms]
        if len(set(labels)) != len(labels):
            raise ConfigError("arm labels must be unique")
        if not self.arms:
            raise ConfigError("experiment has no arms")
        bad = set(self.metrics) - set(METRICS)
        if bad:
            raise ConfigError(f"unknown metrics {sorted(bad)}")
        for a, b in self.pairs():
            if a not in labels or b not in labels:
                raise ConfigError(f"comparison {a} vs {b} names an unknown arm")

    def pairs(self) -> list:
        if self.comparisons is not None:
            return [tuple(p) for p in self.comparisons]
        return list(itertools.combinations([a.label for a in self.arms], 2))

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "ExperimentConfig":
        data = dict(data)
        known = {"id", "dataset", "arms", "defaults", "master_seed", "limit", "metrics", "comparisons",
                 "bootstrap_resamples"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown experiment fields: {sorted(unknown)}")
        defaults = data.pop("defaults", {})
        arms = tuple(ArmSpec.from_dict(a, defaults) for a in data.pop("arms", ()))
        dataset = str(data.pop("dataset"))
        if base_dir is not None and not Path(dataset).is_absolute():
            dataset = str((Path(base_dir) / dataset).resolve())
        comps = data.pop("comparisons", None)
        metrics = tuple(data.pop("metrics", METRICS))
        return cls(data.pop("id"), dataset, arms, comparisons=tuple(tuple(c) for c in comps) if comps else None,
                   metrics=metrics, **data)

    def to_dict(self) -> dict:
        return {"id": self.id, "arms": [a.to_dict() for a in self.arms], "master_seed": self.master_seed,
                "limit": self.limit, "metrics": list(self.metrics),
                "comparisons": [list(p) for p in self.pairs()], "bootstrap_resamples": self.bootstrap_resamples}


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    return ExperimentConfig.from_dict(data, base_dir=path.parent)


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------

def prepare_instance(inst, arm: ArmSpec):
    if arm.lambda_onehot is not None or arm.lambda_gate is not None:
        inst = inst.with_penalties(arm.lambda_onehot, arm.lambda_gate)
    if arm.qaoa is not None and arm.qaoa.mixer == qsim.DW:
        inst = inst.with_encoding(DOMAIN_WALL)
    return inst


def run_arm(inst, arm: ArmSpec, master_seed: int) -> dict:
    """Metrics and trace summary for one arm on one instance (may raise)."""
    inst = prepare_instance(inst, arm)
    if arm.baseline:
        if arm.baseline == "greedy":
            res = baselines.greedy_select(inst)
        elif arm.baseline == "random":
            res = baselines.random_select(inst, derive_seed(master_seed, "random", inst.id, arm.label))
        else:
            res = baselines.brute_force_select(inst)
        return {
            "metrics": {"convergence_steps": None, "final_energy": res.energy, "coverage": res.coverage,
                        "feasible_mass": 1.0, "decoded_feasible": 1},
            "decoded": res.to_dict(),
            "trace": None,
        }
    cfg = arm.qaoa
    init = initial_parameters(cfg, qsim.make_rng(derive_seed(master_seed, "params", inst.id)))
    trace = optimize(inst, cfg, init_params=init, shot_seed=derive_seed(master_seed, "shots", inst.id, arm.label))
    dec = trace.decoded
    return {
        "metrics": {"convergence_steps": convergence_steps(trace), "final_energy": trace.final_energy,
                    "coverage": dec.coverage, "feasible_mass": trace.feasible_mass,
                    "decoded_feasible": int(dec.feasible)},
        "decoded": dec.to_dict(),
        "trace": {"steps_run": trace.steps_run, "converged_early": trace.converged_early,
                  "evaluations": trace.evaluations, "final_objective": trace.final_objective,
                  "initial_params": init.to_list(), "final_params": trace.final_params.to_list(),
                  "energies": trace.energies},
    }


def _job(args) -> dict:
    exp_id, arm_dict, entry, inst_path, master_seed, arm_hash = args
    arm = _arm_from_dict(arm_dict)
    record = {"experiment": exp_id, "arm": arm.label, "instance_id": entry["id"], "seed": master_seed,
              "config_hash": arm_hash, "status": "ok", "error": None}
    if arm.qaoa is not None and arm.qaoa.optimizer == "simplex":
        record["optimizer_note"] = SIMPLEX_NOTE
    try:
        inst = read_instance(inst_path)
        record.update(run_arm(inst, arm, master_seed))
    except (OSError, InstanceFormatError, OptimizationError, qsim.SimulationResourceError,
            ConfigError, ValueError) as exc:
        log.warning("arm %s on %s failed: %s", arm.label, entry["id"], exc)
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}", metrics=None, decoded=None, trace=None)
    return record


def _arm_from_dict(d: dict) -> ArmSpec:
    q = QaoaConfig.from_dict(d["qaoa"]) if "qaoa" in d else None
    return ArmSpec(d["label"], d.get("baseline"), q, d.get("lambda_onehot"), d.get("lambda_gate"))


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def _clean_float(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def summarize(values, resamples: int, seed) -> dict:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"n": 0, "mean": None, "sd": None, "median": None, "ci95": [None, None]}
    low, high = stats.bootstrap_ci(v, resamples=resamples, seed=seed)
    return {"n": int(v.size), "mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
            "median": float(np.median(v)), "ci95": [low, high]}


def metric_table(records: list, metric: str) -> dict:
    """arm -> {instance_id: value} over successful runs with a defined value."""
    out: dict = {}
    for r in records:
        if r["status"] == "ok" and r["metrics"].get(metric) is not None:
            out.setdefault(r["arm"], {})[r["instance_id"]] = float(r["metrics"][metric])
    return out


def pairwise_stats(records: list, pairs: list, metrics, master_seed: int, resamples: int) -> list:
    results = []
    for metric in metrics:
        table = metric_table(records, metric)
        m = len(pairs)
        for a, b in pairs:
            ta, tb = table.get(a, {}), table.get(b, {})
            common = sorted(set(ta) & set(tb))     # a dropout removes the pair from both arms
            if not common:
                continue
            seed = derive_seed(master_seed, "bootstrap", a, b, metric)
            res = stats.compare([ta[i] for i in common], [tb[i] for i in common], a, b, metric,
                                m=m, resamples=resamples, seed=seed)
            results.append(res.to_dict())
    return results


def build_report(cfg: ExperimentConfig, manifest, records: list, dataset_ids: list) -> dict:
    cfg_dict = cfg.to_dict()
    config_hash = canonical_hash({"experiment": cfg_dict, "dataset": manifest.digest})
    arms = {}
    for arm in cfg.arms:
        runs = [r for r in records if r["arm"] == arm.label]
        ok = [r for r in runs if r["status"] == "ok"]
        metrics = {}
        for metric in cfg.metrics:
            vals = [r["metrics"][metric] for r in ok if r["metrics"].get(metric) is not None]
            metrics[metric] = summarize(vals, cfg.bootstrap_resamples,
                                        derive_seed(cfg.master_seed, "summary", arm.label, metric))
        arms[arm.label] = {"spec": arm.to_dict(), "n_ok": len(ok), "n_failed": len(runs) - len(ok),
                           "metrics": metrics}
    failures = [{"arm": r["arm"], "instance_id": r["instance_id"], "error": r["error"]}
                for r in records if r["status"] != "ok"]
    report = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "experiment": cfg.id,
        "config": cfg_dict,
        "config_hash": config_hash,
        "master_seed": cfg.master_seed,
        "dataset": {"manifest_hash": manifest.digest, "config_hash": manifest.data.get("config_hash"),
                    "instances": dataset_ids},
        "arm_order": [a.label for a in cfg.arms],
        "arms": arms,
        "stats": pairwise_stats(records, cfg.pairs(), cfg.metrics, cfg.master_seed, cfg.bootstrap_resamples),
        "failures": failures,
        "partial": bool(failures),
        "runs": records,
    }
    return _json_safe(report)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return _clean_float(obj)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def run_experiment(cfg: ExperimentConfig, out_dir=None, jobs: int = 1) -> dict:
    """Run every arm on every manifest instance; persist runs and the report.

    Missing instance files and arm failures are recorded, not raised; the
    report then carries ``partial: true`` and a failure ledger.
    """
    manifest = load_manifest(cfg.dataset)
    entries = manifest.entries[:cfg.limit] if cfg.limit else manifest.entries
    if not entries:
        raise DatasetError("dataset has no instances")
    arm_hashes = {a.label: canonical_hash(a.to_dict()) for a in cfg.arms}
    tasks = [(cfg.id, arm.to_dict(), e, str(manifest.instance_path(e)), cfg.master_seed, arm_hashes[arm.label])
             for arm in cfg.arms for e in entries]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_job, tasks, chunksize=max(1, len(tasks) // (8 * jobs))))
    else:
        records = [_job(t) for t in tasks]
    records = _json_safe(records)
    report = build_report(cfg, manifest, records, [e["id"] for e in entries])
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def write_report(report: dict, out_dir) -> Path:
    out_dir = Path(out_dir)
    for r in report["runs"]:
        path = out_dir / "runs" / r["arm"] / f"{r['instance_id']}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_json(r))
    path = out_dir / "report.json"
    path.write_text(dump_json(report))
    return path


def read_report(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    data = json.loads(path.read_text())
    if data.get("format") != REPORT_FORMAT:
        raise ValueError(f"{path} is not an experiment report")
    if data.get("version") != REPORT_VERSION:
        raise ValueError(f"unsupported report version {data.get('version')!r}")
    return data
