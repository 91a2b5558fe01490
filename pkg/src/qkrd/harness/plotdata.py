"""Per-figure CSV tables for external plotting."""

from __future__ import annotations

import csv
import io
from pathlib import Path

FIGURES = {
    "fig2": ("mixer comparison", ("convergence_steps", "feasible_mass", "coverage", "final_energy")),
    "fig3": ("warm-start ablation", ("convergence_steps", "final_energy")),
    "fig4": ("risk objective vs expectation", ("final_energy", "coverage", "convergence_steps")),
    "fig5": ("coverage distributions", ("coverage",)),
    "traces": ("per-step objective traces", ()),
}


class UnknownFigure(KeyError):
    def __str__(self):
        return f"unknown figure id {self.args[0]!r}; available: {', '.join(sorted(FIGURES))}"


def _header(report: dict, figure: str) -> str:
    return (f"# figure={figure} experiment={report.get('experiment', '')} "
            f"config_hash={report.get('config_hash', '')}\n")


def _csv(header: str, columns: list, rows: list) -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def figure_tables(report: dict, figure: str) -> dict:
    """File name -> CSV text for one figure id."""
    if figure not in FIGURES:
        raise UnknownFigure(figure)
    header = _header(report, figure)
    runs = [r for r in report.get("runs", []) if r.get("status") == "ok"]
    order = {a: i for i, a in enumerate(report.get("arm_order", []))}
    runs.sort(key=lambda r: (order.get(r["arm"], len(order)), r["arm"], r["instance_id"]))
    if figure == "traces":
        rows = [(r["arm"], r["instance_id"], step, e)
                for r in runs if r.get("trace") for step, e in enumerate(r["trace"]["energies"])]
        return {"traces.csv": _csv(header, ["arm", "instance_id", "step", "energy"], rows)}
    metrics = FIGURES[figure][1]
    rows = [(r["arm"], r["instance_id"], m, r["metrics"][m])
            for m in metrics for r in runs if r["metrics"].get(m) is not None]
    summary = []
    for arm in report.get("arm_order", []):
        for m in metrics:
            s = report["arms"][arm]["metrics"].get(m)
            if s and s["n"]:
                summary.append((arm, m, s["n"], s["mean"], s["sd"], s["median"], s["ci95"][0], s["ci95"][1]))
    return {
        f"{figure}.csv": _csv(header, ["arm", "instance_id", "metric", "value"], rows),
        f"{figure}_summary.csv": _csv(header, ["arm", "metric", "n", "mean", "sd", "median", "ci_low", "ci_high"],
                                      summary),
    }


def emit_plot_data(report: dict, figure: str, out_dir) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in figure_tables(report, figure).items():
        path = out_dir / name
        path.write_text(text)
        paths.append(path)
    return paths
