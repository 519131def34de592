"""Report serialization (JSON, JSONL, CSV, plain text) and matplotlib figures."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluate import SuiteReport, TrialRecord  # noqa: E402

_STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}
_METRIC_COLORS = {"sr": "#4c72b0", "ia": "#dd8452", "ca": "#55a868"}


def table_rows(report: SuiteReport) -> list[list[str]]:
    """Header plus one row for the method: SR, IA and CA columns per category, then overall."""
    header = ["method"]
    row = [report.method]
    for cat, s in [*report.categories.items(), ("overall", report.overall)]:
        header += [f"{cat}_sr", f"{cat}_ia", f"{cat}_ca"]
        row += [f"{s.sr:.1f}", f"{s.ia:.1f}", f"{s.ca:.1f}"]
    return [header, row]


def to_csv(report: SuiteReport) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(table_rows(report))
    return buf.getvalue()


def to_text(report: SuiteReport) -> str:
    lines = [
        f"method: {report.method}",
        f"fingerprint: {report.fingerprint}",
        f"trials: {report.n_trials}   mean backend latency: {report.mean_latency_s * 1000:.1f} ms",
        "",
        f"{'category':<14}{'n':>5}{'SR':>8}{'IA':>8}{'CA':>8}",
    ]
    for cat, s in report.categories.items():
        lines.append(f"{cat:<14}{s.n:>5}{s.sr:>8.1f}{s.ia:>8.1f}{s.ca:>8.1f}")
    o = report.overall
    lines.append(f"{'overall':<14}{o.n:>5}{o.sr:>8.1f}{o.ia:>8.1f}{o.ca:>8.1f}")
    if report.errors:
        lines.append("")
        lines.append("errors: " + ", ".join(f"{k} x{v}" for k, v in sorted(report.errors.items())))
    return "\n".join(lines) + "\n"


def to_jsonl(records: Sequence[TrialRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in records)


def read_jsonl(path: str | Path) -> list[TrialRecord]:
    with open(path) as f:
        return [TrialRecord(**json.loads(line)) for line in f if line.strip()]


def plot_categories(report: SuiteReport, path: str | Path) -> None:
    cats = list(report.categories)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.8 * len(cats) + 2), 3.2))
        width = 0.26
        for i, m in enumerate(("sr", "ia", "ca")):
            xs = [k + (i - 1) * width for k in range(len(cats))]
            ax.bar(xs, [getattr(report.categories[c], m) for c in cats], width,
                   label=m.upper(), color=_METRIC_COLORS[m])
        ax.set_xticks(range(len(cats)), cats, rotation=30, ha="right")
        ax.set_ylim(0, 122)
        ax.set_yticks(range(0, 101, 20))
        ax.set_ylabel("%")
        ax.set_title(report.method)
        ax.legend(ncols=3, loc="upper center")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def sweep_rows(points: Sequence[tuple[float, SuiteReport]]) -> list[list[str]]:
    rows = [["sigma_px", "n", "sr", "ia", "ca"]]
    for sigma, rep in points:
        o = rep.overall
        rows.append([f"{sigma:g}", str(o.n), f"{o.sr:.1f}", f"{o.ia:.1f}", f"{o.ca:.1f}"])
    return rows


def plot_sweep(points: Sequence[tuple[float, SuiteReport]], path: str | Path) -> None:
    sig = [p[0] for p in points]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        for m in ("sr", "ia", "ca"):
            ax.plot(sig, [getattr(p[1].overall, m) for p in points], marker="o",
                    label=m.upper(), color=_METRIC_COLORS[m])
        ax.set_xlabel("grounding noise sigma (px)")
        ax.set_ylabel("%")
        ax.set_ylim(0, 105)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def write_report(report: SuiteReport, records: Sequence[TrialRecord], out_dir: str | Path,
                 figures: bool = True) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out / "report.json",
        "records": out / "records.jsonl",
        "csv": out / "table.csv",
        "text": out / "report.txt",
    }
    paths["json"].write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    paths["records"].write_text(to_jsonl(records))
    paths["csv"].write_text(to_csv(report))
    paths["text"].write_text(to_text(report))
    if figures and report.categories:
        paths["figure"] = out / "categories.png"
        plot_categories(report, paths["figure"])
    return paths
