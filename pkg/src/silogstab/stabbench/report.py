"""Run reports and their CSV / JSON / SVG serializations.

Floats are written with ``repr`` so files round-trip exactly and the
non-finite tokens come out as lowercase ``nan``, ``inf`` and ``-inf``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .. import __version__
from .monitor import NanEvent

__all__ = [
    "TraceRecord",
    "SimReport",
    "TableReport",
    "summarize",
    "build_id",
    "emit_report",
    "read_manifest",
    "TRACE_HEADER",
]

TRACE_HEADER = ("iteration", "lr", "loss", "grad_var", "nan_flag")


def build_id() -> str:
    return f"silogstab-{__version__}/numpy-{np.__version__}/py-{platform.python_version()}"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_safe(v):
    """JSON has no nan/inf literals; encode them as lowercase strings."""
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    lr: float
    loss: float
    grad_var: float
    nan_flag: bool

    def row(self) -> list[str]:
        return [_fmt(self.iteration), _fmt(self.lr), _fmt(self.loss), _fmt(self.grad_var), _fmt(self.nan_flag)]


def summarize(trace: Sequence[TraceRecord]) -> dict:
    losses = np.array([r.loss for r in trace], dtype=np.float64)
    first_nan = next((r.iteration for r in trace if r.nan_flag), None)
    finite = losses[np.isfinite(losses)]
    return {
        "iterations": len(trace),
        "final_loss": float(losses[-1]) if len(trace) else None,
        "min_loss": float(finite.min()) if finite.size else None,
        "first_nan_iteration": first_nan,
        "nan_count": int(sum(r.nan_flag for r in trace)),
    }


@dataclass
class SimReport:
    """A training-run trace plus its manifest and summary."""

    manifest: dict
    trace: list = field(default_factory=list)
    nan_events: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def finalize(self) -> "SimReport":
        self.summary = summarize(self.trace)
        return self

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.trace], dtype=np.float64)

    @property
    def first_nan_iteration(self) -> Optional[int]:
        return self.summary.get("first_nan_iteration")

    def first_below(self, threshold: float) -> Optional[int]:
        for r in self.trace:
            if np.isfinite(r.loss) and r.loss < threshold:
                return r.iteration
        return None

    def to_json(self) -> dict:
        return _json_safe(
            {
                "manifest": self.manifest,
                "summary": self.summary,
                "nan_events": [e.to_dict() for e in self.nan_events],
            }
        )

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.trace:
            w.writerow(r.row())
        return buf.getvalue()


@dataclass
class TableReport:
    """Tabular result of a sweep: one row per grid point."""

    manifest: dict
    columns: tuple
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    # per-trial arrays kept in memory only, never serialized
    extras: dict = field(default_factory=dict, repr=False)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def lookup(self, **keys) -> tuple:
        idx = {k: self.columns.index(k) for k in keys}
        for r in self.rows:
            if all(_close(r[i], keys[k]) for k, i in idx.items()):
                return r
        raise KeyError(keys)

    def get(self, name: str, **keys):
        return self.lookup(**keys)[self.columns.index(name)]

    def to_json(self) -> dict:
        return _json_safe(
            {
                "manifest": self.manifest,
                "summary": self.summary,
                "columns": list(self.columns),
                "rows": [list(r) for r in self.rows],
            }
        )

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()


def _close(a, b) -> bool:
    if isinstance(a, str) or isinstance(b, str):
        return a == b
    return math.isclose(float(a), float(b), rel_tol=1e-12, abs_tol=0.0) or a == b


def read_manifest(path) -> dict:
    with open(path) as f:
        return json.load(f)["manifest"]


def _svg_trace(report: SimReport, path: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "silogstab"
    it = np.array([r.iteration for r in report.trace])
    loss = report.losses
    gv = np.array([r.grad_var for r in report.trace], dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6, 4))
    pos = np.isfinite(loss) & (loss > 0)
    ax.plot(it[pos], loss[pos], lw=1, label="loss")
    gpos = np.isfinite(gv) & (gv > 0)
    if gpos.any():
        ax.plot(it[gpos], gv[gpos], lw=1, alpha=0.6, label="grad var")
    ax.set_yscale("log")
    for e in report.nan_events:
        ax.axvline(e.iteration, color="red", ls="--", lw=1)
        ax.annotate(f"{e.kind} in {e.tensor}", (e.iteration, 1), xycoords=("data", "axes fraction"),
                    color="red", fontsize=8, ha="right", va="top", rotation=90)
    ax.set_xlabel("iteration")
    ax.legend(loc="upper right")
    ax.set_title(report.manifest.get("runner", "run"))
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _svg_table(report: TableReport, path: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "silogstab"
    fig, ax = plt.subplots(figsize=(6, 4))
    cols = report.columns
    if "sigma_w" in cols and "mean_grad_var" in cols:
        eps_col = report.column("epsilon")
        sig = np.array(report.column("sigma_w"), dtype=float)
        gv = np.array(report.column("mean_grad_var"), dtype=float)
        nanf = np.array(report.column("nan_fraction"), dtype=float)
        for eps in dict.fromkeys(eps_col):
            sel = np.array([e == eps for e in eps_col])
            ok = sel & np.isfinite(gv) & (gv > 0)
            ax.plot(sig[ok], gv[ok], marker="o", lw=1, label=f"eps={eps}")
            bad = sel & (nanf > 0)
            if bad.any():
                ax.scatter(sig[bad], np.where(np.isfinite(gv[bad]) & (gv[bad] > 0), gv[bad], np.nanmax(gv[ok]) if ok.any() else 1.0),
                           marker="x", color="red", zorder=3)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("sigma_w")
        ax.set_ylabel("mean Var[dL/dW]")
        ax.legend(fontsize=7)
    elif "valid_rate" in cols:
        rate = np.array(report.column("valid_rate"), dtype=float) * 100
        ax.plot(rate, report.column("nan_unbiased"), marker="o", label="unbiased")
        ax.plot(rate, report.column("nan_biased"), marker="s", label="biased")
        ax.set_xlabel("valid rate (%)")
        ax.set_ylabel("NaN count")
        ax.legend()
    ax.set_title(report.manifest.get("runner", "sweep"))
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(report, out_dir, formats: Sequence[str] = ("csv", "json"), stem: Optional[str] = None) -> list[Path]:
    """Write the report into ``out_dir`` and return the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"cannot write to {out}")
    stem = stem or report.manifest.get("runner", "report")
    paths = []
    for fmt in formats:
        if fmt == "csv":
            p = out / f"{stem}.csv"
            p.write_text(report.csv_text())
        elif fmt == "json":
            p = out / f"{stem}.json"
            p.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
        elif fmt == "svg":
            p = out / f"{stem}.svg"
            (_svg_trace if isinstance(report, SimReport) else _svg_table)(report, p)
        else:
            raise ValueError(f"unknown format {fmt!r}")
        paths.append(p)
    return paths
