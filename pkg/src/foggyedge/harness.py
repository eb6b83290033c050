"""Scenario runs with their satisfaction-delay statistics, plus multi-mode sweeps."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .config import MODES, ScenarioConfig
from .metrics import RequestRecord
from .network import Network

CSV_COLUMNS = ("rate", "mode", "mean_csd", "p95_csd", "satisfaction_rate",
               "case1", "case2", "case3", "case4")

__all__ = ["CSV_COLUMNS", "RunReport", "SweepResult", "compute_csd", "read_csv",
           "run_scenario", "sweep", "write_csv"]


@dataclass
class RunReport:
    cfg: ScenarioConfig
    rate: float
    records: list[RequestRecord]
    stats: dict
    counters: dict
    network: Network = field(repr=False)

    def cases(self) -> dict[int, int]:
        out = {k: 0 for k in (1, 2, 3, 4)}
        for r in self.records:
            if r.satisfied_at is not None and r.case in out and r.created_at >= self.cfg.warmup_ticks:
                out[r.case] += 1
        return out

    def row(self) -> dict:
        c = self.cases()
        return {"rate": self.rate, "mode": self.cfg.mode, "mean_csd": self.stats["mean"],
                "p95_csd": self.stats["p95"], "satisfaction_rate": self.stats["satisfaction_rate"],
                "case1": c[1], "case2": c[2], "case3": c[3], "case4": c[4]}

    def text(self) -> str:
        s = self.stats
        lines = [f"mode {self.cfg.mode}  rate {self.rate:g}/s  seed {self.cfg.seed}  "
                 f"duration {self.cfg.scenario_duration_s:g}s",
                 f"generated {s['generated']}  satisfied {s['satisfied']}  "
                 f"satisfaction {s['satisfaction_rate']:.3f}",
                 f"csd mean {_fmt(s['mean'])}  p50 {_fmt(s['p50'])}  p95 {_fmt(s['p95'])}",
                 "cases " + "  ".join(f"{k}:{v}" for k, v in self.cases().items())]
        for k in sorted(self.counters):
            lines.append(f"  {k} {self.counters[k]}")
        return "\n".join(lines) + "\n"


def _fmt(v: Optional[float]) -> str:
    return "-" if v is None else f"{v * 1000:.2f}ms"


def compute_csd(records: Iterable[RequestRecord], warmup: int = 0) -> dict:
    """Mean, median and 95th percentile CSD in seconds over post-warmup records."""
    recs = [r for r in records if r.created_at >= warmup]
    csd = np.array([r.csd for r in recs if r.satisfied_at is not None], dtype=float) / 1e6
    out = {"generated": len(recs), "satisfied": int(csd.size),
           "satisfaction_rate": csd.size / len(recs) if recs else 0.0,
           "mean": None, "p50": None, "p95": None}
    if csd.size:
        out.update(mean=float(csd.mean()), p50=float(np.percentile(csd, 50)),
                   p95=float(np.percentile(csd, 95)))
    return out


def run_scenario(cfg: ScenarioConfig, rate: Optional[float] = None,
                 out_dir: Union[str, Path, None] = None, check: bool = True) -> RunReport:
    cfg.validate()
    net = Network(cfg, rate)
    net.finish(check=check)
    recs = net.metrics.list()
    counters = dict(net.metrics.counters)
    counters.update({f"bridge_{k}": v for k, v in net.bridge.counters.items()})
    if net.vfg is not None:
        counters.update({f"vfg_{k}": v for k, v in net.vfg.counters.items()})
    counters["code_unavailable"] = sum(e.code_unavailable for e in net.edges)
    counters["events"] = net.engine.processed
    report = RunReport(cfg, net.rate, recs, compute_csd(recs, cfg.warmup_ticks), counters, net)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "summary.csv", [report.row()])
        (out / "report.txt").write_text(report.text())
        if cfg.output_trace:
            net.write_trace(out / "trace.bin")
    return report


@dataclass
class SweepResult:
    rows: list[dict]
    errors: list[str]
    ordering_ok: bool
    low_rate_ok: bool

    @property
    def partial(self) -> bool:
        return bool(self.errors)

    def table(self) -> str:
        head = f"{'rate':>5} {'mode':<10} {'mean':>10} {'p95':>10} {'sat':>6} " \
               f"{'c1':>5} {'c2':>5} {'c3':>5} {'c4':>5}"
        lines = [head]
        for r in self.rows:
            lines.append(f"{r['rate']:>5g} {r['mode']:<10} {_fmt(r['mean_csd']):>10} "
                         f"{_fmt(r['p95_csd']):>10} {r['satisfaction_rate']:>6.3f} "
                         f"{r['case1']:>5} {r['case2']:>5} {r['case3']:>5} {r['case4']:>5}")
        lines.append(f"self-check ordering(rate>=5): {'ok' if self.ordering_ok else 'FAILED'}  "
                     f"low-rate equivalence: {'ok' if self.low_rate_ok else 'FAILED'}")
        if self.errors:
            lines.append("PARTIAL TABLE: " + "; ".join(self.errors))
        return "\n".join(lines) + "\n"


def _cell(cfg: ScenarioConfig, mode: str, rate: float):
    try:
        return run_scenario(cfg.replace(scenario_mode=mode, output_trace=False), rate).row(), None
    except Exception as e:  # a failed cell is reported, the rest of the table survives
        return None, f"{mode}@{rate:g}: {type(e).__name__}: {e}"


def sweep(cfg: ScenarioConfig, rates: Optional[Sequence[float]] = None,
          out_dir: Union[str, Path, None] = None, workers: int = 1) -> SweepResult:
    rates = list(rates if rates is not None else cfg.scenario_rates)
    cells = [(m, r) for r in rates for m in MODES]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda c: _cell(cfg, *c), cells))
    else:
        results = [_cell(cfg, *c) for c in cells]
    rows = [row for row, _ in results if row is not None]
    errors = [err for _, err in results if err is not None]
    res = SweepResult(rows, errors, *self_check(rows))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "summary.csv", rows)
        (out / "report.txt").write_text(res.table())
    return res


def self_check(rows: list[dict], gap: float = 0.05, tol: float = 0.05) -> tuple[bool, bool]:
    """(ordering holds at every rate >= 5, FoggyEdge ~ EdgeOnly at rates <= 2)."""
    by = {(r["rate"], r["mode"]): r["mean_csd"] for r in rows}
    ordering = low = True
    for rate in sorted({r["rate"] for r in rows}):
        f, e, c = (by.get((rate, m)) for m in MODES)
        if None in (f, e, c):
            if rate >= 5:
                ordering = False
            continue
        if rate >= 5 and not (f <= e * (1 - gap) and e <= c * (1 - gap)):
            ordering = False
        if rate <= 2 and abs(f - e) > tol * e:
            low = False
    return ordering, low


def write_csv(path: Union[str, Path, None], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r[k] is None else (f"{r[k]:.6f}" if isinstance(r[k], float) and k != "rate" else r[k]))
                    for k in CSV_COLUMNS})
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path_or_text: Union[str, Path]) -> list[dict]:
    p = Path(path_or_text) if not str(path_or_text).startswith("rate,") else None
    text = p.read_text() if p is not None else str(path_or_text)
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append({
            "rate": float(r["rate"]), "mode": r["mode"],
            "mean_csd": float(r["mean_csd"]) if r["mean_csd"] else None,
            "p95_csd": float(r["p95_csd"]) if r["p95_csd"] else None,
            "satisfaction_rate": float(r["satisfaction_rate"]),
            **{f"case{k}": int(r[f"case{k}"]) for k in (1, 2, 3, 4)},
        })
    return rows
