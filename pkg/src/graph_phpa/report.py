"""Cross-policy comparison: consistency checks, summary tables, pod charts.

Runs are only comparable when they replayed the same trace minutes with the
same propagation seed; anything else silently compares apples to oranges, so
mismatches raise instead of warn. All emitted files are byte-stable for a
given set of runs.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .cluster_sim import SimRow, SimulationLog
from .errors import RunMismatchError, ValidationError

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def load_run(run_dir: str | Path) -> SimulationLog:
    """Rebuild a simulation log from a run directory's summary.json and sim.csv."""
    run_dir = Path(run_dir)
    summary_path = run_dir / "summary.json"
    csv_path = run_dir / "sim.csv"
    if not summary_path.exists() or not csv_path.exists():
        raise ValidationError(f"{run_dir} is not a run directory "
                              f"(needs summary.json and sim.csv)")
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    log = SimulationLog(policy_name=summary["policy"], seed=summary["seed"],
                        trace_sha256=summary["trace_sha256"],
                        start_minute=summary["start_minute"], horizon=summary["horizon"],
                        services=tuple(summary["service_order"]))
    with open(csv_path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            log.rows.append(SimRow(
                minute=int(row["minute"]), service=row["service"],
                external_rps=float(row["external_rps"]),
                service_rps=float(row["service_rps"]), pods=int(row["pods"]),
                utilization=float(row["utilization"]),
                overloaded=bool(int(row["overloaded"])), policy=row["policy"],
                decision_delta=int(row["decision_delta"])))
    return log


def check_runs_comparable(logs: list[SimulationLog]) -> None:
    """All runs must share trace, window, propagation seed, and service set."""
    if len(logs) < 2:
        raise ValidationError("need at least two runs to compare")
    names = [log.policy_name for log in logs]
    if len(set(names)) != len(names):
        raise RunMismatchError(f"duplicate policy names in comparison: {names}",
                               field="policy")
    first = logs[0]
    for other in logs[1:]:
        for field_ in ("trace_sha256", "start_minute", "horizon", "seed", "services"):
            if getattr(other, field_) != getattr(first, field_):
                raise RunMismatchError(
                    f"runs {first.policy_name!r} and {other.policy_name!r} differ in "
                    f"{field_}: {getattr(first, field_)!r} vs {getattr(other, field_)!r}",
                    field=field_)


def comparison_table(logs: list[SimulationLog], baseline: str) -> dict:
    """Totals per policy plus pod-minute savings relative to the baseline run."""
    check_runs_comparable(logs)
    by_name = {log.policy_name: log for log in logs}
    if baseline not in by_name:
        raise ValidationError(f"baseline policy {baseline!r} not among runs "
                              f"{sorted(by_name)}")
    base_pm = by_name[baseline].pod_minutes()
    rows = []
    for log in logs:
        pm = log.pod_minutes()
        savings = None
        if log.policy_name != baseline and base_pm > 0:
            savings = (base_pm - pm) / base_pm * 100.0
        utils = [r.utilization for r in log.rows]
        rows.append({
            "policy": log.policy_name,
            "pod_minutes": pm,
            "overload_minutes": log.overload_minutes(),
            "mean_utilization": sum(utils) / len(utils) if utils else 0.0,
            "peak_total_pods": log.peak_total_pods(),
            "savings_vs_baseline_pct": savings,
        })
    return {
        "baseline": baseline,
        "trace_sha256": logs[0].trace_sha256,
        "start_minute": logs[0].start_minute,
        "horizon": logs[0].horizon,
        "seed": logs[0].seed,
        "policies": rows,
    }


def render_table_text(table: dict) -> str:
    """Fixed-width text rendering of a comparison table."""
    header = ("policy", "pod_minutes", "overload_minutes", "mean_util", "peak_pods",
              "savings_%")
    lines = []
    body = []
    for row in table["policies"]:
        savings = row["savings_vs_baseline_pct"]
        body.append((row["policy"], str(row["pod_minutes"]), str(row["overload_minutes"]),
                     f"{row['mean_utilization']:.3f}", str(row["peak_total_pods"]),
                     "baseline" if savings is None else f"{savings:.2f}"))
    widths = [max(len(header[i]), *(len(r[i]) for r in body)) for i in range(len(header))]
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)))
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(header))))
    lines.append("")
    lines.append(f"horizon: {table['horizon']} minutes from minute {table['start_minute']}, "
                 f"seed {table['seed']}")
    return "\n".join(lines) + "\n"


def _pods_by_minute(log: SimulationLog, service: str) -> list[tuple[int, int]]:
    return [(r.minute, r.pods) for r in log.rows if r.service == service]


def pods_chart_svg(logs: list[SimulationLog], service: str) -> str:
    """Step chart of pod counts over time, one polyline per policy."""
    if service not in logs[0].services:
        raise ValidationError(f"unknown service {service!r}")
    series = [(log.policy_name, _pods_by_minute(log, service)) for log in logs]
    width, height = 960, 320
    left, right, top, bottom = 60, 20, 36, 44
    plot_w, plot_h = width - left - right, height - top - bottom

    minutes = [m for _, pts in series for m, _ in pts]
    pods = [p for _, pts in series for _, p in pts]
    m_lo, m_hi = min(minutes), max(minutes)
    p_hi = max(pods) + 1
    m_span = max(m_hi - m_lo, 1)

    def sx(m):
        return left + (m - m_lo) / m_span * plot_w

    def sy(p):
        return top + (1.0 - p / p_hi) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="20" font-family="sans-serif" font-size="14">'
        f'pods over time: {service}</text>',
    ]
    for tick in range(0, p_hi + 1, max(1, p_hi // 6)):
        y = sy(tick)
        parts.append(f'<line x1="{left}" y1="{y:.2f}" x2="{width - right}" y2="{y:.2f}" '
                     f'stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{left - 8}" y="{y + 4:.2f}" font-family="sans-serif" '
                     f'font-size="11" text-anchor="end">{tick}</text>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        m = m_lo + frac * m_span
        x = sx(m)
        parts.append(f'<text x="{x:.2f}" y="{height - bottom + 18}" '
                     f'font-family="sans-serif" font-size="11" '
                     f'text-anchor="middle">{int(round(m))}</text>')
    parts.append(f'<text x="{left + plot_w / 2:.2f}" y="{height - 8}" '
                 f'font-family="sans-serif" font-size="12" text-anchor="middle">minute</text>')

    for i, (name, pts) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        coords = []
        prev_p = None
        for m, p in pts:
            if prev_p is not None and p != prev_p:
                coords.append(f"{sx(m):.2f},{sy(prev_p):.2f}")
            coords.append(f"{sx(m):.2f},{sy(p):.2f}")
            prev_p = p
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{" ".join(coords)}"/>')
        lx = left + 10 + i * 180
        parts.append(f'<line x1="{lx}" y1="{top - 6}" x2="{lx + 22}" y2="{top - 6}" '
                     f'stroke="{color}" stroke-width="3"/>')
        parts.append(f'<text x="{lx + 28}" y="{top - 2}" font-family="sans-serif" '
                     f'font-size="12">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_comparison(out_dir: str | Path, logs: list[SimulationLog], baseline: str) -> dict:
    """Emit table.json, table.txt, and one pods chart per service; returns the table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = comparison_table(logs, baseline)
    (out_dir / "table.json").write_text(json.dumps(table, sort_keys=True, indent=2) + "\n",
                                        encoding="utf-8", newline="\n")
    (out_dir / "table.txt").write_text(render_table_text(table),
                                       encoding="utf-8", newline="\n")
    for service in logs[0].services:
        svg = pods_chart_svg(logs, service)
        (out_dir / f"pods_{service}.svg").write_text(svg, encoding="utf-8", newline="\n")
    return table
