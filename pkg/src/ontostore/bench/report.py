"""Plain-text timing reports and the cross-scenario comparison table."""
from __future__ import annotations

import json

from .scenarios import QUERY_IDS, SCENARIOS, Timing, TimingReport

MACHINE_MARKER = "# records"

# speedups reported by the original evaluation; shown as annotations only
REFERENCE_RATIOS = {"Q1": 16.43 / 1.09, "Q2": 7.56 / 0.50, "Q3": 10.24 / 0.93}


def format_report(report: TimingReport) -> str:
    cfg = report.config
    lines = [
        f"scenario {report.scenario}: {SCENARIOS[report.scenario].description}",
        f"scale s={cfg['s']} seed={cfg['seed']} marker_fraction={cfg['marker_fraction']}",
        "",
        f"{'query':<6}{'mean_s':>12}{'min_s':>12}{'max_s':>12}{'rows':>8}{'runs':>6}",
    ]
    for qid, t in report.timings.items():
        lines.append(f"{qid:<6}{t.mean:>12.6f}{t.min:>12.6f}{t.max:>12.6f}{t.count:>8}{t.runs:>6}")
    lines += ["", MACHINE_MARKER, json.dumps({"config": cfg, "scenario": report.scenario}, sort_keys=True)]
    lines += [json.dumps(t.to_doc(), sort_keys=True) for t in report.timings.values()]
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> TimingReport:
    lines = text.splitlines()
    try:
        start = lines.index(MACHINE_MARKER)
    except ValueError:
        raise ValueError("not a timing report: machine-readable section missing") from None
    head = json.loads(lines[start + 1])
    report = TimingReport(head["config"], int(head["scenario"]))
    for line in lines[start + 2:]:
        if line.strip():
            t = Timing(**json.loads(line))
            report.timings[t.query] = t
    return report


def compare_reports(reports: list[TimingReport]) -> str:
    """Rows are queries, columns scenarios; ratios are scenario 1 time over each other scenario."""
    if not reports:
        raise ValueError("nothing to compare")
    configs = {json.dumps(r.config, sort_keys=True) for r in reports}
    if len(configs) > 1:
        raise ValueError("reports were produced with different dataset configurations")
    by_scenario = {r.scenario: r for r in reports}
    ids = sorted(by_scenario)
    queries = [q for q in QUERY_IDS if any(q in r.timings for r in reports)]
    queries += sorted({q for r in reports for q in r.timings} - set(queries))
    cfg = reports[0].config
    lines = [f"mean seconds, s={cfg['s']} seed={cfg['seed']}", ""]
    lines.append(f"{'query':<6}" + "".join(f"{'S' + str(i):>12}" for i in ids))
    for q in queries:
        cells = []
        for i in ids:
            t = by_scenario[i].timings.get(q)
            cells.append(f"{t.mean:>12.6f}" if t else f"{'-':>12}")
        lines.append(f"{q:<6}" + "".join(cells))
    base = by_scenario.get(1)
    if base is not None and len(ids) > 1:
        lines += ["", "speedup of S1 time over scenario k (higher means k is faster)"]
        lines.append(f"{'query':<6}" + "".join(f"{'S1/S' + str(i):>12}" for i in ids if i != 1) + f"{'reference':>12}")
        for q in queries:
            cells = []
            for i in ids:
                if i == 1:
                    continue
                a, b = base.timings.get(q), by_scenario[i].timings.get(q)
                cells.append(f"{a.mean / b.mean:>12.2f}" if a and b and b.mean > 0 else f"{'-':>12}")
            ref = REFERENCE_RATIOS.get(q)
            lines.append(f"{q:<6}" + "".join(cells) + (f"{ref:>11.1f}x" if ref else f"{'-':>12}"))
    return "\n".join(lines) + "\n"


def speedups(reports: list[TimingReport]) -> dict[tuple[str, int], float]:
    by_scenario = {r.scenario: r for r in reports}
    base = by_scenario[1]
    out = {}
    for i, r in by_scenario.items():
        if i == 1:
            continue
        for q, t in r.timings.items():
            if q in base.timings and t.mean > 0:
                out[(q, i)] = base.timings[q].mean / t.mean
    return out


__all__ = ["REFERENCE_RATIOS", "compare_reports", "format_report", "parse_report", "speedups"]
