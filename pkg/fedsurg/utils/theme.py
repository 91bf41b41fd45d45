#!/usr/bin/env python3
"""
Console Theme - table formatting for terminal summaries
Metric values are shown as percentages with two decimals
"""

import pandas as pd

RULE = "=" * 70


def percent(value: float) -> str:
    """0.12414 -> '12.41'"""
    return f"{100.0 * value:.2f}"


def banner(title: str) -> str:
    return f"{RULE}\n{title}\n{RULE}"


def render(frame: pd.DataFrame) -> str:
    if frame.empty:
        return "(no rows)"
    return frame.to_string(index=False)


def simulation_table(result) -> str:
    """Task 1 and Task 2 metrics per pipeline (percent)"""
    rows = []
    for res in result.pipelines:
        rows.append({
            "pipeline": res.name,
            "task": "1",
            "center": res.task1.center_id,
            "F1 %": percent(res.task1.report.f1_macro),
            "EC %": percent(res.task1.report.expected_cost),
        })
        for center in sorted(res.task2.per_center):
            report = res.task2.per_center[center].report
            rows.append({"pipeline": res.name, "task": "2", "center": center,
                         "F1 %": percent(report.f1_macro), "EC %": percent(report.expected_cost)})
        rows.append({"pipeline": res.name, "task": "2", "center": "Average",
                     "F1 %": percent(res.task2.average.f1_macro),
                     "EC %": percent(res.task2.average.expected_cost)})
    return render(pd.DataFrame.from_records(rows))


def leaderboard_table(table) -> str:
    rows = []
    for r in table.rows:
        rows.append({
            "team": r.team,
            "T1 EC": r.task1.ec_rank, "T1 F1": r.task1.f1_rank, "T1 Avg": r.task1.avg_rank,
            "T2 EC": r.task2.ec_rank, "T2 F1": r.task2.f1_rank, "T2 Avg": r.task2.avg_rank,
            "Final": r.final_rank,
        })
    return render(pd.DataFrame.from_records(rows))


def metrics_table(frame: pd.DataFrame) -> str:
    shown = frame.copy()
    for col in ("f1", "ec"):
        if col in shown:
            shown[col] = shown[col].map(percent)
    return render(shown.rename(columns={"f1": "F1 %", "ec": "EC %"}))
