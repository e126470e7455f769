"""Run-output serialization and post-hoc comparison tables.

metrics.csv is RFC-4180 (CRLF line endings) with floats at 17 significant
digits so values round-trip exactly; absent values are empty fields.
"""

from __future__ import annotations

import csv
import io
import json

from fedfits.orchestrator import RunResult

METRICS_COLUMNS = [
    "round",
    "algorithm",
    "team_size",
    "selection_event",
    "global_accuracy",
    "global_loss",
    "theta_sum",
    "alpha_used",
    "threshold",
    "participation_cumulative",
    "wall_ms",
    "simulated_cost",
]


def fmt_float(value: float) -> str:
    return format(float(value), ".17g")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return fmt_float(value)
    return str(value)


def metrics_rows(algorithm: str, result: RunResult) -> list[list[str]]:
    rows = []
    for rec in result.rounds:
        rows.append(
            [
                _cell(rec.round),
                algorithm,
                _cell(len(rec.team)),
                _cell(rec.selection_event),
                _cell(rec.global_eval.accuracy),
                _cell(rec.global_eval.loss),
                _cell(rec.theta_sum),
                _cell(rec.alpha_used),
                _cell(rec.threshold),
                _cell(rec.participation_cumulative),
                _cell(rec.wall_ms),
                _cell(rec.sim_cost),
            ]
        )
    return rows


def write_metrics_csv(path: str, algorithm: str, result: RunResult):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(METRICS_COLUMNS)
        writer.writerows(metrics_rows(algorithm, result))


def summary_dict(result: RunResult, digest: str, total_wall_ms: int) -> dict:
    accs = [rec.global_eval.accuracy for rec in result.rounds]
    return {
        "final_accuracy": accs[-1],
        "best_accuracy": max(accs),
        "time_to_target_round": result.time_to_target_round,
        "participation_ratio": result.participation_ratio,
        "total_wall_ms": total_wall_ms,
        "config_digest": digest,
    }


def write_summary_json(path: str, summary: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def participation_from_trace(result: RunResult, num_clients: int) -> float:
    """|union of elected sets| / K, recomputed from the selection trace."""
    chosen: set[int] = set()
    for event in result.selection_trace:
        chosen.update(event.selected)
    return len(chosen) / num_clients


def participation_table(results: dict[str, RunResult]) -> list[tuple[str, float]]:
    """(label, participation %) rows, highest participation first."""
    if not results:
        raise ValueError("participation_table needs at least one result")
    rows = [(label, 100.0 * r.participation_ratio) for label, r in results.items()]
    return sorted(rows, key=lambda row: (-row[1], row[0]))


def total_simulated_cost(result: RunResult) -> float:
    return float(sum(rec.sim_cost for rec in result.rounds))


def _median(values: list[float]) -> float:
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2.0


def accuracy_table(
    normal: dict[str, list[RunResult]],
    attack: dict[str, list[RunResult]],
    num_clients: int,
) -> list[tuple[str, int, str, float, float]]:
    """(mode, K, label, median final accuracy, median total simulated cost).

    Every label must appear in both modes so the table stays paired.
    """
    missing = sorted(set(normal) ^ set(attack))
    if missing:
        raise ValueError(f"labels present in only one mode: {missing}")
    if not normal:
        raise ValueError("accuracy_table needs at least one label")
    rows = []
    for mode, results in (("normal", normal), ("attack", attack)):
        for label in sorted(results):
            runs = results[label]
            rows.append(
                (
                    mode,
                    num_clients,
                    label,
                    _median([r.rounds[-1].global_eval.accuracy for r in runs]),
                    _median([total_simulated_cost(r) for r in runs]),
                )
            )
    return rows


def to_markdown(headers: list[str], rows: list) -> str:
    lines = [
        "| " + " | ".join(headers) + " |",
        "| " + " | ".join("---" for _ in headers) + " |",
    ]
    for row in rows:
        lines.append("| " + " | ".join(_cell(v) for v in row) + " |")
    return "\n".join(lines) + "\n"


def to_csv_text(headers: list[str], rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(headers)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()
