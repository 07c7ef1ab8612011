"""Error metrics, period rankings, improvement arithmetic and result tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

RESULT_COLUMNS = ("dataset", "method", "features", "seed", "period", "n_samples", "mae", "rmse")
STREAM_NOTE = (
    "Period errors are computed on the evaluation stream, which starts after the 90-day warm-up "
    "and includes the 30-day validation month."
)


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.size == 0 or y.shape != yhat.shape:
        raise ValueError("need two non-empty sequences of equal length")
    return y, yhat


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def rank_periods(row: Mapping[str, float]) -> dict[str, float]:
    """Rank periods by MAE, 1 = lowest; ties share their average rank."""
    if not row:
        raise ValueError("no periods to rank")
    names = list(row)
    ranks = rankdata([row[n] for n in names], method="average")
    return {n: float(r) for n, r in zip(names, ranks)}


def average_ranks(table: Sequence[Mapping[str, float]]) -> dict[str, float]:
    """Column means of the per-row period ranks."""
    if not table:
        raise ValueError("empty table")
    names = list(table[0])
    if any(list(r) != names for r in table):
        raise ValueError("rows must share the same periods in the same order")
    ranks = np.array([[rank_periods(r)[n] for n in names] for r in table])
    return {n: float(v) for n, v in zip(names, ranks.mean(axis=0))}


def round_half_away(x: float, digits: int = 0) -> float:
    q = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(x)).quantize(q, rounding=ROUND_HALF_UP))


def improvement_pct(best_mae: float, second_mae: float) -> float:
    """Relative gain of the best method over the runner-up, in percent."""
    if not second_mae > 0:
        raise ValueError("runner-up MAE must be positive")
    return 100.0 * (second_mae - best_mae) / second_mae


def display_pct(value: float) -> str:
    return f"{int(round_half_away(value))}%"


def mobility_delta(e_mae: float, em_mae: float) -> tuple[float, float]:
    """Absolute and percentage improvement from adding mobility features."""
    if not e_mae > 0:
        raise ValueError("baseline MAE must be positive")
    delta = e_mae - em_mae
    return delta, 100.0 * delta / e_mae


def display_delta(delta: float, pct: float) -> tuple[str, str]:
    return f"{round_half_away(delta, 4):.4f}", f"{round_half_away(pct, 2):.2f}%"


# ------------------------------------------------------------------ tables


@dataclass(frozen=True)
class ResultRow:
    dataset: str
    method: str
    features: str
    seed: int
    period: str
    n_samples: int
    mae: float
    rmse: float


def rows_from_run(result) -> list[ResultRow]:
    return [
        ResultRow(result.dataset, result.method, result.features, result.seed, p.name, p.n_samples, p.mae, p.rmse)
        for p in result.periods
    ]


@dataclass
class ReportTable:
    periods: list[str]
    keys: list[tuple[str, str, str]]  # (dataset, method, features)
    cells: np.ndarray  # mean MAE over seeds, (len(keys), len(periods))


def _period_order(rows: Sequence[ResultRow]) -> list[str]:
    order: list[str] = []
    for r in rows:
        if r.period not in order:
            order.append(r.period)
    return order


def build_table(rows: Sequence[ResultRow]) -> ReportTable:
    """Average MAE over seeds per (dataset, method, features) x period, sorted by the first period."""
    periods = _period_order(rows)
    groups: dict[tuple[str, str, str], dict[str, list[float]]] = {}
    for r in rows:
        groups.setdefault((r.dataset, r.method, r.features), {}).setdefault(r.period, []).append(r.mae)
    keys = list(groups)
    cells = np.array(
        [[float(np.mean(groups[k].get(p, [math.nan]))) for p in periods] for k in keys]
    ).reshape(len(keys), len(periods))
    if keys:
        order = sorted(range(len(keys)), key=lambda i: (cells[i, 0], keys[i]))
        keys = [keys[i] for i in order]
        cells = cells[order]
    return ReportTable(periods, keys, cells)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def emit(rows: Iterable[ResultRow], fmt: str = "csv") -> str:
    """Render result rows as results CSV or a markdown table.

    Both orderings follow the table convention: groups ascending by their
    first-period mean MAE.
    """
    rows = list(rows)
    table = build_table(rows)
    rank = {k: i for i, k in enumerate(table.keys)}
    periods = table.periods
    if fmt == "csv":
        ordered = sorted(
            rows,
            key=lambda r: (rank[(r.dataset, r.method, r.features)], r.seed, periods.index(r.period)),
        )
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in ordered:
            w.writerow([_fmt(getattr(r, c)) for c in RESULT_COLUMNS])
        return buf.getvalue()
    if fmt == "markdown":
        lines = [f"<!-- {STREAM_NOTE} -->", ""]
        lines.append("| Dataset | Method | Feat. | " + " | ".join(periods) + " |")
        lines.append("|---|---|---|" + "---:|" * len(periods))
        for (dataset, method, feats), vals in zip(table.keys, table.cells):
            lines.append(f"| {dataset} | {method} | {feats} | " + " | ".join(f"{v:.2f}" for v in vals) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def parse_results_csv(text: str) -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return []
    if tuple(header) != RESULT_COLUMNS:
        raise ValueError(f"unexpected results header {header}")
    types = {f.name: f.type for f in fields(ResultRow)}
    out = []
    for rec in reader:
        if not rec:
            continue
        vals = {}
        for name, raw in zip(RESULT_COLUMNS, rec):
            t = types[name]
            vals[name] = int(raw) if t in (int, "int") else float(raw) if t in (float, "float") else raw
        out.append(ResultRow(**vals))
    return out
