"""Round-trip trade segmentation and per-trade backtest statistics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from holdq.errors import DataError
from holdq.market import PriceSeries, check_action

REPORT_FIELDS = ("cost", "trade_num", "return_avg", "trade_length", "win_rate", "sharpe_ratio", "cumulative_pnl")


@dataclass(frozen=True)
class TradeRecord:
    entry_index: int
    exit_index: int
    direction: int
    gross_pnl: float
    cost_paid: float
    net_return_pct: float

    @property
    def length(self) -> int:
        return self.exit_index - self.entry_index

    @property
    def net_pnl(self) -> float:
        return self.gross_pnl - self.cost_paid


@dataclass(frozen=True)
class MetricsReport:
    cost: float = 0.0
    trade_num: int = 0
    return_avg: float = 0.0
    trade_length: float = 0.0
    win_rate: float = 0.0
    sharpe_ratio: float = 0.0
    cumulative_pnl: float = 0.0
    # Set when the Sharpe ratio is undefined (fewer than two trades or zero
    # dispersion) and reported as 0. Not part of the emitted row.
    sharpe_degenerate: bool = field(default=False, compare=False)

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in REPORT_FIELDS}


def _closes(prices) -> np.ndarray:
    if isinstance(prices, PriceSeries):
        return prices.closes
    return np.asarray(prices, dtype=np.float64)


def segment_trades(actions, prices, cost_c: float) -> list[TradeRecord]:
    """Split a position sequence into round-trip trades.

    ``actions[k]`` is the position held from ``prices[k]`` to ``prices[k+1]``.
    ``actions`` may be one shorter than ``prices`` (every position has a next
    price) or the same length, in which case the last entry is a terminal
    instruction that may only close or keep the current position. Positions
    still open at the end are marked to the final price without an exit charge.

    A reversal closes one trade and opens the next at the same index; its cost
    is split between them (one unit each).
    """
    p = _closes(prices)
    acts = [check_action(int(a)) for a in actions]
    n, m = len(p), len(acts)
    if m not in (n, n - 1):
        raise DataError(f"{m} actions cannot be aligned with {n} prices")
    if n < 2:
        raise DataError("need at least two prices")
    if m == n and acts[-1] != 0 and (m == 1 or acts[-1] != acts[-2]):
        raise DataError("the terminal action cannot open a new position")

    trades = []
    pos, entry, entry_cost = 0, 0, 0.0

    def close(k, exit_cost):
        gross = pos * (p[k] - p[entry])
        paid = entry_cost + exit_cost
        trades.append(TradeRecord(entry, k, pos, gross, paid, 100.0 * (gross - paid) / p[entry]))

    for k, a in enumerate(acts):
        if a == pos:
            continue
        if pos != 0:
            close(k, cost_c * abs(pos))
        if a != 0:
            entry, entry_cost = k, cost_c * abs(a)
        pos = a
    if pos != 0:
        close(n - 1, 0.0)
    return trades


def ledger_total(actions, prices, cost_c: float) -> float:
    """Cumulative reward of a position sequence in price units.

    Same alignment rules as :func:`segment_trades`.
    """
    p = _closes(prices)
    a = np.asarray(actions, dtype=np.float64)
    k = min(len(a), len(p) - 1)
    changes = np.abs(np.diff(np.concatenate([[0.0], a])))
    return float(np.sum(a[:k] * np.diff(p)[:k]) - cost_c * np.sum(changes))


def compute_report(trades, cost: float = 0.0) -> MetricsReport:
    trades = list(trades)
    if not trades:
        return MetricsReport(cost=cost, sharpe_degenerate=True)
    r = np.array([t.net_return_pct for t in trades])
    lengths = np.array([t.length for t in trades], dtype=np.float64)
    sd = r.std()
    degenerate = len(trades) < 2 or sd == 0
    return MetricsReport(
        cost=float(cost),
        trade_num=len(trades),
        return_avg=float(r.mean()),
        trade_length=float(lengths.mean()),
        win_rate=100.0 * float(np.count_nonzero(r > 0)) / len(trades),
        sharpe_ratio=0.0 if degenerate else float(r.mean() / sd),
        cumulative_pnl=float(sum(t.net_pnl for t in trades)),
        sharpe_degenerate=degenerate,
    )


def evaluate(actions, prices, cost_c: float) -> MetricsReport:
    return compute_report(segment_trades(actions, prices, cost_c), cost=cost_c)


def emit_report(report, fmt: str = "csv") -> str:
    """Render one report or a list of reports (one row each) as CSV or JSON."""
    reports = [report] if isinstance(report, MetricsReport) else list(report)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for rep in reports:
            row = rep.row()
            w.writerow([row["trade_num"] if k == "trade_num" else repr(float(row[k])) for k in REPORT_FIELDS])
        return buf.getvalue()
    if fmt == "json":
        return json.dumps([rep.row() for rep in reports], indent=2) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(text: str, fmt: str = "csv") -> list[MetricsReport]:
    if fmt == "csv":
        rows = list(csv.DictReader(io.StringIO(text)))
    elif fmt == "json":
        rows = json.loads(text)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    out = []
    for row in rows:
        if set(row) != set(REPORT_FIELDS):
            raise DataError(f"report row has fields {sorted(row)}, expected {list(REPORT_FIELDS)}")
        vals = {k: (int(row[k]) if k == "trade_num" else float(row[k])) for k in REPORT_FIELDS}
        out.append(MetricsReport(**vals))
    return out
