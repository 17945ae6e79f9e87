"""Price series, difference features and state windows.

Also hosts the synthetic market generators used by tests and the CLI.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from holdq.errors import DataError

ACTIONS = (-1, 0, 1)
SHORT, FLAT, LONG = -1, 0, 1

START_EPOCH = 1577836800  # 2020-01-01T00:00:00Z
BAR_SECONDS = 60


def check_action(a) -> int:
    if a not in ACTIONS:
        raise ValueError(f"action must be -1, 0 or +1, got {a!r}")
    return int(a)


@dataclass(frozen=True)
class PricePoint:
    timestamp: int
    close: float

    def __post_init__(self):
        if not (self.close > 0 and np.isfinite(self.close)):
            raise DataError(f"close must be a positive finite price, got {self.close!r}")


class PriceSeries:
    """Ordered close prices with strictly increasing epoch-second timestamps."""

    def __init__(self, timestamps, closes):
        ts = np.asarray(timestamps, dtype=np.int64)
        cl = np.asarray(closes, dtype=np.float64)
        if ts.shape != cl.shape or ts.ndim != 1:
            raise DataError("timestamps and closes must be 1-D and of equal length")
        if not np.all(np.isfinite(cl)) or np.any(cl <= 0):
            raise DataError("closes must be positive and finite")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            bad = int(np.argmax(np.diff(ts) <= 0)) + 1
            raise DataError(f"timestamps not strictly increasing at position {bad}")
        ts.setflags(write=False)
        cl.setflags(write=False)
        self.timestamps = ts
        self.closes = cl

    @classmethod
    def from_points(cls, points) -> "PriceSeries":
        points = list(points)
        return cls([p.timestamp for p in points], [p.close for p in points])

    @property
    def points(self) -> list[PricePoint]:
        return [PricePoint(int(t), float(c)) for t, c in zip(self.timestamps, self.closes)]

    def __len__(self):
        return int(self.closes.size)

    def slice(self, start: int, stop: int | None = None) -> "PriceSeries":
        return PriceSeries(self.timestamps[start:stop], self.closes[start:stop])

    def __eq__(self, other):
        return (
            isinstance(other, PriceSeries)
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.closes, other.closes)
        )

    def __repr__(self):
        return f"PriceSeries(n={len(self)})"


class MarketState:
    """The network input: H price differences (oldest first) and the previous action."""

    __slots__ = ("diffs", "prev_action")

    def __init__(self, diffs, prev_action: int):
        d = np.array(diffs, dtype=np.float64)
        if d.ndim != 1 or d.size < 1:
            raise ValueError("state needs a 1-D window of at least one diff")
        if not np.all(np.isfinite(d)):
            raise ValueError("state diffs must be finite")
        d.setflags(write=False)
        self.diffs = d
        self.prev_action = check_action(prev_action)

    @property
    def horizon(self) -> int:
        return int(self.diffs.size)

    def vector(self) -> np.ndarray:
        """Flat feature vector of length H + 1."""
        return np.append(self.diffs, float(self.prev_action))

    def __eq__(self, other):
        return (
            isinstance(other, MarketState)
            and self.prev_action == other.prev_action
            and np.array_equal(self.diffs, other.diffs)
        )

    def __repr__(self):
        return f"MarketState(H={self.horizon}, prev_action={self.prev_action})"


def _parse_timestamp(text: str) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        as_float = float(text)
    except ValueError:
        as_float = None
    if as_float is not None:
        if not as_float.is_integer():
            raise ValueError(f"epoch timestamp must be whole seconds: {text!r}")
        return int(as_float)
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def load_csv(path) -> PriceSeries:
    """Read a ``timestamp,close`` CSV. Timestamps may be epoch seconds or ISO-8601."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"price file not found: {path}")
    timestamps, closes = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["timestamp", "close"]:
            raise DataError(f"{path}:1: expected header 'timestamp,close'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                ts = _parse_timestamp(row[0])
                close = float(row[1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if not (np.isfinite(close) and close > 0):
                raise DataError(f"{path}:{lineno}: close must be positive, got {row[1].strip()!r}")
            if timestamps and ts <= timestamps[-1]:
                raise DataError(f"{path}:{lineno}: timestamp {ts} is not after the previous row")
            timestamps.append(ts)
            closes.append(close)
    return PriceSeries(timestamps, closes)


def save_csv(series: PriceSeries, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "close"])
        for t, c in zip(series.timestamps, series.closes):
            w.writerow([int(t), repr(float(c))])


def diff_series(series) -> np.ndarray:
    """``d[i] = close[i+1] - close[i]``."""
    closes = series.closes if isinstance(series, PriceSeries) else np.asarray(series, dtype=np.float64)
    if closes.size < 2:
        raise DataError("need at least 2 prices to take differences")
    return np.diff(closes)


def make_state(diffs, t: int, H: int, prev_action: int) -> MarketState:
    """The H most recent diffs ending at index ``t`` (inclusive), oldest first."""
    if H < 1:
        raise ValueError("H must be >= 1")
    if t < H - 1:
        raise DataError(f"insufficient history: t={t} needs at least H-1={H - 1}")
    if t >= len(diffs):
        raise DataError(f"t={t} is past the end of {len(diffs)} diffs")
    return MarketState(diffs[t - H + 1:t + 1], prev_action)


def zscore(diffs) -> np.ndarray:
    """Standardize diffs to zero mean, unit variance (identity if constant)."""
    d = np.asarray(diffs, dtype=np.float64)
    sd = d.std()
    return d - d.mean() if sd == 0 else (d - d.mean()) / sd


def gen_synthetic(kind: str, n: int, seed: int = 0, *, amplitude: float = 1.0,
                  period: float = 50.0, step: float = 0.01, drift: float = 0.001,
                  noise: float = 0.01, base: float = 100.0) -> PriceSeries:
    """Synthetic close prices on a 1-minute grid starting 2020-01-01.

    ``sine``: ``base + amplitude * sin(2*pi*t/period)`` (no randomness).
    ``walk``: i.i.d. +/- ``step`` increments.
    ``trend``: ``base + drift * t`` plus Gaussian noise of scale ``noise``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    t = np.arange(n, dtype=np.float64)
    if kind == "sine":
        closes = base + amplitude * np.sin(2.0 * np.pi * t / period)
    elif kind in ("walk", "random-walk"):
        rng = np.random.default_rng(seed)
        inc = rng.choice(np.array([-step, step]), size=n - 1)
        closes = base + np.concatenate([[0.0], np.cumsum(inc)])
    elif kind == "trend":
        rng = np.random.default_rng(seed)
        closes = base + drift * t + rng.normal(0.0, noise, size=n)
    else:
        raise ValueError(f"unknown series kind {kind!r}; expected sine, walk or trend")
    timestamps = START_EPOCH + BAR_SECONDS * np.arange(n, dtype=np.int64)
    return PriceSeries(timestamps, closes)
