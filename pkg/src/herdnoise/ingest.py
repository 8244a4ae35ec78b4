"""Daily price files to normalised, joined return series."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd


class IngestError(ValueError):
    """Malformed input; ``row`` is the 1-based line number in the file when known."""

    def __init__(self, message: str, row: Optional[int] = None, path=None):
        super().__init__(message)
        self.row = row
        self.path = None if path is None else str(path)

    def to_dict(self) -> dict:
        return {"error": "ingest", "message": str(self), "row": self.row, "path": self.path}


@dataclass
class PriceSeries:
    dates: np.ndarray          # datetime64[D], strictly increasing
    close: np.ndarray
    asset_id: str = ""

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        self.close = np.asarray(self.close, dtype=float)
        if self.dates.shape != self.close.shape:
            raise ValueError("dates and close differ in length")
        if np.any(np.diff(self.dates) <= np.timedelta64(0, "D")):
            raise ValueError("dates must be strictly increasing")
        if np.any(~(self.close > 0)):
            raise ValueError("close prices must be positive")

    def __len__(self):
        return self.close.shape[0]


@dataclass
class NormalizedReturns:
    r: np.ndarray
    asset_id: np.ndarray          # one label per sample
    boundaries: List[int] = field(default_factory=list)   # segment start indices after the first

    @property
    def n(self) -> int:
        return int(self.r.shape[0])

    def to_csv(self, path) -> Path:
        path = Path(path)
        df = pd.DataFrame({"idx": np.arange(self.n), "r": self.r, "asset_id": self.asset_id})
        df.to_csv(path, index=False, float_format="%.17g")
        return path

    @classmethod
    def from_csv(cls, path) -> "NormalizedReturns":
        df = pd.read_csv(path, dtype={"asset_id": str}, keep_default_na=False,
                         float_precision="round_trip")
        ids = df["asset_id"].to_numpy()
        starts = [i for i in range(1, len(ids)) if ids[i] != ids[i - 1]]
        return cls(df["r"].to_numpy(float), ids, starts)


def _parse_float(text: str) -> float:
    # float() is correctly rounded; pd.to_numeric can be off by one ulp
    try:
        v = float(text)
    except ValueError:
        return np.nan
    return v if np.isfinite(v) else np.nan


def read_price_csv(path, date_col: str = "Date", close_col: str = "Close",
                   asset_id: Optional[str] = None) -> PriceSeries:
    """Parse a daily price file; rows are sorted by date.

    Duplicate dates, unparseable cells and nonpositive prices raise
    :class:`IngestError` naming the offending file line.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"no such file: {path}", path=path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise IngestError(f"cannot parse {path}: {exc}", path=path) from exc
    missing = [c for c in (date_col, close_col) if c not in df.columns]
    if missing:
        raise IngestError(f"missing column(s) {missing}; found {list(df.columns)}", path=path)
    lines = np.arange(len(df)) + 2  # header is line 1
    dates = pd.to_datetime(df[date_col], errors="coerce")
    close = pd.Series([_parse_float(v) for v in df[close_col]], dtype=float)
    bad = dates.isna().to_numpy()
    if bad.any():
        i = int(np.argmax(bad))
        raise IngestError(f"line {lines[i]}: cannot parse date {df[date_col].iat[i]!r}",
                          row=int(lines[i]), path=path)
    bad = close.isna().to_numpy()
    if bad.any():
        i = int(np.argmax(bad))
        raise IngestError(f"line {lines[i]}: cannot parse price {df[close_col].iat[i]!r}",
                          row=int(lines[i]), path=path)
    bad = ~(close.to_numpy() > 0)
    if bad.any():
        i = int(np.argmax(bad))
        raise IngestError(f"line {lines[i]}: nonpositive price {close.iat[i]}",
                          row=int(lines[i]), path=path)
    d = dates.to_numpy().astype("datetime64[D]")
    order = np.argsort(d, kind="stable")
    d, c, ln = d[order], close.to_numpy(float)[order], lines[order]
    dup = np.flatnonzero(d[1:] == d[:-1])
    if dup.size:
        i = int(dup[0]) + 1
        raise IngestError(f"line {ln[i]}: duplicate date {d[i]}", row=int(ln[i]), path=path)
    return PriceSeries(d, c, asset_id if asset_id is not None else path.stem)


def log_returns(p: PriceSeries) -> np.ndarray:
    """Consecutive-row log returns; calendar gaps are ignored."""
    if len(p) < 2:
        raise ValueError("need at least two prices")
    return np.diff(np.log(p.close))


def normalize_and_join(series: Sequence[np.ndarray],
                       asset_ids: Optional[Sequence[str]] = None) -> NormalizedReturns:
    """Divide each series by its own standard deviation and concatenate.

    The standard deviation is taken over the series itself (ddof=0), so every
    joined segment has unit standard deviation exactly.

    >>> normalize_and_join([np.array([2.0, -2.0, 2.0, -2.0])]).r.tolist()
    [1.0, -1.0, 1.0, -1.0]
    """
    if len(series) == 0:
        raise ValueError("nothing to join")
    if asset_ids is None:
        asset_ids = [str(i) for i in range(len(series))]
    if len(asset_ids) != len(series):
        raise ValueError("one asset id per series is required")
    parts, ids, starts = [], [], []
    pos = 0
    for s, name in zip(series, asset_ids):
        v = np.asarray(s, dtype=float)
        if v.size < 2:
            raise ValueError(f"series {name!r} has fewer than two returns")
        sd = v.std()
        if not sd > 0:
            raise ValueError(f"series {name!r} has zero variance")
        if pos:
            starts.append(pos)
        parts.append(v / sd)
        ids.extend([name] * v.size)
        pos += v.size
    return NormalizedReturns(np.concatenate(parts), np.asarray(ids, dtype=object), starts)


def ingest_files(paths: Sequence, date_col: str = "Date", close_col: str = "Close") -> NormalizedReturns:
    """read_price_csv + log_returns + normalize_and_join for several files."""
    prices = [read_price_csv(p, date_col, close_col) for p in paths]
    ids = [p.asset_id for p in prices]
    if len(set(ids)) != len(ids):
        ids = [f"{i}:{a}" for i, a in enumerate(ids)]
    return normalize_and_join([log_returns(p) for p in prices], ids)
