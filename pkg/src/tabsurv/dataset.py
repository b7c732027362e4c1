"""CSV ingestion, preprocessing and censoring-stratified splits."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROLES = ("numeric", "categorical", "time", "event")
MISSING_LABEL = "<missing>"


class DataError(ValueError):
    """Malformed or invalid input data."""


@dataclass
class Column:
    name: str
    kind: str
    values: np.ndarray  # float64 for numeric, object (str) for categorical
    missing: np.ndarray  # bool

    def subset(self, idx) -> "Column":
        return Column(self.name, self.kind, self.values[idx], self.missing[idx])


@dataclass
class RawTable:
    columns: list[Column]
    times: np.ndarray
    events: np.ndarray
    time_column: str = "time"
    event_column: str = "event"

    def __post_init__(self):
        n = len(self.times)
        if len(self.events) != n or any(len(c.values) != n or len(c.missing) != n for c in self.columns):
            raise DataError("all columns must have equal length")
        if not np.all(np.isin(self.events, (0, 1))):
            raise DataError("event values must be 0 or 1")
        if not np.all(np.isfinite(self.times)) or np.any(self.times <= 0):
            raise DataError("times must be finite and positive")

    @property
    def n_rows(self) -> int:
        return len(self.times)

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def subset(self, idx) -> "RawTable":
        idx = np.asarray(idx, dtype=np.int64)
        return RawTable([c.subset(idx) for c in self.columns], self.times[idx], self.events[idx],
                        self.time_column, self.event_column)


def load_schema(path) -> dict[str, str]:
    with open(path) as fh:
        schema = json.load(fh)
    if not isinstance(schema, dict):
        raise DataError("schema must be a JSON object mapping column names to roles")
    return schema


def _check_schema(schema: dict[str, str]) -> tuple[str, str]:
    bad = {k: v for k, v in schema.items() if v not in ROLES}
    if bad:
        raise DataError(f"unknown column roles {bad}; expected one of {ROLES}")
    times = [k for k, v in schema.items() if v == "time"]
    events = [k for k, v in schema.items() if v == "event"]
    if len(times) != 1 or len(events) != 1:
        raise DataError("schema needs exactly one time column and one event column")
    return times[0], events[0]


def _parse_event(cell: str, row: int, col: str) -> int:
    try:
        v = float(cell)
    except ValueError:
        v = {"true": 1.0, "false": 0.0}.get(cell.strip().lower(), math.nan)
    if v not in (0.0, 1.0):
        raise DataError(f"row {row}, column {col!r}: event value {cell!r} is not 0 or 1")
    return int(v)


def load_csv(path, schema: dict[str, str], sentinel: str | None = None) -> RawTable:
    """Read a header-first CSV using ``schema`` (column name -> role).

    Cells that are empty (or equal to ``sentinel``) are flagged missing.
    Columns absent from the schema are ignored.  Row numbers in errors are
    1-based file lines.
    """
    time_col, event_col = _check_schema(schema)
    missing_tokens = {""} if sentinel is None else {"", sentinel}
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        absent = [k for k in schema if k not in header]
        if absent:
            raise DataError(f"{path}: columns {absent} not found in header")
        pos = {name: header.index(name) for name in schema}
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {line_no} has {len(row)} fields, expected {len(header)}")
            rows.append((line_no, row))
    if not rows:
        raise DataError(f"{path}: no data rows")

    times = np.empty(len(rows))
    events = np.empty(len(rows), dtype=np.int64)
    for i, (line_no, row) in enumerate(rows):
        t_cell, e_cell = row[pos[time_col]].strip(), row[pos[event_col]].strip()
        if t_cell in missing_tokens or e_cell in missing_tokens:
            raise DataError(f"row {line_no}: missing time or event label")
        try:
            times[i] = float(t_cell)
        except ValueError:
            raise DataError(f"row {line_no}, column {time_col!r}: cannot parse {t_cell!r}") from None
        if not (math.isfinite(times[i]) and times[i] > 0):
            raise DataError(f"row {line_no}, column {time_col!r}: time must be positive, got {t_cell!r}")
        events[i] = _parse_event(e_cell, line_no, event_col)

    columns = []
    for name, role in schema.items():
        if role not in ("numeric", "categorical"):
            continue
        cells = [row[pos[name]].strip() for _, row in rows]
        missing = np.array([c in missing_tokens for c in cells])
        if role == "numeric":
            values = np.full(len(cells), np.nan)
            for i, c in enumerate(cells):
                if missing[i]:
                    continue
                try:
                    values[i] = float(c)
                except ValueError:
                    raise DataError(f"row {rows[i][0]}, column {name!r}: cannot parse {c!r} as a number") from None
            missing |= ~np.isfinite(values)
        else:
            values = np.array([None if m else c for c, m in zip(cells, missing)], dtype=object)
        columns.append(Column(name, role, values, missing))
    if events.sum() == 0:
        raise DataError(f"{path}: every row is censored")
    return RawTable(columns, times, events, time_col, event_col)


# -- preprocessing ------------------------------------------------------------


@dataclass
class ColumnRecord:
    name: str
    kind: str
    dropped: bool = False
    mean: float = 0.0
    std: float = 1.0
    categories: list[str] = field(default_factory=list)
    missing_category: bool = False

    def output_names(self) -> list[str]:
        if self.dropped:
            return []
        if self.kind == "numeric":
            return [self.name]
        names = [f"{self.name}={c}" for c in self.categories]
        if self.missing_category:
            names.append(f"{self.name}={MISSING_LABEL}")
        return names


@dataclass
class PreprocessingRecord:
    columns: list[ColumnRecord]

    def to_dict(self) -> dict:
        return {"columns": [vars(c).copy() for c in self.columns]}

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessingRecord":
        return cls([ColumnRecord(**c) for c in d["columns"]])


@dataclass
class SurvivalDataset:
    features: np.ndarray
    times: np.ndarray
    events: np.ndarray
    feature_names: list[str]
    feature_kinds: list[str]
    record: PreprocessingRecord | None = None

    @property
    def n_rows(self) -> int:
        return len(self.times)

    @property
    def numeric_idx(self) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.feature_kinds) if k == "numeric"], dtype=np.int64)

    @property
    def categorical_idx(self) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.feature_kinds) if k != "numeric"], dtype=np.int64)

    def subset(self, idx) -> "SurvivalDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return SurvivalDataset(self.features[idx], self.times[idx], self.events[idx],
                               list(self.feature_names), list(self.feature_kinds), self.record)


def fit_record(raw: RawTable) -> PreprocessingRecord:
    if raw.n_rows == 0:
        raise DataError("empty table")
    recs = []
    for col in raw.columns:
        if col.missing.all():
            recs.append(ColumnRecord(col.name, col.kind, dropped=True))
            continue
        if col.kind == "numeric":
            obs = col.values[~col.missing].astype(np.float64)
            # impute first, so the std is that of the completed column
            filled = np.where(col.missing, obs.mean(), col.values.astype(np.float64))
            recs.append(ColumnRecord(col.name, "numeric", mean=float(obs.mean()), std=float(filled.std())))
        else:
            cats = sorted({str(v) for v in col.values[~col.missing]})
            recs.append(ColumnRecord(col.name, "categorical", categories=cats,
                                     missing_category=bool(col.missing.any())))
    if all(r.dropped for r in recs):
        raise DataError("no feature column survives removal of fully missing columns")
    return PreprocessingRecord(recs)


def apply_preprocessing(raw: RawTable, record: PreprocessingRecord) -> SurvivalDataset:
    """Transform ``raw`` with previously fitted statistics only."""
    by_name = {c.name: c for c in raw.columns}
    expected = {(r.name, r.kind) for r in record.columns}
    got = {(c.name, c.kind) for c in raw.columns}
    if expected != got:
        raise DataError(f"column mismatch: missing {sorted(expected - got)}, unexpected {sorted(got - expected)}")
    blocks, names, kinds = [], [], []
    for rec in record.columns:
        if rec.dropped:
            continue
        col = by_name[rec.name]
        if rec.kind == "numeric":
            v = np.where(col.missing, rec.mean, col.values.astype(np.float64))
            z = np.zeros_like(v) if rec.std == 0.0 else (v - rec.mean) / rec.std
            blocks.append(z[:, None])
            kinds.append("numeric")
        else:
            width = len(rec.categories) + int(rec.missing_category)
            block = np.zeros((raw.n_rows, width))
            lookup = {c: i for i, c in enumerate(rec.categories)}
            for i, (v, miss) in enumerate(zip(col.values, col.missing)):
                if miss:
                    if rec.missing_category:
                        block[i, -1] = 1.0
                elif str(v) in lookup:
                    block[i, lookup[str(v)]] = 1.0
            blocks.append(block)
            kinds.extend(["categorical"] * width)
        names.extend(rec.output_names())
    features = np.concatenate(blocks, axis=1) if blocks else np.zeros((raw.n_rows, 0))
    return SurvivalDataset(features, raw.times.astype(np.float64), raw.events.astype(np.int64),
                           names, kinds, record)


def preprocess(raw: RawTable) -> SurvivalDataset:
    """Fit standardization / one-hot statistics on ``raw`` and apply them.

    Missing numeric cells are filled with the mean of the observed cells;
    the filled column is then standardized with its population std, so
    every output column has mean 0 and std 1.
    Categorical columns get an extra indicator for missingness when any cell
    was missing.  Fully missing columns are dropped.
    """
    return apply_preprocessing(raw, fit_record(raw))


# -- splits -------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.525, 0.175, 0.3)
    seed: int = 0

    def __post_init__(self):
        if len(self.fractions) != 3 or any(f <= 0 for f in self.fractions):
            raise ValueError("need three positive fractions (train, validation, test)")
        if abs(sum(self.fractions) - 1.0) > 1e-12:
            raise ValueError(f"fractions must sum to 1, got {sum(self.fractions)}")


def stratified_split_indices(events, spec: SplitSpec):
    """Index arrays (train, validation, test), stratified on the event flag.

    Within each stratum rows are shuffled by ``spec.seed``; validation and
    test take ``floor(fraction * size)`` rows and the remainder goes to train.
    """
    events = np.asarray(events).astype(bool)
    rng = np.random.default_rng(spec.seed)
    parts = ([], [], [])
    for stratum in (False, True):
        idx = np.flatnonzero(events == stratum)
        if idx.size == 0:
            continue
        if idx.size < 3:
            raise DataError(f"stratum event={int(stratum)} has {idx.size} rows; need at least 3")
        idx = rng.permutation(idx)
        n_val = int(math.floor(spec.fractions[1] * idx.size + 1e-9))
        n_test = int(math.floor(spec.fractions[2] * idx.size + 1e-9))
        n_train = idx.size - n_val - n_test
        parts[0].append(idx[:n_train])
        parts[1].append(idx[n_train:n_train + n_val])
        parts[2].append(idx[n_train + n_val:])
    return tuple(np.sort(np.concatenate(p)) for p in parts)


def holdout_indices(events, fraction: float = 0.25, seed: int = 0):
    """Two-way stratified split: (train, validation) index arrays."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("holdout fraction must be in (0, 1)")
    events = np.asarray(events).astype(bool)
    rng = np.random.default_rng(seed)
    keep, held = [], []
    for stratum in (False, True):
        idx = rng.permutation(np.flatnonzero(events == stratum))
        n_held = int(math.floor(fraction * idx.size + 1e-9))
        keep.append(idx[n_held:])
        held.append(idx[:n_held])
    return np.sort(np.concatenate(keep)), np.sort(np.concatenate(held))


def stratified_split(data: SurvivalDataset, spec: SplitSpec):
    return tuple(data.subset(i) for i in stratified_split_indices(data.events, spec))


def split_table(raw: RawTable, spec: SplitSpec):
    """Split before fitting preprocessing so held-out rows never leak statistics."""
    return tuple(raw.subset(i) for i in stratified_split_indices(raw.events, spec))


def prepare_splits(raw: RawTable, spec: SplitSpec):
    """Split ``raw``, fit preprocessing on the train part and apply it to all three."""
    train_raw, val_raw, test_raw = split_table(raw, spec)
    record = fit_record(train_raw)
    return tuple(apply_preprocessing(t, record) for t in (train_raw, val_raw, test_raw))


def from_arrays(features, times, events, feature_names=None) -> SurvivalDataset:
    """Wrap already-numeric arrays; every column is treated as numeric."""
    features = np.asarray(features, dtype=np.float64)
    d = features.shape[1]
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(d)]
    return SurvivalDataset(features, np.asarray(times, dtype=np.float64), np.asarray(events, dtype=np.int64),
                           names, ["numeric"] * d)


def gbsg2_path() -> Path:
    return Path(__file__).parent / "data" / "gbsg2.csv"


GBSG2_SCHEMA = {
    "horTh": "categorical",
    "age": "numeric",
    "menostat": "categorical",
    "tsize": "numeric",
    "tgrade": "categorical",
    "pnodes": "numeric",
    "progrec": "numeric",
    "estrec": "numeric",
    "time": "time",
    "cens": "event",
}


def load_gbsg2() -> RawTable:
    """The German Breast Cancer Study Group 2 trial (686 rows) bundled with the package."""
    return load_csv(gbsg2_path(), GBSG2_SCHEMA)
