"""Survey ingestion: per-wave CSV tables -> one labeled, imputed Dataset.

Raw tables keep answers as python values (float, str or None for a blank
cell).  Once harmonized, trimmed and concatenated they become a numeric
``Dataset`` whose label is the wave (survey) number.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ParseError, SchemaError

LABEL_COLUMN = "hWave"
N_WAVES = 6
MISSING_TOKENS = frozenset({"", "NA"})

# Columns removed before modelling: questions that are not shared by every
# wave or are mostly blank, and respondent bookkeeping.
DROPPED_COLUMNS = ("Q23CP", "Q16", "Status", "Respid", "language", "agreement")

# Categorical questions expanded to indicator groups (<name>_1 .. <name>_k).
ONE_HOT_OPTIONS = {"Q4": 7, "Q24": 23}

# Waves 5-6 ask Q4 option 1 as two separate options.
Q4_SPLIT = ("Q4_1a", "Q4_1b")  # "I have tested positive", "someone close has"
Q4_MERGED = "Q4_1"

_ONE_HOT_NAME = re.compile(r"^(%s)_(\d+)$" % "|".join(ONE_HOT_OPTIONS))


@dataclass
class RawSurveyTable:
    wave_id: int
    columns: list[str]
    rows: list[dict]

    def __post_init__(self):
        if not 1 <= self.wave_id <= N_WAVES:
            raise DataError(f"wave_id must be in 1..{N_WAVES}, got {self.wave_id}")
        if len(set(self.columns)) != len(self.columns):
            raise SchemaError("duplicate column names")
        keys = set(self.columns)
        for i, row in enumerate(self.rows):
            if set(row) != keys:
                raise SchemaError(f"wave {self.wave_id}: row {i} key set differs from header")

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list:
        return [row[name] for row in self.rows]


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str  # "numeric" | "one-hot"
    source_question: str


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        seen_done = set()
        prev = None
        for f in self.features:
            if f.kind != "one-hot":
                prev = None
                continue
            if f.source_question != prev and f.source_question in seen_done:
                raise SchemaError(f"one-hot group {f.source_question} is not contiguous")
            seen_done.add(f.source_question)
            prev = f.source_question

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "FeatureSchema":
        feats = []
        for name in names:
            m = _ONE_HOT_NAME.match(name)
            if m:
                feats.append(Feature(name, "one-hot", m.group(1)))
            else:
                feats.append(Feature(name, "numeric", name))
        return cls(tuple(feats))

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def __len__(self):
        return len(self.features)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown feature {name!r}") from None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus wave labels.  Arrays are made read-only."""

    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != len(self.schema):
            raise SchemaError(f"X has shape {X.shape}, schema has {len(self.schema)} features")
        if y.shape != (X.shape[0],):
            raise SchemaError("y length must equal the number of rows")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def feature_names(self) -> list[str]:
        return self.schema.names

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.y)

    def has_missing(self) -> bool:
        return bool(np.isnan(self.X).any())

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.schema, self.X[rows], self.y[rows])

    def select_features(self, names: Sequence[str]) -> "Dataset":
        """Columns ``names`` in schema order, so one-hot groups stay contiguous."""
        idx = sorted({self.schema.index(n) for n in names})
        schema = FeatureSchema(tuple(self.schema.features[i] for i in idx))
        return Dataset(schema, self.X[:, idx], self.y)

    def equals(self, other: "Dataset") -> bool:
        return (self.feature_names == other.feature_names
                and np.array_equal(self.X, other.X, equal_nan=True)
                and np.array_equal(self.y, other.y))


@dataclass
class ImputationStats:
    feature_names: list[str]
    mean: np.ndarray
    missing_count: np.ndarray

    def to_dict(self) -> dict:
        return {
            name: {"mean": float(m), "missing_count": int(c)}
            for name, m, c in zip(self.feature_names, self.mean, self.missing_count)
        }


def _parse_cell(text: str):
    text = text.strip()
    if text in MISSING_TOKENS:
        return None
    try:
        value = float(text)
    except ValueError:
        return text
    return None if math.isnan(value) else value


def load_wave_csv(path, wave_id: int) -> RawSurveyTable:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        except csv.Error as exc:
            raise ParseError(f"{path}: row 1: {exc}") from None
        header = [h.strip() for h in header]
        dups = sorted({h for h in header if header.count(h) > 1})
        if dups:
            raise SchemaError(f"{path}: duplicate header names {dups}")
        rows = []
        while True:
            try:
                raw = next(reader)
            except StopIteration:
                break
            except csv.Error as exc:
                raise ParseError(f"{path}: row {reader.line_num}: {exc}") from None
            if not raw:
                continue
            if len(raw) != len(header):
                raise ParseError(
                    f"{path}: row {reader.line_num}: expected {len(header)} fields, got {len(raw)}")
            rows.append({h: _parse_cell(v) for h, v in zip(header, raw)})
    return RawSurveyTable(wave_id, header, rows)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() else repr(value)
    return str(value)


def write_wave_csv(table: RawSurveyTable, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_format_cell(row[c]) for c in table.columns])


def _merge_indicator(a, b):
    for v in (a, b):
        if v not in (None, 0.0, 1.0):
            raise SchemaError(f"Q4 indicator values must be 0/1, got {v!r}")
    if a == 1.0 or b == 1.0:
        return 1.0
    if a is None or b is None:
        return None
    return 0.0


def _has_q4(columns) -> bool:
    return any(c == "Q4" or c.startswith("Q4_") for c in columns)


def harmonize_q4(tables: Sequence[RawSurveyTable]) -> list[RawSurveyTable]:
    """Give Q4 one option set in every wave.

    Tables carrying the split option pair ``Q4_1a``/``Q4_1b`` get a single
    ``Q4_1`` indicator (logical OR) in the position of ``Q4_1a``.
    """
    out = []
    for table in tables:
        cols = table.columns
        if not _has_q4(cols):
            raise SchemaError(f"wave {table.wave_id}: no Q4 columns")
        present = [c for c in Q4_SPLIT if c in cols]
        if not present:
            out.append(table)
            continue
        if len(present) != 2:
            raise SchemaError(f"wave {table.wave_id}: split Q4 option needs both {Q4_SPLIT}")
        if Q4_MERGED in cols:
            raise SchemaError(f"wave {table.wave_id}: has both {Q4_MERGED} and split options")
        a, b = Q4_SPLIT
        new_cols = [Q4_MERGED if c == a else c for c in cols if c != b]
        rows = []
        for row in table.rows:
            merged = _merge_indicator(row[a], row[b])
            rows.append({c: (merged if c == Q4_MERGED else row[c]) for c in new_cols})
        out.append(RawSurveyTable(table.wave_id, new_cols, rows))
    return out


def drop_inconsistent(tables: Sequence[RawSurveyTable],
                      columns: Sequence[str] = DROPPED_COLUMNS) -> list[RawSurveyTable]:
    out = []
    drop = set(columns)
    for table in tables:
        if not drop.intersection(table.columns):
            out.append(table)
            continue
        keep = [c for c in table.columns if c not in drop]
        rows = [{c: row[c] for c in keep} for row in table.rows]
        out.append(RawSurveyTable(table.wave_id, keep, rows))
    return out


def missingness_report(tables: Sequence[RawSurveyTable]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for table in tables:
        for c in table.columns:
            counts.setdefault(c, 0)
            counts[c] += sum(1 for row in table.rows if row[c] is None)
    return counts


def _expanded_columns(columns: Sequence[str]) -> list[str]:
    out = []
    for c in columns:
        if c in ONE_HOT_OPTIONS:
            out.extend(f"{c}_{k}" for k in range(1, ONE_HOT_OPTIONS[c] + 1))
        elif c != LABEL_COLUMN:
            out.append(c)
    return out


def _table_matrix(table: RawSurveyTable, names: list[str]) -> np.ndarray:
    X = np.full((len(table), len(names)), np.nan)
    pos = {n: j for j, n in enumerate(names)}
    for c in table.columns:
        if c == LABEL_COLUMN:
            bad = [v for v in table.column(c) if v is not None and v != table.wave_id]
            if bad:
                raise DataError(f"wave {table.wave_id}: {LABEL_COLUMN} disagrees with wave id")
            continue
        values = table.column(c)
        if c in ONE_HOT_OPTIONS:
            k = ONE_HOT_OPTIONS[c]
            start = pos[f"{c}_1"]
            for i, v in enumerate(values):
                if v is None:
                    continue
                if not (isinstance(v, float) and v.is_integer() and 1 <= v <= k):
                    raise DataError(f"wave {table.wave_id}: {c} option {v!r} outside 1..{k}")
                X[i, start:start + k] = 0.0
                X[i, start + int(v) - 1] = 1.0
            continue
        j = pos[c]
        for i, v in enumerate(values):
            if v is None:
                continue
            if isinstance(v, str):
                raise DataError(f"wave {table.wave_id}: non-numeric value {v!r} in {c}")
            X[i, j] = v
    return X


def concatenate_and_label(tables: Sequence[RawSurveyTable]) -> Dataset:
    """Stack wave tables row-wise; the label of every row is its wave id.

    Missing cells stay NaN here; ``impute_mean`` fills them.
    """
    if not tables:
        raise DataError("no tables to concatenate")
    names = _expanded_columns(tables[0].columns)
    for table in tables[1:]:
        other = _expanded_columns(table.columns)
        if set(other) != set(names):
            missing = sorted(set(names) - set(other))
            extra = sorted(set(other) - set(names))
            raise SchemaError(
                f"wave {table.wave_id}: column mismatch (missing {missing}, extra {extra})")
    schema = FeatureSchema.from_names(names)
    X = np.vstack([_table_matrix(t, names) for t in tables])
    y = np.concatenate([np.full(len(t), t.wave_id, dtype=np.int64) for t in tables])
    return Dataset(schema, X, y)


def impute_mean(dataset: Dataset) -> tuple[Dataset, ImputationStats]:
    """Replace NaN cells by the column mean of the observed values.

    Means come from whatever rows are passed in; the pipeline imputes the
    full dataset before splitting, which leaks test-row means into training.
    """
    X = dataset.X
    missing = np.isnan(X)
    counts = missing.sum(axis=0)
    empty = np.flatnonzero(counts == X.shape[0])
    if X.shape[0] == 0 or empty.size:
        names = [dataset.feature_names[j] for j in empty]
        raise DataError(f"cannot impute features with no observed values: {names}")
    observed = np.where(missing, 0.0, X)
    means = observed.sum(axis=0) / (X.shape[0] - counts)
    filled = np.where(missing, means, X)
    stats = ImputationStats(dataset.feature_names, means, counts.astype(np.int64))
    return Dataset(dataset.schema, filled, dataset.y), stats


def stratified_split(dataset: Dataset, train_fraction: float = 0.8,
                     seed: int = 0) -> tuple[Dataset, Dataset]:
    """Per-class shuffle and split; the train count per class is floored."""
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError("train_fraction must be in (0, 1]")
    if dataset.n_rows == 0:
        raise DataError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in dataset.classes:
        idx = rng.permutation(np.flatnonzero(dataset.y == c))
        n_train = math.floor(train_fraction * idx.size + 1e-9)
        train_idx.append(idx[:n_train])
        test_idx.append(idx[n_train:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    return dataset.subset(train), dataset.subset(test)


def preprocess(tables: Sequence[RawSurveyTable]) -> tuple[Dataset, ImputationStats]:
    tables = drop_inconsistent(harmonize_q4(tables))
    return impute_mean(concatenate_and_label(tables))


def load_waves(paths: Sequence) -> list[RawSurveyTable]:
    """Load one CSV per wave; the i-th path is wave i+1."""
    return [load_wave_csv(p, i + 1) for i, p in enumerate(paths)]


def write_dataset_csv(dataset: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset.feature_names + [LABEL_COLUMN])
        for row, label in zip(dataset.X, dataset.y):
            writer.writerow([("" if math.isnan(v) else repr(float(v))) for v in row] + [int(label)])


def read_dataset_csv(path) -> Dataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if LABEL_COLUMN not in header:
            raise SchemaError(f"{path}: no {LABEL_COLUMN} label column")
        li = header.index(LABEL_COLUMN)
        names = [h for i, h in enumerate(header) if i != li]
        rows, labels = [], []
        for raw in reader:
            if not raw:
                continue
            if len(raw) != len(header):
                raise ParseError(f"{path}: row {reader.line_num}: expected {len(header)} fields")
            try:
                values = [float("nan") if v.strip() in MISSING_TOKENS else float(v)
                          for i, v in enumerate(raw) if i != li]
                labels.append(int(float(raw[li])))
            except ValueError as exc:
                raise ParseError(f"{path}: row {reader.line_num}: {exc}") from None
            rows.append(values)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return Dataset(FeatureSchema.from_names(names), X, np.array(labels, dtype=np.int64))


# ---------------------------------------------------------------------------
# Synthetic stand-in for the survey export

# Integer answer ranges of the numeric questions, in questionnaire order.
_QUESTION_RANGES = {
    "S1": (1, 13), "S2": (1, 7), "S3": (1, 3),
    "Q5": (1, 4), "Q6": (1, 8), "Q6b": (1, 5), "Q7": (1, 4),
    **{f"Q8x{i}": (1, 4) for i in range(1, 8)},
    "Q15": (0, 7), "Q16": (0, 7), "Q17": (1, 3), "Q18": (0, 7), "Q19": (1, 3),
    **{f"Q20x{i}": (1, 4) for i in range(1, 4)},
    "Q23": (1, 8), "Q23CP": (1, 4),
    "Q24DK": (0, 1), "Q25": (1, 8), "Q26": (1, 6), "Q27": (1, 10), "Q28": (1, 12),
    "Q29": (1, 3),
    "hAge": (1, 6), "gender": (1, 2), "hIncome": (1, 5), "hChild": (0, 1),
    "hHousehold": (1, 5), "hGender": (1, 2), "hRegion": (1, 5),
}
# Planted (wave-dependent) features are taken from the front of this list.
PLANTED_ORDER = ("Q4_1", "Q18", "Q19", "Q15", "Q7", "Q17", "Q5", "Q20x1", "Q20x2",
                 "Q4_2", "Q4_3", "Q8x1", "Q8x2", "Q23", "Q28")
_HEAVY_MISSING = {"Q16": 0.7}
_LIGHT_MISSING = {c: 0.02 for c in ("Q5", "Q6b", "Q25", "Q27", "Q28")}
_Q4_BASE_RATE = 0.1
_Q4_PLANTED_RATE = 0.25
# sd of the standard logistic: a planted indicator is a thresholded latent
# variable shifted by the same number of its own sds as the Gaussian features
_LOGISTIC_SD = math.pi / math.sqrt(3)


@dataclass(frozen=True)
class SynthConfig:
    rows_per_wave: int = 1000
    n_planted: int = 3
    drift_strength: float = 1.5
    seed: int = 0
    # wave index offsets are scaled by this before multiplying by drift
    drift_step: float = field(default=0.5, repr=False)

    def validate(self):
        if self.rows_per_wave < 1:
            raise ValueError("rows_per_wave must be >= 1")
        if not 0 <= self.n_planted <= len(PLANTED_ORDER):
            raise ValueError(f"n_planted must be in 0..{len(PLANTED_ORDER)}")
        if not math.isfinite(self.drift_strength) or self.drift_strength < 0:
            raise ValueError("drift_strength must be finite and >= 0")

    @property
    def planted(self) -> tuple[str, ...]:
        return PLANTED_ORDER[: self.n_planted]


def _raw_columns(wave: int) -> list[str]:
    q4 = [*Q4_SPLIT, *(f"Q4_{k}" for k in range(2, 8))] if wave >= 5 else \
        [f"Q4_{k}" for k in range(1, 8)]
    cols = ["Status", "Respid", "language", "agreement", "S1", "S2", "S3", *q4]
    for q in _QUESTION_RANGES:
        if q in ("S1", "S2", "S3"):
            continue
        if q == "Q23CP" and wave < 5:
            continue
        if q == "Q24DK":
            cols.append("Q24")
        cols.append(q)
    cols.append(LABEL_COLUMN)
    return cols


def synth_raw_tables(config: SynthConfig = SynthConfig()) -> list[RawSurveyTable]:
    """Six raw wave tables shaped like the survey export.

    Waves 5-6 carry the split Q4 option and the extra Q23CP question; Q16
    is mostly blank and a handful of questions have sporadic blanks.
    """
    config.validate()
    n = config.rows_per_wave
    planted = set(config.planted)
    streams = np.random.SeedSequence(config.seed).spawn(N_WAVES)
    tables = []
    for wave in range(1, N_WAVES + 1):
        rng = np.random.default_rng(streams[wave - 1])
        offset = config.drift_strength * config.drift_step * (wave - (N_WAVES + 1) / 2)
        cols = _raw_columns(wave)
        data: dict[str, list] = {}
        data["Status"] = ["complete"] * n
        data["Respid"] = [float(wave * 100000 + i) for i in range(n)]
        data["language"] = ["EN"] * n
        data["agreement"] = [1.0] * n
        q4 = np.zeros((n, 7))
        for k in range(1, 8):
            name = f"Q4_{k}"
            if name in planted:
                base = math.log(_Q4_PLANTED_RATE / (1 - _Q4_PLANTED_RATE))
                p = 1.0 / (1.0 + math.exp(-(base + offset * _LOGISTIC_SD)))
            else:
                p = _Q4_BASE_RATE
            q4[:, k - 1] = rng.random(n) < p
        for k in range(2, 8):
            data[f"Q4_{k}"] = q4[:, k - 1].tolist()
        if wave >= 5:
            # split a positive merged answer into (me, someone, both)
            which = rng.integers(0, 3, size=n)
            pos = q4[:, 0] == 1
            data[Q4_SPLIT[0]] = (pos & (which != 1)).astype(float).tolist()
            data[Q4_SPLIT[1]] = (pos & (which != 0)).astype(float).tolist()
        else:
            data["Q4_1"] = q4[:, 0].tolist()
        for q, (lo, hi) in _QUESTION_RANGES.items():
            if q == "Q23CP" and wave < 5:
                continue
            if q in planted:
                sd = (hi - lo) / 4
                values = rng.normal((lo + hi) / 2 + offset * sd, sd, size=n)
            else:
                values = rng.integers(lo, hi + 1, size=n).astype(float)
            data[q] = values.tolist()
        data["Q24"] = rng.integers(1, ONE_HOT_OPTIONS["Q24"] + 1, size=n).astype(float).tolist()
        data[LABEL_COLUMN] = [float(wave)] * n
        for q, rate in {**_HEAVY_MISSING, **_LIGHT_MISSING}.items():
            blank = rng.random(n) < rate
            data[q] = [None if b else v for b, v in zip(blank, data[q])]
        rows = [{c: data[c][i] for c in cols} for i in range(n)]
        tables.append(RawSurveyTable(wave, cols, rows))
    return tables


def synth_generate(config: SynthConfig = SynthConfig()) -> Dataset:
    """Synthetic dataset run through the same preprocessing as real exports."""
    dataset, _ = preprocess(synth_raw_tables(config))
    return dataset
