"""Core domain types and labeled-alert-stream ingestion.

An alert is one network-flow record with numeric features and a binary
ground-truth label (benign=0, malicious=1). Streams are immutable after
load: triage is simulated over a fixed, pre-recorded sequence of alerts
with no retraining or feedback.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd


class IngestionError(ValueError):
    """Raised when an input file cannot be turned into a usable stream."""


class Decision(str, Enum):
    ESCALATE = "Escalate"
    CLOSE = "Close"


@dataclass(frozen=True)
class CostModel:
    """Asymmetric error costs: a missed attack (c_fn) vs a false alarm (c_fp)."""

    c_fn: float
    c_fp: float

    def __post_init__(self):
        if not (self.c_fn > 0 and np.isfinite(self.c_fn)):
            raise ValueError(f"c_fn must be a positive finite number, got {self.c_fn}")
        if not (self.c_fp > 0 and np.isfinite(self.c_fp)):
            raise ValueError(f"c_fp must be a positive finite number, got {self.c_fp}")


@dataclass(frozen=True)
class Alert:
    id: str
    features: np.ndarray
    label: int


class AlertStream:
    """Immutable ordered sequence of alerts sharing one feature space.

    Features are held as a single read-only (n, d) float64 matrix; labels as
    a read-only int8 vector. Safe to share across concurrent readers.
    """

    def __init__(self, ids, X, y, feature_names, source_digest=""):
        ids = list(ids)
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int8)
        if X.ndim != 2:
            raise ValueError("feature matrix must be 2-dimensional")
        if not (len(ids) == X.shape[0] == y.shape[0]):
            raise ValueError("ids, features and labels must have equal length")
        if len(feature_names) != X.shape[1]:
            raise ValueError("feature_names length must equal feature dimensionality")
        if not np.isfinite(X).all():
            raise ValueError("feature matrix contains non-finite values")
        bad = set(np.unique(y)) - {0, 1}
        if bad:
            raise ValueError(f"labels must be 0 or 1, found {sorted(bad)}")
        if len(set(ids)) != len(ids):
            raise IngestionError("duplicate alert ids in stream")
        X.setflags(write=False)
        y.setflags(write=False)
        self.ids: list[str] = ids
        self.X: np.ndarray = X
        self.y: np.ndarray = y
        self.feature_names: list[str] = list(feature_names)
        self.source_digest: str = source_digest

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, i: int) -> Alert:
        return Alert(self.ids[i], self.X[i], int(self.y[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, indices, tag: str = "") -> "AlertStream":
        """New stream holding the selected rows, in the given order."""
        indices = np.asarray(indices, dtype=int)
        digest = f"{self.source_digest}:{tag}" if tag else self.source_digest
        return AlertStream(
            [self.ids[i] for i in indices],
            self.X[indices],
            self.y[indices],
            self.feature_names,
            source_digest=digest,
        )


@dataclass
class IngestionReport:
    path: str
    source_digest: str
    label_column: str
    id_column: str | None
    positive_token: str
    rows_read: int
    rows_kept: int
    rows_dropped_nonfinite: int
    columns_retained: list[str] = field(default_factory=list)
    columns_dropped: list[str] = field(default_factory=list)
    n_malicious: int = 0
    n_benign: int = 0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)

    def summary(self) -> str:
        lines = [
            f"ingested {self.path} (sha256 {self.source_digest[:12]}...)",
            f"  rows: read {self.rows_read}, kept {self.rows_kept}, "
            f"dropped non-finite {self.rows_dropped_nonfinite}",
            f"  labels: {self.n_malicious} malicious / {self.n_benign} benign "
            f"(column '{self.label_column}', positive token '{self.positive_token}')",
            f"  features retained ({len(self.columns_retained)}): "
            + ", ".join(self.columns_retained),
        ]
        if self.columns_dropped:
            lines.append(
                f"  columns discarded ({len(self.columns_dropped)}): "
                + ", ".join(self.columns_dropped)
            )
        return "\n".join(lines)

    def print_summary(self) -> None:
        print(self.summary(), file=sys.stderr)


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _parse_labels(series: pd.Series, positive_token: str, negative_token: str) -> np.ndarray:
    def norm(v):
        if isinstance(v, float) and v.is_integer():
            return str(int(v))
        return str(v).strip()

    out = np.empty(len(series), dtype=np.int8)
    for i, v in enumerate(series):
        if pd.isna(v):
            raise IngestionError(f"missing label at row {i}")
        s = norm(v)
        if s == positive_token:
            out[i] = 1
        elif s == negative_token:
            out[i] = 0
        else:
            raise IngestionError(
                f"label value {v!r} at row {i} is neither "
                f"{positive_token!r} nor {negative_token!r}"
            )
    return out


def ingest_csv(
    path,
    label_column: str,
    keep_columns: list[str] | None = None,
    id_column: str | None = "id",
    positive_token: str = "1",
    negative_token: str = "0",
) -> tuple[AlertStream, IngestionReport]:
    """Load a labeled alert CSV into an AlertStream.

    Only numeric columns are kept as features; a column is numeric when every
    non-missing cell parses as a number. Rows containing any non-finite
    feature value are dropped and counted. If `id_column` names an existing
    column it supplies alert ids (and is excluded from the features),
    otherwise positional ids are synthesized.
    """
    try:
        # round_trip parsing: numeric cells reproduce their written doubles
        # bit-exactly, keeping re-runs stable across writer/reader pairs
        df = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError:
        raise IngestionError(f"alert file not found: {path}")
    except pd.errors.EmptyDataError:
        raise IngestionError(f"alert file is empty: {path}")
    digest = _file_digest(path)

    if label_column not in df.columns:
        raise IngestionError(f"label column {label_column!r} not in {list(df.columns)}")
    labels = _parse_labels(df[label_column], positive_token, negative_token)

    if id_column is not None and id_column in df.columns:
        ids = [str(v) for v in df[id_column]]
        used_id_column = id_column
    else:
        ids = [f"r{i:06d}" for i in range(len(df))]
        used_id_column = None

    candidates = [c for c in df.columns if c != label_column and c != used_id_column]
    if keep_columns is not None:
        missing = [c for c in keep_columns if c not in candidates]
        if missing:
            raise IngestionError(f"keep_columns not present in file: {missing}")
        candidates = [c for c in candidates if c in set(keep_columns)]

    retained, dropped = [], []
    numeric_cols = {}
    for c in candidates:
        col = df[c]
        coerced = pd.to_numeric(col, errors="coerce")
        # a column is numeric iff coercion introduces no new missing values
        if (coerced.isna() & ~col.isna()).any():
            dropped.append(c)
        else:
            retained.append(c)
            numeric_cols[c] = coerced.to_numpy(dtype=np.float64)
    if not retained:
        raise IngestionError("no numeric feature columns found")

    X = np.column_stack([numeric_cols[c] for c in retained])
    finite = np.isfinite(X).all(axis=1)
    n_dropped = int((~finite).sum())
    if not finite.any():
        raise IngestionError("zero usable rows after dropping non-finite values")

    keep_idx = np.nonzero(finite)[0]
    ids = [ids[i] for i in keep_idx]
    if len(set(ids)) != len(ids):
        raise IngestionError("duplicate alert ids in input file")
    X = X[keep_idx]
    y = labels[keep_idx]

    stream = AlertStream(ids, X, y, retained, source_digest=digest)
    report = IngestionReport(
        path=str(path),
        source_digest=digest,
        label_column=label_column,
        id_column=used_id_column,
        positive_token=positive_token,
        rows_read=len(df),
        rows_kept=len(stream),
        rows_dropped_nonfinite=n_dropped,
        columns_retained=retained,
        columns_dropped=dropped,
        n_malicious=int(y.sum()),
        n_benign=int((y == 0).sum()),
    )
    return stream, report


SCORES_HEADER = ["id", "raw_score", "label"]


def ingest_scores(path) -> list[tuple[str, float, int]]:
    """Load externally produced detector scores: CSV `id,raw_score,label`."""
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        raise IngestionError(f"scores file not found: {path}")
    except pd.errors.EmptyDataError:
        raise IngestionError(f"scores file has zero usable rows: {path}")
    if list(df.columns) != SCORES_HEADER:
        raise IngestionError(
            f"scores file must have header {','.join(SCORES_HEADER)}, got {list(df.columns)}"
        )
    if len(df) == 0:
        raise IngestionError(f"scores file has zero usable rows: {path}")
    out = []
    for i, (rid, score, label) in enumerate(
        zip(df["id"], df["raw_score"], df["label"])
    ):
        s = float(score)
        if not (0.0 <= s <= 1.0):
            raise IngestionError(f"raw_score {s} at row {i} outside [0, 1]")
        l = label if not isinstance(label, str) else label.strip()
        try:
            li = int(l)
        except (TypeError, ValueError):
            raise IngestionError(f"malformed label {label!r} at row {i}")
        if li not in (0, 1) or (isinstance(l, float) and not l.is_integer()):
            raise IngestionError(f"malformed label {label!r} at row {i}")
        out.append((str(rid), s, li))
    return out


def stratified_split(
    stream: AlertStream, first_fraction: float, seed: int
) -> tuple[AlertStream, AlertStream]:
    """Split a stream per class into (first, second) parts, seeded.

    Both classes contribute to both parts whenever a class has >= 2 members,
    so a downstream calibrator always sees positives and negatives.
    """
    if not 0.0 < first_fraction < 1.0:
        raise ValueError("first_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    first, second = [], []
    for cls in (0, 1):
        idx = np.nonzero(stream.y == cls)[0]
        if len(idx) == 0:
            continue
        perm = rng.permutation(len(idx))
        n_first = int(round(first_fraction * len(idx)))
        if len(idx) >= 2:
            n_first = min(max(n_first, 1), len(idx) - 1)
        first.extend(idx[perm[:n_first]])
        second.extend(idx[perm[n_first:]])
    first.sort()
    second.sort()
    return stream.subset(first, "split-a"), stream.subset(second, "split-b")
