"""Feature-space diagnostics recorded once per epoch.

``m_da`` measures how closely raw student features follow teacher
directions, ``m_bc`` the mean cosine between samples of different classes
in the student's own feature space, and ``projector_diversity`` the
weight-space distance between ensemble members.
"""

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, MetricError
from .projector import flat_weights
from .tensor import EPS, Tensor

CSV_FIELDS = (
    "epoch", "lce", "lmda", "mda", "mbc",
    "diversity_min", "diversity_max", "train_acc", "test_acc", "secs",
)


def _array(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _unit_columns(x):
    norms = np.sqrt((x * x).sum(axis=0, keepdims=True))
    return x / np.maximum(norms, EPS)


def m_da(s, t):
    """``1 - mean_i cos(s_i, t_i)`` between raw student and teacher features."""
    s, t = _array(s), _array(t)
    if s.shape[0] != t.shape[0]:
        raise DimensionError(
            f"M_DA compares raw features and is defined only for equal feature dims; "
            f"got d={s.shape[0]}, m={t.shape[0]}"
        )
    if s.shape != t.shape:
        raise DimensionError(f"feature batches {s.shape} and {t.shape} differ")
    cos = (_unit_columns(s) * _unit_columns(t)).sum(axis=0)
    return float(1.0 - cos.mean())


def m_bc(s, labels):
    """Average over samples of the mean cosine to every other-class sample.

    Samples with no other-class partner are skipped.
    """
    s = _array(s)
    labels = np.asarray(labels)
    if s.ndim != 2 or labels.shape != (s.shape[1],):
        raise DimensionError(f"{s.shape} features need {s.shape[1] if s.ndim == 2 else '?'} labels")
    if s.shape[1] < 2:
        raise MetricError("between-class cosine needs at least two samples")
    u = _unit_columns(s)
    cos = u.T @ u
    cross = labels[:, None] != labels[None, :]
    counts = cross.sum(axis=1)
    has = counts > 0
    if not has.any():
        raise MetricError("between-class cosine is undefined when every sample has the same class")
    per_sample = (cos * cross).sum(axis=1)[has] / counts[has]
    return float(per_sample.mean())


def projector_diversity(e):
    """Entrywise L2 distance between every unordered member pair, pairs in
    lexicographic ``(i, j)`` order."""
    if e.q < 2:
        raise MetricError(f"projector diversity needs at least two projectors, got q={e.q}")
    flats = [flat_weights(p) for p in e.members]
    return [float(np.linalg.norm(flats[i] - flats[j])) for i, j in itertools.combinations(range(e.q), 2)]


@dataclass
class MetricsRecord:
    epoch: int
    lce: float
    lmda: float
    mda: float
    mbc: float
    diversity: list = field(default_factory=list)
    train_acc: float = float("nan")
    test_acc: float = float("nan")
    secs: float = 0.0

    def row(self):
        div = self.diversity
        return {
            "epoch": self.epoch,
            "lce": self.lce,
            "lmda": self.lmda,
            "mda": self.mda,
            "mbc": self.mbc,
            "diversity_min": min(div) if div else float("nan"),
            "diversity_max": max(div) if div else float("nan"),
            "train_acc": self.train_acc,
            "test_acc": self.test_acc,
            "secs": self.secs,
        }


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def to_csv(records, include_secs=True):
    fields = CSV_FIELDS if include_secs else CSV_FIELDS[:-1]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for rec in records:
        row = rec.row()
        writer.writerow([_fmt(row[f]) for f in fields])
    return buf.getvalue()


def to_jsonl(records):
    lines = []
    for rec in records:
        row = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in rec.row().items()}
        lines.append(json.dumps(row))
    return "".join(line + "\n" for line in lines)


def read_csv(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        out.append({k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()})
    return out


def strip_secs(csv_text):
    """CSV text with the wall-clock column dropped, for determinism checks."""
    rows = list(csv.reader(io.StringIO(csv_text)))
    if not rows:
        return ""
    keep = [i for i, name in enumerate(rows[0]) if name != "secs"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([row[i] for i in keep])
    return buf.getvalue()
