"""ROC curves, AUC and accuracy with "fake" as the positive class."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .data import LABELS


def _as_targets(labels) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.dtype.kind in "US" or arr.dtype == object:
        bad = [v for v in arr if v not in LABELS]
        if bad:
            raise ValueError(f"unknown label {bad[0]!r}")
        return np.array([LABELS.index(v) for v in arr], dtype=np.int64)
    arr = arr.astype(np.int64)
    if np.any((arr != 0) & (arr != 1)):
        raise ValueError("numeric labels must be 0 (real) or 1 (fake)")
    return arr


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = _as_targets(labels).reshape(-1)
    if len(s) != len(y):
        raise ValueError(f"{len(s)} scores but {len(y)} labels")
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("ROC/AUC need both real and fake samples")
    return s, y


@dataclass
class RocCurve:
    thresholds: np.ndarray  # first +inf, last -inf
    fpr: np.ndarray
    tpr: np.ndarray

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def area(self) -> float:
        """Trapezoidal area under the curve."""
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2))

    def to_csv(self, config_hash: str = "") -> str:
        buf = io.StringIO()
        if config_hash:
            buf.write(f"# config_hash={config_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(self.thresholds, self.fpr, self.tpr):
            w.writerow([repr(float(t)), repr(float(f)), repr(float(p))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RocCurve":
        rows = [r for r in csv.reader(line for line in text.splitlines() if not line.startswith("#"))]
        if not rows or rows[0] != ["threshold", "fpr", "tpr"]:
            raise ValueError("ROC CSV must start with the header threshold,fpr,tpr")
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
        return cls(data[:, 0], data[:, 1], data[:, 2])


def roc_curve(scores, labels) -> RocCurve:
    """One point per distinct score, thresholds descending; ties are grouped."""
    s, y = _check(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y)[last_of_group]
    fp = np.cumsum(1 - y)[last_of_group]
    P, Nn = y.sum(), len(y) - y.sum()
    tpr = np.r_[0.0, tp / P]
    fpr = np.r_[0.0, fp / Nn]
    # the lowest distinct score always reaches (1, 1); its threshold becomes the -inf sentinel
    thresholds = np.r_[np.inf, s[last_of_group][:-1], -np.inf]
    return RocCurve(thresholds, fpr, tpr)


def auc(scores, labels) -> float:
    """Mann-Whitney statistic: P(score_fake > score_real) + 0.5 P(tie)."""
    s, y = _check(scores, labels)
    pos, neg = s[y == 1], s[y == 0]
    # midranks make tied pairs count one half
    ranks = rankdata(np.r_[pos, neg], method="average")
    u = ranks[: len(pos)].sum() - len(pos) * (len(pos) + 1) / 2
    return float(u / (len(pos) * len(neg)))


def accuracy(probabilities, labels, threshold: float = 0.5) -> float:
    p = np.asarray(probabilities, dtype=np.float64).reshape(-1)
    y = _as_targets(labels).reshape(-1)
    if p.size == 0:
        raise ValueError("accuracy of an empty input is undefined")
    if len(p) != len(y):
        raise ValueError(f"{len(p)} probabilities but {len(y)} labels")
    return float(np.mean((p > threshold).astype(np.int64) == y))


@dataclass
class EvalReport:
    train_domain: str
    test_domain: str
    auc: float
    accuracy: float
    n_real: int
    n_fake: int
    checkpoint_hash: str = ""
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.auc <= 1.0:
            raise ValueError(f"AUC outside [0, 1]: {self.auc}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def evaluate(scores, labels, train_domain: str, test_domain: str, **meta) -> tuple[EvalReport, RocCurve]:
    y = _as_targets(labels)
    report = EvalReport(train_domain, test_domain, auc(scores, y), accuracy(scores, y),
                        int(np.sum(y == 0)), int(np.sum(y == 1)), **meta)
    return report, roc_curve(scores, y)
