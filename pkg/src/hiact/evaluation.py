"""Metrics, confusion matrices and leave-one-subject-out cross-validation.

Precision and recall are macro averages over the classes that occur in the
gold labels; the F-score is the harmonic mean of macro precision and macro
recall. A class that is never predicted has precision 0.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import DecodeResult, HiactError, Hyperparams, LengthMismatch, SegmentSequence
from .data import DatasetFile, Model, apply_standardizer, fit_standardizer
from .inference import decode
from .learning import train

METRIC_NAMES = ("accuracy", "macro_precision", "macro_recall", "macro_f1")


class InsufficientSubjects(HiactError, ValueError):
    pass


def _harmonic(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: np.ndarray
    per_class: dict = field(default_factory=dict)

    def to_dict(self, names: Optional[Sequence[str]] = None) -> dict:
        def name(c):
            return names[c] if names is not None else str(c)
        return {
            **{m: float(getattr(self, m)) for m in METRIC_NAMES},
            "confusion": self.confusion.tolist(),
            "per_class": {name(c): v for c, v in self.per_class.items()},
        }


def confusion_matrix(gold, pred, n_classes: int) -> np.ndarray:
    """Rows are gold labels, columns are predictions."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(gold, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return cm


def classification_metrics(gold, pred, n_classes: Optional[int] = None) -> MetricsReport:
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape:
        raise LengthMismatch(f"{len(gold)} gold labels vs {len(pred)} predictions")
    if gold.size == 0:
        raise LengthMismatch("nothing to evaluate")
    if n_classes is None:
        n_classes = int(max(gold.max(), pred.max())) + 1
    cm = confusion_matrix(gold, pred, n_classes)
    tp = np.diag(cm).astype(np.float64)
    n_pred = cm.sum(0)
    n_gold = cm.sum(1)
    per_class = {}
    present = np.flatnonzero(n_gold > 0)
    for c in present:
        p = tp[c] / n_pred[c] if n_pred[c] else 0.0
        r = tp[c] / n_gold[c]
        per_class[int(c)] = {"precision": float(p), "recall": float(r),
                             "f1": _harmonic(p, r), "support": int(n_gold[c])}
    mp = float(np.mean([per_class[c]["precision"] for c in per_class]))
    mr = float(np.mean([per_class[c]["recall"] for c in per_class]))
    return MetricsReport(float(tp.sum() / cm.sum()), mp, mr, _harmonic(mp, mr), cm, per_class)


def evaluate(preds: Sequence[DecodeResult], golds: Sequence[SegmentSequence],
             n_actions: Optional[int] = None, n_activities: Optional[int] = None):
    """Returns ``(action metrics over all segments, activity metrics over sequences)``."""
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions for {len(golds)} sequences")
    if not preds:
        raise LengthMismatch("empty prediction list")
    gold_y, pred_y = [], []
    for p, g in zip(preds, golds):
        if len(p.actions) != len(g.actions):
            raise LengthMismatch(f"sequence {g.id!r}: {len(p.actions)} predicted actions, "
                                 f"{len(g.actions)} gold")
        gold_y.append(g.actions)
        pred_y.append(p.actions)
    actions = classification_metrics(np.concatenate(gold_y), np.concatenate(pred_y), n_actions)
    activities = classification_metrics([g.activity for g in golds], [p.activity for p in preds],
                                        n_activities)
    return actions, activities


def confusion_grid(cm: np.ndarray, names: Optional[Sequence[str]] = None) -> str:
    """Plain-text rendering; rows are gold, columns are predictions."""
    n = len(cm)
    names = [str(i) for i in range(n)] if names is None else [str(x) for x in names]
    width = max(max(len(x) for x in names), len(str(int(cm.max()) if cm.size else 0)), 4)
    lines = [" " * width + " | " + " ".join(x[:width].rjust(width) for x in names)]
    lines.append("-" * len(lines[0]))
    for i in range(n):
        lines.append(names[i][:width].rjust(width) + " | "
                     + " ".join(str(int(v)).rjust(width) for v in cm[i]))
    return "\n".join(lines)


def confusion_csv(cm: np.ndarray, names: Optional[Sequence[str]] = None) -> str:
    """Long-format ``gold,predicted,count`` table for external plotting tools."""
    names = [str(i) for i in range(len(cm))] if names is None else list(names)
    rows = ["gold,predicted,count"]
    for i in range(len(cm)):
        for j in range(len(cm)):
            rows.append(f"{names[i]},{names[j]},{int(cm[i, j])}")
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------- cross-validation

@dataclass
class CvReport:
    folds: list
    action_metrics: list
    activity_metrics: list
    mean: dict
    stderr: dict

    def to_dict(self) -> dict:
        return {
            "folds": self.folds,
            "actions": [m.to_dict() for m in self.action_metrics],
            "activities": [m.to_dict() for m in self.activity_metrics],
            "mean": self.mean,
            "stderr": self.stderr,
        }

    def table(self) -> str:
        lines = [f"{'metric':<28}{'mean':>10}{'stderr':>10}"]
        for level in ("actions", "activities"):
            for m in METRIC_NAMES:
                key = f"{level}.{m}"
                lines.append(f"{key:<28}{self.mean[key]:>10.4f}{self.stderr[key]:>10.4f}")
        return "\n".join(lines)


def fit_model(train_ds: DatasetFile, hp: Hyperparams, standardize: bool = True,
              categories=None, n_categories=None):
    """Standardize on the training split, train, and wrap everything into a Model."""
    std = fit_standardizer(train_ds) if standardize else None
    recs = apply_standardizer(std, train_ds.records) if std is not None else train_ds.records
    cats = None
    if categories is not None:
        cats = [categories[r.id] for r in train_ds.records]
    w, report = train(recs, train_ds.space, hp, categories=cats, n_categories=n_categories)
    model = Model(train_ds.space.with_latent(hp.n_latent), w, std, list(train_ds.action_names),
                  list(train_ds.activity_names), hp.to_dict())
    return model, report


def predict(model: Model, seqs) -> list[DecodeResult]:
    return [decode(model.weights, s) for s in model.prepare(seqs)]


def _run_fold(args):
    ds, subject, hp, standardize = args
    train_ds = ds.subset(r for r in ds.records if r.subject != subject)
    test = [r for r in ds.records if r.subject == subject]
    t0 = time.perf_counter()
    model, report = fit_model(train_ds, hp, standardize)
    preds = predict(model, test)
    act, acty = evaluate(preds, test, ds.space.n_actions, ds.space.n_activities)
    return act, acty, report.summary(), time.perf_counter() - t0


def cross_validate(ds: DatasetFile, hp: Hyperparams, n_jobs: int = 1,
                   standardize: bool = True) -> CvReport:
    """Leave-one-subject-out: one fold per subject, mean and standard error over folds."""
    subjects = sorted({r.subject for r in ds.records})
    if len(subjects) < 2:
        raise InsufficientSubjects(f"need at least 2 subjects, found {len(subjects)}")
    jobs = [(ds, s, hp, standardize) for s in subjects]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=min(n_jobs, len(jobs))) as pool:
            results = list(pool.map(_run_fold, jobs))
    else:
        results = [_run_fold(j) for j in jobs]

    action_metrics = [r[0] for r in results]
    activity_metrics = [r[1] for r in results]
    folds = [{"test_subject": s,
              "n_test": sum(1 for r in ds.records if r.subject == s),
              "train": res[2]} for s, res in zip(subjects, results)]
    mean, stderr = {}, {}
    for level, ms in (("actions", action_metrics), ("activities", activity_metrics)):
        for m in METRIC_NAMES:
            vals = np.array([getattr(x, m) for x in ms])
            mean[f"{level}.{m}"] = float(vals.mean())
            stderr[f"{level}.{m}"] = float(vals.std(ddof=1) / np.sqrt(len(vals)))
    return CvReport(folds, action_metrics, activity_metrics, mean, stderr)


def select_c(train_ds: DatasetFile, val_subject: str, hp: Hyperparams,
             grid: Sequence[float] = (0.1, 1.0, 10.0, 100.0), standardize: bool = True):
    """Pick C by macro F1 on actions for one held-out validation subject.

    Returns ``(best_c, {c: score})``.
    """
    fit_part = train_ds.subset(r for r in train_ds.records if r.subject != val_subject)
    val = [r for r in train_ds.records if r.subject == val_subject]
    if not fit_part.records or not val:
        raise InsufficientSubjects("validation subject must split the data into two parts")
    scores = {}
    for c in grid:
        model, _ = fit_model(fit_part, Hyperparams.from_dict({**hp.to_dict(), "c_reg": c}),
                             standardize)
        act, acty = evaluate(predict(model, val), val, train_ds.space.n_actions,
                             train_ds.space.n_activities)
        scores[c] = act.macro_f1
    best = max(grid, key=lambda c: (scores[c], -c))
    return best, scores


def write_metrics(out_dir, actions: MetricsReport, activities: MetricsReport,
                  action_names=None, activity_names=None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"actions": actions.to_dict(action_names), "activities": activities.to_dict(activity_names)}
    (out / "metrics.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    lines = []
    for title, rep, names in (("actions", actions, action_names),
                              ("activities", activities, activity_names)):
        lines.append(f"[{title}]")
        for m in METRIC_NAMES:
            lines.append(f"{m:<18}{getattr(rep, m):.4f}")
        lines.append(confusion_grid(rep.confusion, names))
        lines.append("")
        (out / f"confusion_{title}.csv").write_text(confusion_csv(rep.confusion, names))
    (out / "report.txt").write_text("\n".join(lines))
