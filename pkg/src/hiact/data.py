"""Dataset and model files, feature standardization, segmentation, synthetic data.

Dataset files are JSON Lines. The first line is a header::

    {"format": "hiact-dataset", "version": 1, "space": {...},
     "action_names": [...], "activity_names": [...], "subjects": [...]}

and every following line is one sequence::

    {"id": "...", "subject": "...", "segments": [[...], ...],
     "global": [...], "actions": [...] | null, "activity": int | null}

Floats are written with ``repr`` precision, so a save/load round trip is exact.
See docs/formats.md for the full grammar, including the model container and the
per-segment category side file.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    HiactError,
    LabelSpace,
    SegmentSequence,
    WeightPack,
    flatten,
    unflatten,
    validate_sequence,
)

DATASET_FORMAT = "hiact-dataset"
MODEL_FORMAT = "hiact-model"
CATEGORY_FORMAT = "hiact-categories"
FORMAT_VERSION = 1
STD_FLOOR = 1e-8

# segment feature blocks of CAD-120-style data: object, object-object,
# object-subject and temporal features
CAD120_BLOCKS = {"object": 180, "object_object": 200, "object_subject": 400, "temporal": 200}
CAD120_DIM = sum(CAD120_BLOCKS.values())


class ParseError(HiactError, ValueError):
    def __init__(self, path, line: int, offset: int, msg: str):
        self.path, self.line, self.offset = str(path), line, offset
        super().__init__(f"{path}:{line}:{offset}: {msg}")


class SchemaVersionUnsupported(HiactError, ValueError):
    pass


class ValidationError(HiactError, ValueError):
    def __init__(self, record_id: str, cause: Exception):
        self.record_id = record_id
        self.cause = cause
        super().__init__(f"record {record_id!r}: {cause}")


class EmptySplit(HiactError, ValueError):
    pass


class InvalidSpec(HiactError, ValueError):
    pass


@dataclass(eq=False)
class DatasetFile:
    space: LabelSpace
    records: list = field(default_factory=list)
    action_names: list = field(default_factory=list)
    activity_names: list = field(default_factory=list)
    subjects: list = field(default_factory=list)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if not self.action_names:
            self.action_names = [f"action{i}" for i in range(self.space.n_actions)]
        if not self.activity_names:
            self.activity_names = [f"activity{i}" for i in range(self.space.n_activities)]
        if not self.subjects:
            self.subjects = sorted({r.subject for r in self.records})

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DatasetFile):
            return NotImplemented
        return (self.space == other.space and self.version == other.version
                and self.action_names == other.action_names
                and self.activity_names == other.activity_names
                and self.subjects == other.subjects
                and len(self.records) == len(other.records)
                and all(a == b for a, b in zip(self.records, other.records)))

    def validate(self) -> None:
        known = set(self.subjects)
        for rec in self.records:
            try:
                validate_sequence(rec, self.space)
            except HiactError as exc:
                raise ValidationError(rec.id, exc) from exc
            if rec.subject not in known:
                raise ValidationError(rec.id, ValueError(f"unknown subject {rec.subject!r}"))

    def subset(self, records) -> "DatasetFile":
        return DatasetFile(self.space, list(records), list(self.action_names),
                           list(self.activity_names), list(self.subjects), self.version)

    def header(self) -> dict:
        return {
            "format": DATASET_FORMAT,
            "version": self.version,
            "space": self.space.to_dict(),
            "action_names": list(self.action_names),
            "activity_names": list(self.activity_names),
            "subjects": list(self.subjects),
        }


def _record_to_dict(seq: SegmentSequence) -> dict:
    return {
        "id": seq.id,
        "subject": seq.subject,
        "segments": seq.segments.tolist(),
        "global": seq.global_features.tolist(),
        "actions": None if seq.actions is None else seq.actions.tolist(),
        "activity": seq.activity,
    }


def _record_from_dict(d: dict) -> SegmentSequence:
    return SegmentSequence(
        segments=np.array(d["segments"], dtype=np.float64),
        global_features=np.array(d["global"], dtype=np.float64),
        actions=None if d.get("actions") is None else np.array(d["actions"], dtype=np.int64),
        activity=d.get("activity"),
        subject=str(d.get("subject", "")),
        id=str(d.get("id", "")),
    )


def _json_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, exc.colno, exc.msg) from None


def _check_header(path, lineno, header, expected_format):
    if not isinstance(header, dict) or header.get("format") != expected_format:
        raise ParseError(path, lineno, 1, f"expected a {expected_format!r} header record")
    version = header.get("version")
    if version != FORMAT_VERSION:
        raise SchemaVersionUnsupported(
            f"{path}: {expected_format} version {version!r} (supported: {FORMAT_VERSION})")


def save(ds: DatasetFile, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(ds.header()) + "\n")
        for rec in ds.records:
            fh.write(json.dumps(_record_to_dict(rec)) + "\n")


def load(path, validate: bool = True) -> DatasetFile:
    lines = _json_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError(path, 1, 1, "empty file, header record missing") from None
    _check_header(path, lineno, header, DATASET_FORMAT)
    try:
        space = LabelSpace.from_dict(header["space"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(path, lineno, 1, f"bad label space: {exc}") from None
    records = []
    for lineno, d in lines:
        try:
            records.append(_record_from_dict(d))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(path, lineno, 1, f"bad record: {exc}") from None
    ds = DatasetFile(space, records, header.get("action_names", []),
                     header.get("activity_names", []), header.get("subjects", []),
                     header["version"])
    if validate:
        ds.validate()
    return ds


def save_categories(labels: Sequence, ids: Sequence[str], n_categories: int, path,
                    names: Optional[list] = None) -> None:
    """Per-segment categorical labels (e.g. affordances), keyed by sequence id."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": CATEGORY_FORMAT, "version": FORMAT_VERSION,
                             "n_categories": n_categories,
                             "names": names or [f"cat{i}" for i in range(n_categories)]}) + "\n")
        for rid, lab in zip(ids, labels):
            fh.write(json.dumps({"id": rid, "labels": np.asarray(lab).tolist()}) + "\n")


def load_categories(path) -> tuple[dict, int]:
    """Returns ``({sequence id: label array}, n_categories)``."""
    lines = _json_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError(path, 1, 1, "empty file, header record missing") from None
    _check_header(path, lineno, header, CATEGORY_FORMAT)
    out = {}
    for lineno, d in lines:
        try:
            out[str(d["id"])] = np.asarray(d["labels"], dtype=np.int64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(path, lineno, 1, f"bad record: {exc}") from None
    return out, int(header["n_categories"])


# ---------------------------------------------------------------- standardizer

@dataclass
class Standardizer:
    segment_mean: np.ndarray
    segment_std: np.ndarray
    global_mean: np.ndarray
    global_std: np.ndarray
    floor: float = STD_FLOOR

    @staticmethod
    def _apply(x, mean, std, floor):
        live = std > floor
        out = (x - mean) / np.where(live, std, 1.0)
        return np.where(live, out, 0.0)

    def transform(self, seq: SegmentSequence) -> SegmentSequence:
        return SegmentSequence(
            self._apply(seq.segments, self.segment_mean, self.segment_std, self.floor),
            self._apply(seq.global_features, self.global_mean, self.global_std, self.floor),
            seq.actions, seq.activity, seq.subject, seq.id)

    def inverse(self, seq: SegmentSequence) -> SegmentSequence:
        """Undo :meth:`transform` (exact on dimensions whose std is above the floor)."""
        seg_std = np.where(self.segment_std > self.floor, self.segment_std, 0.0)
        glob_std = np.where(self.global_std > self.floor, self.global_std, 0.0)
        return SegmentSequence(seq.segments * seg_std + self.segment_mean,
                               seq.global_features * glob_std + self.global_mean,
                               seq.actions, seq.activity, seq.subject, seq.id)

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["segment_mean"]), np.asarray(d["segment_std"]),
                   np.asarray(d["global_mean"]), np.asarray(d["global_std"]),
                   float(d.get("floor", STD_FLOOR)))


def _records(ds):
    return ds.records if isinstance(ds, DatasetFile) else list(ds)


def fit_standardizer(train, floor: float = STD_FLOOR) -> Standardizer:
    """Per-dimension mean/std over all training segments and all global vectors."""
    recs = _records(train)
    if not recs:
        raise EmptySplit("cannot fit a standardizer on an empty split")
    segs = np.concatenate([r.segments for r in recs])
    glob = np.stack([r.global_features for r in recs])
    return Standardizer(segs.mean(0), segs.std(0), glob.mean(0), glob.std(0), floor)


def apply_standardizer(std: Standardizer, ds):
    if isinstance(ds, DatasetFile):
        return ds.subset([std.transform(r) for r in ds.records])
    return [std.transform(r) for r in ds]


# ---------------------------------------------------------------- segmentation

def uniform_segmentation(frames, seg_len: int) -> np.ndarray:
    """Average consecutive windows of ``seg_len`` frames; the last may be shorter."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 1:
        frames = frames[:, None]
    if len(frames) < 1:
        raise ValueError("need at least one frame")
    if seg_len < 1:
        raise ValueError("seg_len must be positive")
    return np.stack([frames[i:i + seg_len].mean(0) for i in range(0, len(frames), seg_len)])


def pooled_global_features(segments, k_max: int) -> np.ndarray:
    """Global vector for real data: segment mean followed by ``K / k_max`` (D0 = D + 1)."""
    segments = np.atleast_2d(np.asarray(segments, dtype=np.float64))
    return np.concatenate([segments.mean(0), [len(segments) / k_max]])


def convert_feature_table(path, seg_len: Optional[int] = None) -> DatasetFile:
    """Convert an externally computed per-segment feature table into a DatasetFile.

    Expects a CSV with a header row containing ``video_id``, ``subject``,
    ``activity``, ``segment`` (order within the video), ``action`` and then the
    feature columns (980 of them for CAD-120-style features, any number works).
    Labels may be names or integers; names get dense ids in sorted order. If
    ``seg_len`` is given, rows are treated as frames and averaged into uniform
    segments whose action is the majority frame label.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise ParseError(path, 1, 1, "empty table") from None
        required = ["video_id", "subject", "activity", "segment", "action"]
        missing = [c for c in required if c not in head]
        if missing:
            raise ParseError(path, 1, 1, f"missing columns {missing}")
        idx = {c: head.index(c) for c in required}
        feat_cols = [i for i, c in enumerate(head) if c not in required]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                feats = [float(row[i]) for i in feat_cols]
            except (ValueError, IndexError) as exc:
                raise ParseError(path, lineno, 1, str(exc)) from None
            rows.append((row[idx["video_id"]], row[idx["subject"]], row[idx["activity"]],
                         int(row[idx["segment"]]), row[idx["action"]], feats))

    action_names = sorted({r[4] for r in rows})
    activity_names = sorted({r[2] for r in rows})
    a_id = {n: i for i, n in enumerate(action_names)}
    act_id = {n: i for i, n in enumerate(activity_names)}
    videos: dict = {}
    for vid, subj, act, seg, action, feats in rows:
        videos.setdefault(vid, (subj, act, []))[2].append((seg, a_id[action], feats))

    built = []
    for vid, (subj, act, segs) in videos.items():
        segs.sort(key=lambda s: s[0])
        x = np.array([s[2] for s in segs])
        y = np.array([s[1] for s in segs])
        if seg_len is not None:
            x = uniform_segmentation(x, seg_len)
            y = np.array([np.bincount(y[i:i + seg_len]).argmax()
                          for i in range(0, len(y), seg_len)])
        built.append((vid, subj, act_id[act], x, y))
    k_max = max(len(b[3]) for b in built)
    records = [SegmentSequence(x, pooled_global_features(x, k_max), y, act, subj, vid)
               for vid, subj, act, x, y in built]
    d = len(feat_cols)
    space = LabelSpace(len(action_names), 1, len(activity_names), d, d + 1)
    ds = DatasetFile(space, records, action_names, activity_names)
    ds.validate()
    return ds


# ---------------------------------------------------------------- synthetic data

@dataclass
class SyntheticSpec:
    """Generative process that the model family represents exactly.

    ``transitions[a]`` is the action transition matrix of activity ``a``;
    ``means[y, z]`` the emission mean of joint state ``(y, z)``.
    """

    space: LabelSpace
    transitions: np.ndarray
    means: np.ndarray
    noise: float = 0.3
    length_range: tuple = (4, 12)
    n_sequences: int = 120
    n_subjects: int = 4
    seed: int = 0

    def validate(self) -> None:
        sp = self.space
        t = np.asarray(self.transitions, dtype=np.float64)
        if t.shape != (sp.n_activities, sp.n_actions, sp.n_actions):
            raise InvalidSpec(f"transitions shape {t.shape}, expected "
                              f"{(sp.n_activities, sp.n_actions, sp.n_actions)}")
        if np.any(t < 0) or not np.allclose(t.sum(-1), 1.0, atol=1e-9):
            raise InvalidSpec("transition rows must be probability vectors")
        if np.shape(self.means) != (sp.n_actions, sp.n_latent, sp.dim_segment):
            raise InvalidSpec(f"means shape {np.shape(self.means)}")
        if sp.dim_global != sp.n_activities:
            raise InvalidSpec("global features are a noisy one-hot; dim_global must equal n_activities")
        if not self.noise >= 0:
            raise InvalidSpec("noise scale must be >= 0")
        lo, hi = self.length_range
        if not 1 <= lo <= hi:
            raise InvalidSpec(f"bad length range {self.length_range}")
        if self.n_sequences < 0 or self.n_subjects < 1:
            raise InvalidSpec("need n_sequences >= 0 and n_subjects >= 1")


def default_synthetic_spec(seed: int = 0, n_sequences: int = 120, noise: float = 0.3,
                           n_actions: int = 4, n_latent: int = 2, n_activities: int = 3,
                           dim: int = 8, mean_scale: float = 1.0,
                           length_range: tuple = (4, 12)) -> SyntheticSpec:
    """Random activity-specific transitions and unit-scale emission means."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    space = LabelSpace(n_actions, n_latent, n_activities, dim, n_activities)
    # sticky, activity-specific chains
    trans = rng.dirichlet(np.ones(n_actions), size=(n_activities, n_actions))
    trans = 0.5 * trans + 0.5 * np.eye(n_actions)[None]
    means = rng.normal(scale=mean_scale, size=(n_actions, n_latent, dim))
    return SyntheticSpec(space, trans, means, noise, tuple(length_range), n_sequences, 4, seed)


def synth_generate(spec: SyntheticSpec) -> DatasetFile:
    spec.validate()
    sp = spec.space
    rng = np.random.default_rng(spec.seed)
    trans = np.asarray(spec.transitions, dtype=np.float64)
    means = np.asarray(spec.means, dtype=np.float64)
    subjects = [f"s{i}" for i in range(spec.n_subjects)]
    lo, hi = spec.length_range
    records = []
    for n in range(spec.n_sequences):
        a = int(rng.integers(sp.n_activities))
        k = int(rng.integers(lo, hi + 1))
        y = np.empty(k, dtype=np.int64)
        y[0] = rng.integers(sp.n_actions)
        for i in range(1, k):
            y[i] = rng.choice(sp.n_actions, p=trans[a, y[i - 1]])
        z = rng.integers(sp.n_latent, size=k)
        x = means[y, z] + spec.noise * rng.normal(size=(k, sp.dim_segment))
        x0 = np.eye(sp.n_activities)[a] + spec.noise * rng.normal(size=sp.n_activities)
        records.append(SegmentSequence(x, x0, y, a, subjects[n % spec.n_subjects], f"seq{n:05d}"))
    return DatasetFile(sp, records, subjects=subjects)


# ---------------------------------------------------------------- model container

@dataclass
class Model:
    space: LabelSpace
    weights: WeightPack
    standardizer: Optional[Standardizer] = None
    action_names: list = field(default_factory=list)
    activity_names: list = field(default_factory=list)
    hyperparams: dict = field(default_factory=dict)

    def prepare(self, seqs):
        """Apply the stored standardizer (if any) to raw sequences."""
        seqs = _records(seqs)
        if self.standardizer is None:
            return list(seqs)
        return [self.standardizer.transform(s) for s in seqs]


def save_model(model: Model, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "space": model.space.to_dict(),
        "weights": flatten(model.weights).tolist(),
        "standardizer": None if model.standardizer is None else model.standardizer.to_dict(),
        "action_names": list(model.action_names),
        "activity_names": list(model.activity_names),
        "hyperparams": dict(model.hyperparams),
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_model(path) -> Model:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.colno, exc.msg) from None
    _check_header(path, 1, doc, MODEL_FORMAT)
    space = LabelSpace.from_dict(doc["space"])
    std = doc.get("standardizer")
    return Model(space, unflatten(np.asarray(doc["weights"]), space),
                 None if std is None else Standardizer.from_dict(std),
                 doc.get("action_names", []), doc.get("activity_names", []),
                 doc.get("hyperparams", {}))
