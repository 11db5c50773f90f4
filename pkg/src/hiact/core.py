"""Domain types shared by every module: label spaces, sequences, weights.

All label ids are dense 0-based integers. A joint segment state ``(y, z)`` has
the linear index ``y * n_latent + z``; every table in the package that runs
over joint states uses that order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class HiactError(Exception):
    """Base class for every error raised by the package."""


class DimensionMismatch(HiactError, ValueError):
    def __init__(self, what: str, expected, actual):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected {expected}, got {actual}")


class LabelOutOfRange(HiactError, ValueError):
    pass


class NonFiniteValue(HiactError, ValueError):
    pass


class LengthMismatch(HiactError, ValueError):
    pass


class InvalidHyperparams(HiactError, ValueError):
    pass


@dataclass(frozen=True)
class LabelSpace:
    n_actions: int
    n_latent: int
    n_activities: int
    dim_segment: int
    dim_global: int

    def __post_init__(self):
        for name in ("n_actions", "n_latent", "n_activities", "dim_segment", "dim_global"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @property
    def n_states(self) -> int:
        """Number of joint (action, latent) segment states."""
        return self.n_actions * self.n_latent

    @property
    def block_sizes(self) -> tuple[int, int, int, int, int]:
        ny, nz, na = self.n_actions, self.n_latent, self.n_activities
        return (
            ny * nz * self.dim_segment,
            ny * nz,
            (ny * nz) ** 2,
            ny * ny * na,
            na * self.dim_global,
        )

    @property
    def dim(self) -> int:
        """Length of the flattened parameter vector."""
        return sum(self.block_sizes)

    def block_slices(self) -> tuple[slice, ...]:
        out = []
        start = 0
        for size in self.block_sizes:
            out.append(slice(start, start + size))
            start += size
        return tuple(out)

    def with_latent(self, n_latent: int) -> "LabelSpace":
        return LabelSpace(self.n_actions, n_latent, self.n_activities,
                          self.dim_segment, self.dim_global)

    def to_dict(self) -> dict:
        return {
            "n_actions": self.n_actions,
            "n_latent": self.n_latent,
            "n_activities": self.n_activities,
            "dim_segment": self.dim_segment,
            "dim_global": self.dim_global,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabelSpace":
        return cls(int(d["n_actions"]), int(d["n_latent"]), int(d["n_activities"]),
                   int(d["dim_segment"]), int(d["dim_global"]))


@dataclass(eq=False)
class SegmentSequence:
    """One video: K segment feature vectors plus one global feature vector."""

    segments: np.ndarray
    global_features: np.ndarray
    actions: Optional[np.ndarray] = None
    activity: Optional[int] = None
    subject: str = ""
    id: str = ""

    def __post_init__(self):
        self.segments = np.atleast_2d(np.asarray(self.segments, dtype=np.float64))
        self.global_features = np.atleast_1d(np.asarray(self.global_features, dtype=np.float64))
        if self.actions is not None:
            self.actions = np.asarray(self.actions, dtype=np.int64)
        if self.activity is not None:
            self.activity = int(self.activity)

    def __len__(self) -> int:
        return self.segments.shape[0]

    @property
    def labeled(self) -> bool:
        return self.actions is not None and self.activity is not None

    def __eq__(self, other) -> bool:
        if not isinstance(other, SegmentSequence):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(a, b)

        return (
            self.id == other.id
            and self.subject == other.subject
            and self.activity == other.activity
            and same(self.actions, other.actions)
            and self.segments.shape == other.segments.shape
            and np.array_equal(self.segments, other.segments)
            and np.array_equal(self.global_features, other.global_features)
        )


def validate_sequence(seq: SegmentSequence, space: LabelSpace) -> None:
    """Raise if ``seq`` violates any invariant against ``space``; return None if ok."""
    segs = seq.segments
    if segs.ndim != 2 or segs.shape[0] < 1:
        raise DimensionMismatch(f"{seq.id}: segments", "K >= 1 rows", segs.shape)
    if segs.shape[1] != space.dim_segment:
        raise DimensionMismatch(f"{seq.id}: segment dimension", space.dim_segment, segs.shape[1])
    if seq.global_features.shape != (space.dim_global,):
        raise DimensionMismatch(f"{seq.id}: global dimension", space.dim_global,
                                seq.global_features.shape[0])
    if not np.all(np.isfinite(segs)):
        raise NonFiniteValue(f"{seq.id}: non-finite value in segments")
    if not np.all(np.isfinite(seq.global_features)):
        raise NonFiniteValue(f"{seq.id}: non-finite value in global features")
    if seq.actions is not None:
        if seq.actions.shape != (segs.shape[0],):
            raise DimensionMismatch(f"{seq.id}: actions length", segs.shape[0], seq.actions.shape)
        check_labels(seq.actions, space.n_actions, f"{seq.id}: action")
    if seq.activity is not None:
        check_labels([seq.activity], space.n_activities, f"{seq.id}: activity")


def check_labels(labels, n: int, what: str = "label") -> None:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        bad = labels[(labels < 0) | (labels >= n)][0]
        raise LabelOutOfRange(f"{what} id {int(bad)} outside [0, {n})")


@dataclass(frozen=True, eq=False)
class WeightPack:
    """The five parameter blocks.

    Shapes: ``w1[y, z, d]``, ``w2[y, z]``, ``w3[y', z', y, z]``, ``w4[y', y, a]``,
    ``w5[a, d0]``. :func:`flatten` concatenates them in that order, each in
    C (row-major) order.
    """

    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    w4: np.ndarray
    w5: np.ndarray

    @property
    def space(self) -> LabelSpace:
        ny, nz, d = self.w1.shape
        na, d0 = self.w5.shape
        return LabelSpace(ny, nz, na, d, d0)

    @classmethod
    def zeros(cls, space: LabelSpace) -> "WeightPack":
        return unflatten(np.zeros(space.dim), space)

    @classmethod
    def random(cls, space: LabelSpace, rng: np.random.Generator, scale: float = 1.0) -> "WeightPack":
        return unflatten(rng.normal(scale=scale, size=space.dim), space)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightPack):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("w1", "w2", "w3", "w4", "w5"))


def flatten(weights: WeightPack) -> np.ndarray:
    return np.concatenate([np.ravel(b) for b in
                           (weights.w1, weights.w2, weights.w3, weights.w4, weights.w5)])


def unflatten(v, space: LabelSpace) -> WeightPack:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != space.dim:
        raise DimensionMismatch("weight vector length", space.dim, v.shape)
    ny, nz, na = space.n_actions, space.n_latent, space.n_activities
    s1, s2, s3, s4, s5 = space.block_slices()
    return WeightPack(
        w1=v[s1].reshape(ny, nz, space.dim_segment).copy(),
        w2=v[s2].reshape(ny, nz).copy(),
        w3=v[s3].reshape(ny, nz, ny, nz).copy(),
        w4=v[s4].reshape(ny, ny, na).copy(),
        w5=v[s5].reshape(na, space.dim_global).copy(),
    )


INIT_STRATEGIES = ("random", "kmeans_features", "kmeans_categorical")


@dataclass(frozen=True)
class Hyperparams:
    c_reg: float = 1.0
    lambda_loss: float = 1.0
    n_latent: int = 2
    epsilon_cp: float = 0.01
    max_cccp_iters: int = 20
    max_cp_iters: int = 500
    init_strategy: str = "kmeans_features"
    rng_seed: int = 0
    cccp_rel_tol: float = 1e-4

    def __post_init__(self):
        if not (self.c_reg > 0 and np.isfinite(self.c_reg)):
            raise InvalidHyperparams(f"c_reg must be > 0, got {self.c_reg}")
        if not 0.0 <= self.lambda_loss <= 1.0:
            raise InvalidHyperparams(f"lambda_loss must lie in [0, 1], got {self.lambda_loss}")
        if not self.epsilon_cp > 0:
            raise InvalidHyperparams(f"epsilon_cp must be > 0, got {self.epsilon_cp}")
        for name in ("n_latent", "max_cccp_iters", "max_cp_iters"):
            if int(getattr(self, name)) < 1:
                raise InvalidHyperparams(f"{name} must be >= 1")
        if self.init_strategy not in INIT_STRATEGIES:
            raise InvalidHyperparams(
                f"init_strategy must be one of {INIT_STRATEGIES}, got {self.init_strategy!r}")
        if int(self.rng_seed) < 0:
            raise InvalidHyperparams("rng_seed must be unsigned")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass(eq=False)
class JointAssignment:
    activity: int
    actions: np.ndarray
    latents: np.ndarray

    def __post_init__(self):
        self.activity = int(self.activity)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.latents = np.asarray(self.latents, dtype=np.int64)
        if self.actions.shape != self.latents.shape:
            raise LengthMismatch(
                f"actions ({self.actions.shape}) and latents ({self.latents.shape}) differ")

    def __eq__(self, other) -> bool:
        if not isinstance(other, JointAssignment):
            return NotImplemented
        return (self.activity == other.activity
                and np.array_equal(self.actions, other.actions)
                and np.array_equal(self.latents, other.latents))


@dataclass(eq=False)
class DecodeResult(JointAssignment):
    score: float = 0.0

    def as_assignment(self) -> JointAssignment:
        return JointAssignment(self.activity, self.actions, self.latents)

    def to_dict(self) -> dict:
        return {
            "activity": self.activity,
            "actions": self.actions.tolist(),
            "latents": self.latents.tolist(),
            "score": float(self.score),
        }


def check_assignment(asg: JointAssignment, seq: SegmentSequence, space: LabelSpace) -> None:
    k = len(seq)
    if asg.actions.shape != (k,):
        raise DimensionMismatch("assignment length", k, asg.actions.shape)
    check_labels(asg.actions, space.n_actions, "action")
    check_labels(asg.latents, space.n_latent, "latent")
    check_labels([asg.activity], space.n_activities, "activity")


def infer_space(seqs: Sequence[SegmentSequence], n_latent: int = 1,
                n_actions: Optional[int] = None, n_activities: Optional[int] = None) -> LabelSpace:
    """Build a LabelSpace from labeled sequences (cardinalities from the max ids)."""
    if not seqs:
        raise ValueError("cannot infer a label space from no sequences")
    if n_actions is None:
        n_actions = int(max(int(s.actions.max()) for s in seqs)) + 1
    if n_activities is None:
        n_activities = int(max(s.activity for s in seqs)) + 1
    return LabelSpace(n_actions, n_latent, n_activities,
                      seqs[0].segments.shape[1], seqs[0].global_features.shape[0])


__all__ = [
    "HiactError", "DimensionMismatch", "LabelOutOfRange", "NonFiniteValue",
    "LengthMismatch", "InvalidHyperparams", "LabelSpace", "SegmentSequence",
    "WeightPack", "Hyperparams", "JointAssignment", "DecodeResult",
    "validate_sequence", "check_labels", "check_assignment", "flatten", "unflatten",
    "infer_space", "INIT_STRATEGIES",
]
