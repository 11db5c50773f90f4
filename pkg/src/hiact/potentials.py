"""The five potentials, the total score and the joint feature map.

The score of a joint labeling ``(A, y, z)`` of one sequence is::

    sum_k  w1[y_k, z_k] . x_k + w2[y_k, z_k]
  + sum_{k>=2}  w3[y_{k-1}, z_{k-1}, y_k, z_k] + w4[y_{k-1}, y_k, A]
  + w5[A] . x0

and it is linear in the weights: ``joint_score == flatten(w) @ joint_feature_map``.
"""
from __future__ import annotations

import numpy as np

from .core import (
    JointAssignment,
    LabelSpace,
    SegmentSequence,
    WeightPack,
    check_assignment,
)


def score_node(w: WeightPack, x_k, y: int, z: int) -> float:
    return float(np.dot(w.w1[y, z], x_k) + w.w2[y, z])


def score_transition(w: WeightPack, y_prev: int, z_prev: int, y: int, z: int, a: int) -> float:
    return float(w.w3[y_prev, z_prev, y, z] + w.w4[y_prev, y, a])


def score_global(w: WeightPack, x0, a: int) -> float:
    return float(np.dot(w.w5[a], x0))


def joint_score(w: WeightPack, seq: SegmentSequence, asg: JointAssignment) -> float:
    check_assignment(asg, seq, w.space)
    y, z, a = asg.actions, asg.latents, asg.activity
    total = 0.0
    for k in range(len(seq)):
        total += score_node(w, seq.segments[k], y[k], z[k])
    for k in range(1, len(seq)):
        total += score_transition(w, y[k - 1], z[k - 1], y[k], z[k], a)
    return total + score_global(w, seq.global_features, a)


def joint_feature_map(seq: SegmentSequence, asg: JointAssignment, space: LabelSpace) -> np.ndarray:
    """Return Psi with ``flatten(w) @ Psi == joint_score(w, seq, asg)`` for every w."""
    check_assignment(asg, seq, space)
    ny, nz, na = space.n_actions, space.n_latent, space.n_activities
    d, d0 = space.dim_segment, space.dim_global
    y, z, a = asg.actions, asg.latents, asg.activity
    s = y * nz + z

    psi1 = np.zeros((ny * nz, d))
    np.add.at(psi1, s, seq.segments)
    psi2 = np.bincount(s, minlength=ny * nz).astype(np.float64)
    psi3 = np.zeros((ny * nz, ny * nz))
    np.add.at(psi3, (s[:-1], s[1:]), 1.0)
    psi4 = np.zeros((ny, ny, na))
    np.add.at(psi4, (y[:-1], y[1:], a), 1.0)
    psi5 = np.zeros((na, d0))
    psi5[a] = seq.global_features
    return np.concatenate([psi1.ravel(), psi2, psi3.ravel(), psi4.ravel(), psi5.ravel()])


def node_scores(w: WeightPack, segments: np.ndarray) -> np.ndarray:
    """Node score of every segment in every joint state, shape ``[K, N_y*N_z]``."""
    ny, nz, d = w.w1.shape
    return segments @ w.w1.reshape(ny * nz, d).T + w.w2.reshape(-1)


def transition_scores(w: WeightPack) -> np.ndarray:
    """``T[a, s_prev, s] = w3[s_prev, s] + w4[y_prev, y, a]``, shape ``[N_A, S, S]``."""
    ny, nz = w.w2.shape
    s = ny * nz
    w3 = w.w3.reshape(s, s)
    # w4[y', y, a] expanded over the latent axes of both endpoints
    w4 = np.repeat(np.repeat(w.w4, nz, axis=0), nz, axis=1)
    return w3[None, :, :] + np.moveaxis(w4, 2, 0)


def global_scores(w: WeightPack, x0: np.ndarray) -> np.ndarray:
    return w.w5 @ x0
