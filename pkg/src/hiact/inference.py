"""Exact max-decoding on the collapsed (activity, action, latent) chain.

Collapsing ``(A, y_k, z_k)`` into one node turns the model into a linear chain.
The activity never changes along a sequence, so the chain is swept once per
activity over the ``S = N_y * N_z`` joint segment states and the activities
compete only at the final step, where the global potential is added. Cost is
``O(N_A * S^2 * K)``.

Tie rule, shared by every decoder and by the brute-force oracle: prefer the
smaller activity, then the smaller final joint state, then, walking backwards,
the smaller predecessor state. Joint states are ordered by ``y * N_z + z``.
Loss-augmented decoding ranks the gold activity ahead of all others, so that
a tie never manufactures an activity violation; this keeps training
equivariant under relabeling of the activities.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    DecodeResult,
    HiactError,
    SegmentSequence,
    WeightPack,
    check_labels,
    validate_sequence,
)
from .potentials import global_scores, node_scores, transition_scores

BRUTE_FORCE_CAP = 2_000_000


class InstanceTooLarge(HiactError, ValueError):
    pass


@dataclass
class DpTable:
    """Max-sum table ``values[a, k, y, z]`` and the argmax predecessor state index.

    ``backptr[:, 0]`` holds the sentinel -1.
    """

    values: np.ndarray
    backptr: np.ndarray


def _forward(node: np.ndarray, trans: np.ndarray):
    """Max-sum sweep. node: [K, S]; trans: [N_A, S, S] (or [K, N_A, S, S])."""
    k_len, s = node.shape
    n_a = trans.shape[-3]
    values = np.empty((n_a, k_len, s))
    backptr = np.full((n_a, k_len, s), -1, dtype=np.int64)
    values[:, 0] = node[0]
    per_step = trans.ndim == 4
    for k in range(1, k_len):
        t = trans[k] if per_step else trans
        cand = t + values[:, k - 1, :, None]
        backptr[:, k] = cand.argmax(axis=1)
        values[:, k] = cand.max(axis=1) + node[k]
    return values, backptr


def _activity_order(n_a, first):
    if first is None:
        return np.arange(n_a)
    return np.concatenate([[first], np.delete(np.arange(n_a), first)])


def _finish(values, backptr, final, first=None):
    n_a, k_len, s = values.shape
    total = values[:, -1, :] + final[:, None]
    order = _activity_order(n_a, first)
    i, last = divmod(int(total[order].argmax()), s)
    a = int(order[i])
    states = np.empty(k_len, dtype=np.int64)
    states[-1] = last
    for k in range(k_len - 1, 0, -1):
        states[k - 1] = backptr[a, k, states[k]]
    return a, states, float(total[a, last])


def _result(a, states, score, n_latent) -> DecodeResult:
    return DecodeResult(activity=a, actions=states // n_latent, latents=states % n_latent,
                        score=score)


def dp_table(w: WeightPack, seq: SegmentSequence) -> DpTable:
    space = w.space
    values, backptr = _forward(node_scores(w, seq.segments), transition_scores(w))
    shape = values.shape[:2] + (space.n_actions, space.n_latent)
    return DpTable(values.reshape(shape), backptr.reshape(shape))


def decode(w: WeightPack, seq: SegmentSequence) -> DecodeResult:
    """Highest-scoring ``(A, y, z)`` for ``seq``."""
    validate_sequence(seq, w.space)
    values, backptr = _forward(node_scores(w, seq.segments), transition_scores(w))
    a, states, score = _finish(values, backptr, global_scores(w, seq.global_features))
    return _result(a, states, score, w.space.n_latent)


def _loss_terms(space, gold_actions, gold_activity, lambda_loss, k_len):
    gold_actions = np.asarray(gold_actions, dtype=np.int64)
    if gold_actions.shape != (k_len,):
        from .core import DimensionMismatch
        raise DimensionMismatch("gold actions length", k_len, gold_actions.shape)
    check_labels(gold_actions, space.n_actions, "gold action")
    check_labels([gold_activity], space.n_activities, "gold activity")
    state_action = np.arange(space.n_states) // space.n_latent
    node_loss = (state_action[None, :] != gold_actions[:, None]) / k_len
    final_loss = lambda_loss * (np.arange(space.n_activities) != gold_activity)
    return node_loss, final_loss


def decode_loss_augmented(w: WeightPack, seq: SegmentSequence, gold_actions, gold_activity: int,
                          lambda_loss: float, *, node: Optional[np.ndarray] = None,
                          trans: Optional[np.ndarray] = None) -> DecodeResult:
    """argmax of loss + score; the returned score includes the loss.

    ``node`` and ``trans`` may be passed precomputed (as from
    :func:`node_scores` / :func:`transition_scores`) to skip recomputation.
    """
    space = w.space
    k_len = len(seq)
    node_loss, final_loss = _loss_terms(space, gold_actions, gold_activity, lambda_loss, k_len)
    if node is None:
        validate_sequence(seq, space)
        node = node_scores(w, seq.segments)
    if trans is None:
        trans = transition_scores(w)
    values, backptr = _forward(node + node_loss, trans)
    a, states, score = _finish(values, backptr,
                               global_scores(w, seq.global_features) + final_loss,
                               first=int(gold_activity))
    return _result(a, states, score, space.n_latent)


def complete_latent(w: WeightPack, seq: SegmentSequence, gold_actions, gold_activity: int):
    """Best latent path with actions and activity clamped to the gold labels.

    Returns ``(latents, score)`` where score is the full joint score.
    """
    space = w.space
    validate_sequence(seq, space)
    y = np.asarray(gold_actions, dtype=np.int64)
    if y.shape != (len(seq),):
        from .core import DimensionMismatch
        raise DimensionMismatch("gold actions length", len(seq), y.shape)
    check_labels(y, space.n_actions, "gold action")
    check_labels([gold_activity], space.n_activities, "gold activity")

    node = np.einsum("kzd,kd->kz", w.w1[y], seq.segments) + w.w2[y]
    # per-step [N_z, N_z] transition with the w4 constant folded in
    trans = w.w3[y[:-1], :, y[1:], :] + w.w4[y[:-1], y[1:], gold_activity][:, None, None]
    trans = np.concatenate([np.zeros((1,) + trans.shape[1:]), trans])[:, None]
    values, backptr = _forward(node, trans)
    final = np.array([float(w.w5[gold_activity] @ seq.global_features)])
    _, latents, score = _finish(values, backptr, final)
    return latents, score


def brute_force_decode(w: WeightPack, seq: SegmentSequence, loss: Optional[tuple] = None,
                       clamp: Optional[tuple] = None, cap: int = BRUTE_FORCE_CAP) -> DecodeResult:
    """Exhaustive argmax, evaluating the score formula term by term on every labeling.

    loss: ``(gold_actions, gold_activity, lambda_loss)`` adds the training loss.
    clamp: ``(actions, activity)`` restricts the search to latent paths only.
    Follows the module tie rule. Test oracle; raises InstanceTooLarge above ``cap``.
    """
    space = w.space
    validate_sequence(seq, space)
    k_len = len(seq)
    ny, nz, na = space.n_actions, space.n_latent, space.n_activities
    if clamp is None:
        n_paths = space.n_states ** k_len
        activities = _activity_order(na, None if loss is None else int(loss[1]))
    else:
        n_paths, activities = nz ** k_len, [int(clamp[1])]
    if n_paths * len(activities) > cap:
        raise InstanceTooLarge(f"{n_paths * len(activities)} assignments exceed cap {cap}")

    radix = space.n_states if clamp is None else nz
    # rows enumerate (s_K, ..., s_1) lexicographically; reverse to get s_1..s_K
    paths = np.array(list(itertools.product(range(radix), repeat=k_len)), dtype=np.int64)
    paths = paths.reshape(-1, k_len)[:, ::-1]
    if clamp is None:
        ys, zs = paths // nz, paths % nz
    else:
        ys = np.broadcast_to(np.asarray(clamp[0], dtype=np.int64), paths.shape)
        zs = paths

    x = seq.segments
    emit = np.zeros(len(paths))
    for k in range(k_len):
        emit += w.w1[ys[:, k], zs[:, k]] @ x[k] + w.w2[ys[:, k], zs[:, k]]
    pair = np.zeros(len(paths))
    for k in range(1, k_len):
        pair += w.w3[ys[:, k - 1], zs[:, k - 1], ys[:, k], zs[:, k]]
    if loss is not None:
        gold_y, gold_a, lam = np.asarray(loss[0]), int(loss[1]), float(loss[2])
        emit = emit + (ys != gold_y[None, :]).sum(axis=1) / k_len

    best = None
    for a in map(int, activities):
        tot = emit + pair
        for k in range(1, k_len):
            tot = tot + w.w4[ys[:, k - 1], ys[:, k], a]
        tot = tot + w.w5[a] @ seq.global_features
        if loss is not None:
            tot = tot + lam * (a != gold_a)
        i = int(tot.argmax())
        if best is None or tot[i] > best[0]:
            best = (float(tot[i]), a, i)
    score, a, i = best
    return DecodeResult(activity=a, actions=ys[i].copy(), latents=zs[i].copy(), score=score)


def decode_all(w: WeightPack, seqs: Sequence[SegmentSequence]) -> list[DecodeResult]:
    return [decode(w, s) for s in seqs]
