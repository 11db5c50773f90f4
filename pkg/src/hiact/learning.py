"""Latent max-margin training.

The training objective over n labeled sequences is the margin-rescaled latent
surrogate

    J(w) = 1/2 |w|^2 + C/n * sum_i [ max_{A,y,z} (loss_i(A, y) + F_i(A, y, z))
                                     - max_z F_i(A_i, y_i, z) ]

It is a convex function minus a convex function, minimized by CCCP: fix the
latents at their gold-constrained argmax (``complete_latent``), then solve the
resulting convex structured SVM with the 1-slack cutting-plane method. The
working-set QP is solved in the dual by pairwise coordinate ascent.

``C`` multiplies the *mean* hinge, so the 1-slack problem is
``min 1/2 |w|^2 + C * xi`` with a single shared slack.
"""
from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    HiactError,
    Hyperparams,
    JointAssignment,
    LabelSpace,
    LengthMismatch,
    SegmentSequence,
    WeightPack,
    flatten,
    unflatten,
    validate_sequence,
)
from .inference import complete_latent, decode_loss_augmented
from .latent_init import initialize
from .potentials import joint_feature_map, node_scores, transition_scores

log = logging.getLogger(__name__)

QP_TOL = 1e-6
QP_MAX_SWEEPS = 10_000


class EmptyDataset(HiactError, ValueError):
    pass


class MissingLabels(HiactError, ValueError):
    pass


class QpFailure(HiactError, RuntimeError):
    pass


class NumericalInstability(HiactError, FloatingPointError):
    pass


def _dot(a, b) -> float:
    # exactly rounded, hence independent of the order of the coordinates
    return math.fsum(np.multiply(a, b).tolist())


def _gram(rows: np.ndarray) -> np.ndarray:
    m = len(rows)
    g = np.empty((m, m))
    for i in range(m):
        for j in range(i + 1):
            g[i, j] = g[j, i] = _dot(rows[i], rows[j])
    return g


def loss_delta(gold_actions, pred_actions, gold_activity: int, pred_activity: int,
               lambda_loss: float) -> float:
    """lambda * [activity wrong] + fraction of wrongly labeled segments."""
    gold = np.asarray(gold_actions)
    pred = np.asarray(pred_actions)
    if gold.shape != pred.shape:
        raise LengthMismatch(f"gold has {gold.shape} actions, prediction {pred.shape}")
    if gold.size == 0:
        raise LengthMismatch("empty action sequence")
    return float(lambda_loss * (gold_activity != pred_activity) + np.mean(gold != pred))


@dataclass
class ConstraintSet:
    """Working set of the 1-slack problem.

    Row r demands ``w @ dpsi[r] >= losses[r] - xi``. Rows are averages over the
    training set of ``Psi(gold, z*) - Psi(violator)``. The mean violator feature
    vector is kept so the rows can be re-based when the latents change.
    """

    dim: int
    dpsi: np.ndarray = None
    losses: np.ndarray = None
    duals: np.ndarray = None
    violator_psi: np.ndarray = None
    _gram: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.dpsi is None:
            self.dpsi = np.zeros((0, self.dim))
            self.losses = np.zeros(0)
            self.duals = np.zeros(0)
            self.violator_psi = np.zeros((0, self.dim))

    def __len__(self) -> int:
        return len(self.losses)

    def add(self, dpsi, loss: float, violator_psi=None) -> None:
        dpsi = np.asarray(dpsi, dtype=np.float64)
        if loss < 0:
            raise ValueError("constraint loss must be >= 0")
        if violator_psi is None:
            violator_psi = np.full(self.dim, np.nan)
        if self._gram is not None:
            cross = [_dot(row, dpsi) for row in self.dpsi]
            g = np.empty((len(self) + 1, len(self) + 1))
            g[:-1, :-1] = self._gram
            g[-1, :-1] = g[:-1, -1] = cross
            g[-1, -1] = _dot(dpsi, dpsi)
            self._gram = g
        self.dpsi = np.vstack([self.dpsi, dpsi])
        self.losses = np.append(self.losses, float(loss))
        self.duals = np.append(self.duals, 0.0)
        self.violator_psi = np.vstack([self.violator_psi, violator_psi])

    def rebase(self, gold_psi_mean: np.ndarray) -> None:
        """Recompute every row for new gold feature vectors (latents changed)."""
        if np.isnan(self.violator_psi).any():
            raise ValueError("rows added without violator features cannot be rebased")
        self.dpsi = gold_psi_mean[None, :] - self.violator_psi
        self._gram = None

    @property
    def gram(self) -> np.ndarray:
        if self._gram is None:
            self._gram = _gram(self.dpsi)
        return self._gram


def qp_solve(cs: ConstraintSet, c_reg: float, tol: float = QP_TOL,
             max_sweeps: int = QP_MAX_SWEEPS,
             callback: Optional[Callable[[np.ndarray], None]] = None):
    """Solve ``min 1/2|w|^2 + C xi  s.t.  w @ dpsi_r >= loss_r - xi, xi >= 0``.

    Works on the dual ``max sum_r a_r loss_r - 1/2 |sum_r a_r dpsi_r|^2`` with
    ``a >= 0, sum(a) <= C``. An extra variable ``a_0 = C - sum(a)`` (a zero row)
    turns the feasible set into a scaled simplex, on which each step moves mass
    between the pair with the largest KKT violation. Stops when that violation
    is at most ``tol``. Updates ``cs.duals`` in place; returns ``(w, xi)``.
    """
    m = len(cs)
    if m == 0:
        raise ValueError("empty constraint set")
    g = np.zeros((m + 1, m + 1))
    g[1:, 1:] = cs.gram
    lin = np.concatenate([[0.0], cs.losses])
    a = np.empty(m + 1)
    a[1:] = np.clip(cs.duals, 0.0, None)
    if a[1:].sum() > c_reg:
        a[1:] *= c_reg / a[1:].sum()
    a[0] = max(c_reg - a[1:].sum(), 0.0)
    if not np.all(np.isfinite(g)) or not np.all(np.isfinite(lin)):
        raise NumericalInstability("non-finite entry in the constraint set")

    converged = False
    for _ in range(max_sweeps):
        grad = lin - g @ a
        for _ in range(m + 1):
            i = int(grad.argmax())
            active = np.flatnonzero(a > 0)
            j = int(active[grad[active].argmin()])
            gap = grad[i] - grad[j]
            if gap <= tol:
                converged = True
                break
            curv = g[i, i] + g[j, j] - 2.0 * g[i, j]
            step = a[j] if curv <= 1e-15 else min(a[j], gap / curv)
            a[i] += step
            a[j] = 0.0 if step == a[j] else a[j] - step
            grad -= step * (g[:, i] - g[:, j])
        if not np.all(np.isfinite(a)):
            raise NumericalInstability("non-finite dual variable")
        cs.duals = a[1:].copy()
        if callback is not None:
            callback(cs.duals)
        if converged:
            break
    if not converged:
        log.warning("dual QP stopped after %d sweeps without reaching tol=%g", max_sweeps, tol)

    cs.duals = a[1:].copy()
    w = cs.duals @ cs.dpsi
    slack = max(0.0, max(l - _dot(row, w) for l, row in zip(cs.losses, cs.dpsi)))
    return w, slack


@dataclass
class SsvmResult:
    weights: WeightPack
    constraints: ConstraintSet
    slack: float
    iterations: int
    converged: bool
    # constraint losses and violations of the row found at each iteration
    row_losses: list = field(default_factory=list)
    violations: list = field(default_factory=list)


@dataclass
class TrainReport:
    cccp_objective_per_iter: list
    cp_iterations_per_cccp: list
    final_slack: float
    converged: bool
    wall_time: float
    stop_reason: str = ""
    n_cccp_iters: int = 0
    latents: list = field(default_factory=list)
    constraints: Optional[ConstraintSet] = None
    records: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "cccp_objective_per_iter": [float(v) for v in self.cccp_objective_per_iter],
            "cp_iterations_per_cccp": list(self.cp_iterations_per_cccp),
            "final_slack": float(self.final_slack),
            "converged": bool(self.converged),
            "stop_reason": self.stop_reason,
            "n_cccp_iters": self.n_cccp_iters,
            "wall_time": self.wall_time,
        }


def _check_dataset(dataset: Sequence[SegmentSequence], space: LabelSpace) -> None:
    if len(dataset) == 0:
        raise EmptyDataset("training set is empty")
    for seq in dataset:
        if not seq.labeled:
            raise MissingLabels(f"sequence {seq.id!r} lacks gold actions or activity")
        validate_sequence(seq, space)


def _assignment(seq, latents):
    return JointAssignment(seq.activity, seq.actions, latents)


def _gold_psi_mean(dataset, latents, space):
    return np.mean([joint_feature_map(s, _assignment(s, z), space)
                    for s, z in zip(dataset, latents)], axis=0)


def _most_violated(w: WeightPack, dataset, space, lambda_loss):
    """Mean violator feature vector, mean loss and per-example augmented maxima."""
    trans = transition_scores(w)
    psi = np.zeros(space.dim)
    losses = np.empty(len(dataset))
    aug = np.empty(len(dataset))
    for i, seq in enumerate(dataset):
        res = decode_loss_augmented(w, seq, seq.actions, seq.activity, lambda_loss,
                                    node=node_scores(w, seq.segments), trans=trans)
        psi += joint_feature_map(seq, res, space)
        losses[i] = loss_delta(seq.actions, res.actions, seq.activity, res.activity, lambda_loss)
        aug[i] = res.score
    return psi / len(dataset), float(losses.mean()), aug


def solve_structured_svm(dataset: Sequence[SegmentSequence], latents: Sequence, space: LabelSpace,
                         hp: Hyperparams, *, constraints: Optional[ConstraintSet] = None,
                         epsilon: Optional[float] = None,
                         records: Optional[list] = None) -> SsvmResult:
    """1-slack cutting plane with the latents held fixed.

    A warm ``constraints`` set from an earlier solve is re-based on the new
    gold feature vectors and reused.
    """
    eps = hp.epsilon_cp if epsilon is None else epsilon
    gold_mean = _gold_psi_mean(dataset, latents, space)
    if constraints is None:
        cs = ConstraintSet(space.dim)
    else:
        cs = copy.deepcopy(constraints)
        cs.rebase(gold_mean)
    if len(cs):
        w_vec, slack = qp_solve(cs, hp.c_reg)
    else:
        w_vec, slack = np.zeros(space.dim), 0.0

    row_losses, violations = [], []
    converged = False
    it = 0
    for it in range(1, hp.max_cp_iters + 1):
        t0 = time.perf_counter()
        w = unflatten(w_vec, space)
        viol_psi, row_loss, _ = _most_violated(w, dataset, space, hp.lambda_loss)
        dpsi = gold_mean - viol_psi
        violation = row_loss - _dot(w_vec, dpsi)
        row_losses.append(row_loss)
        violations.append(violation)
        done = violation <= slack + eps
        if not done:
            cs.add(dpsi, row_loss, viol_psi)
            w_vec, slack = qp_solve(cs, hp.c_reg)
        if records is not None:
            records.append({
                "kind": "cutting_plane", "iteration": it, "violation": violation,
                "loss": row_loss, "slack": slack, "n_rows": len(cs),
                "objective": 0.5 * _dot(w_vec, w_vec) + hp.c_reg * slack,
                "wall_time": time.perf_counter() - t0,
            })
        if done:
            converged = True
            break
    if not converged:
        log.warning("cutting plane hit max_cp_iters=%d", hp.max_cp_iters)
    return SsvmResult(unflatten(w_vec, space), cs, slack, it, converged, row_losses, violations)


def surrogate_objective(w: WeightPack, dataset: Sequence[SegmentSequence], space: LabelSpace,
                        hp: Hyperparams, latents: Optional[Sequence] = None):
    """J(w); with ``latents`` given, the CCCP upper bound that fixes them instead.

    Returns ``(value, completed_latents)``; the latents are the argmax
    completions (or the given ones).
    """
    _, _, aug = _most_violated(w, dataset, space, hp.lambda_loss)
    gold = np.empty(len(dataset))
    out_latents = []
    for i, seq in enumerate(dataset):
        if latents is None:
            z, score = complete_latent(w, seq, seq.actions, seq.activity)
        else:
            z = np.asarray(latents[i])
            score = _dot(flatten(w), joint_feature_map(seq, _assignment(seq, z), space))
        gold[i] = score
        out_latents.append(z)
    v = flatten(w)
    value = 0.5 * _dot(v, v) + hp.c_reg * float(np.mean(aug - gold))
    return value, out_latents


def train(dataset: Sequence[SegmentSequence], space: LabelSpace, hp: Hyperparams,
          categories=None, n_categories: Optional[int] = None,
          initial_latents: Optional[Sequence] = None):
    """CCCP training; returns ``(WeightPack, TrainReport)``.

    ``space.n_latent`` is replaced by ``hp.n_latent``. Each CCCP iteration
    starts with the latent step (the initializer on the first iteration) and
    ends with a structured-SVM solve. Stops when the latents stop changing,
    the objective's relative decrease drops below ``hp.cccp_rel_tol``, or after
    ``hp.max_cccp_iters`` iterations.
    """
    t_start = time.perf_counter()
    space = space.with_latent(hp.n_latent)
    _check_dataset(dataset, space)
    records: list = []

    if initial_latents is None:
        latents = initialize(hp.init_strategy, dataset, hp.n_latent, hp.rng_seed,
                             categories=categories, n_categories=n_categories)
    else:
        latents = [np.asarray(z, dtype=np.int64) for z in initial_latents]

    objectives: list = []
    cp_iters: list = []
    result: Optional[SsvmResult] = None
    constraints = None
    stop_reason = "max_cccp_iters"
    converged = False
    t = 0
    for t in range(1, hp.max_cccp_iters + 1):
        t0 = time.perf_counter()
        if result is not None:
            objective, new_latents = surrogate_objective(result.weights, dataset, space, hp)
            objectives.append(objective)
            changed = sum(int(np.sum(a != b)) for a, b in zip(latents, new_latents))
            records.append({"kind": "cccp", "iteration": t - 1, "objective": objective,
                            "latent_changes": changed, "slack": result.slack,
                            "cp_iterations": result.iterations,
                            "wall_time": time.perf_counter() - t0})
            if changed == 0:
                stop_reason, converged = "latents_unchanged", True
                break
            if len(objectives) >= 2:
                prev = objectives[-2]
                if (prev - objective) / max(abs(prev), 1e-12) < hp.cccp_rel_tol:
                    stop_reason, converged = "objective_converged", True
                    break
            latents = new_latents

        step = solve_structured_svm(dataset, latents, space, hp, constraints=constraints,
                                    records=records)
        if result is not None:
            # the new weights must not be worse than the old on the bound they share
            bound_old = objectives[-1]
            eps = hp.epsilon_cp
            bound_new, _ = surrogate_objective(step.weights, dataset, space, hp, latents)
            while bound_new > bound_old and eps > hp.epsilon_cp * 1e-3:
                eps /= 10.0
                step = solve_structured_svm(dataset, latents, space, hp,
                                            constraints=step.constraints, epsilon=eps,
                                            records=records)
                bound_new, _ = surrogate_objective(step.weights, dataset, space, hp, latents)
            if bound_new > bound_old:
                log.info("M-step did not improve the bound; keeping previous weights")
                stop_reason, converged = "no_improvement", True
                break
        result = step
        constraints = step.constraints
        cp_iters.append(step.iterations)
        used_latents = latents
    else:
        objective, _ = surrogate_objective(result.weights, dataset, space, hp)
        objectives.append(objective)
        records.append({"kind": "cccp", "iteration": t, "objective": objective,
                        "slack": result.slack, "cp_iterations": result.iterations,
                        "wall_time": time.perf_counter() - t0})

    report = TrainReport(
        cccp_objective_per_iter=objectives,
        cp_iterations_per_cccp=cp_iters,
        final_slack=result.slack,
        converged=converged,
        wall_time=time.perf_counter() - t_start,
        stop_reason=stop_reason,
        n_cccp_iters=t,
        latents=used_latents,
        constraints=result.constraints,
        records=records,
    )
    return result.weights, report
