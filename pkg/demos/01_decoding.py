"""Decoding a sequence with hand-set weights, and checking it by enumeration.

Run: python demos/01_decoding.py
"""
import numpy as np

from hiact import JointAssignment, LabelSpace, SegmentSequence, WeightPack
from hiact.inference import brute_force_decode, complete_latent, decode, dp_table
from hiact.potentials import joint_score

# Two actions, two latent sub-types each, two activities, 2-D segment features.
space = LabelSpace(n_actions=2, n_latent=2, n_activities=2, dim_segment=2, dim_global=1)
w = WeightPack.zeros(space)

# Action 0 likes feature 0, action 1 likes feature 1. The latent state splits
# each action by sign.
w.w1[0, 0] = [2.0, 0.0]
w.w1[0, 1] = [-2.0, 0.0]
w.w1[1, 0] = [0.0, 2.0]
w.w1[1, 1] = [0.0, -2.0]
# Activity 1 prefers switching 0 -> 1; activity 0 prefers staying put.
w.w4[0, 0, 0] = w.w4[1, 1, 0] = 0.5
w.w4[0, 1, 1] = 1.0
w.w5[1] = [0.2]

seq = SegmentSequence(
    segments=np.array([[1.0, 0.1], [0.9, -0.2], [0.1, 1.2], [0.0, -1.1]]),
    global_features=np.array([1.0]),
)

best = decode(w, seq)
print("activity:", best.activity)
print("actions: ", best.actions.tolist())
print("latents: ", best.latents.tolist())
print("score:   ", round(best.score, 6))

# The decoder is exact: enumerating every labeling gives the same answer.
oracle = brute_force_decode(w, seq)
assert oracle.activity == best.activity
assert np.array_equal(oracle.actions, best.actions)
assert np.array_equal(oracle.latents, best.latents)
print("matches exhaustive search over",
      space.n_activities * (space.n_states ** len(seq)), "labelings")

# The reported score is the model score of the returned labeling.
assert np.isclose(joint_score(w, seq, best), best.score)

# The DP table keeps one column per activity, segment and joint state.
table = dp_table(w, seq)
print("dp table shape (A, K, y, z):", table.values.shape)

# With the actions and activity fixed, only the latent path is inferred.
z, score = complete_latent(w, seq, [0, 0, 0, 0], 0)
print("latents when everything is forced to action 0:", z.tolist(), round(score, 6))
assert np.isclose(score, joint_score(w, seq, JointAssignment(0, [0, 0, 0, 0], z)))
