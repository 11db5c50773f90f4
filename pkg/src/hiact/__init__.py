"""Joint activity / action / latent sub-action recognition on a collapsed linear chain."""
from .core import (
    DecodeResult,
    Hyperparams,
    JointAssignment,
    LabelSpace,
    SegmentSequence,
    WeightPack,
    flatten,
    unflatten,
    validate_sequence,
)
from .data import (
    DatasetFile,
    Model,
    SyntheticSpec,
    default_synthetic_spec,
    load,
    load_model,
    save,
    save_model,
    synth_generate,
)
from .evaluation import cross_validate, evaluate, fit_model, predict
from .inference import brute_force_decode, complete_latent, decode, decode_loss_augmented
from .learning import loss_delta, train
from .potentials import joint_feature_map, joint_score

__version__ = "0.1.0"
