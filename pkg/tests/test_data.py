import json

import numpy as np
import pytest

from hiact.core import Hyperparams, LabelSpace, SegmentSequence, WeightPack
from hiact.data import (
    DatasetFile,
    EmptySplit,
    InvalidSpec,
    Model,
    ParseError,
    SchemaVersionUnsupported,
    ValidationError,
    apply_standardizer,
    convert_feature_table,
    default_synthetic_spec,
    fit_standardizer,
    load,
    load_categories,
    load_model,
    pooled_global_features,
    save,
    save_categories,
    save_model,
    synth_generate,
    uniform_segmentation,
)


@pytest.fixture
def small():
    return synth_generate(default_synthetic_spec(seed=4, n_sequences=12))


def test_roundtrip_is_exact(tmp_path, small):
    p = tmp_path / "d.jsonl"
    save(small, p)
    back = load(p)
    assert back == small
    for a, b in zip(back.records, small.records):
        assert np.array_equal(a.segments, b.segments)


def test_roundtrip_unlabeled_and_empty(tmp_path, small):
    unl = small.subset([SegmentSequence(r.segments, r.global_features, subject=r.subject, id=r.id)
                        for r in small.records[:3]])
    save(unl, tmp_path / "u.jsonl")
    back = load(tmp_path / "u.jsonl")
    assert back == unl and back.records[0].actions is None
    empty = small.subset([])
    save(empty, tmp_path / "e.jsonl")
    assert len(load(tmp_path / "e.jsonl")) == 0


def test_dimension_mismatch_names_record(tmp_path, small):
    p = tmp_path / "d.jsonl"
    save(small, p)
    lines = p.read_text().splitlines()
    rec = json.loads(lines[3])
    rec["segments"] = [s[:-1] for s in rec["segments"]]
    lines[3] = json.dumps(rec)
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValidationError) as err:
        load(p)
    assert err.value.record_id == rec["id"]


def test_parse_error_position(tmp_path, small):
    p = tmp_path / "d.jsonl"
    save(small, p)
    lines = p.read_text().splitlines()
    lines[4] = lines[4][:20]
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as err:
        load(p)
    assert err.value.line == 5 and err.value.offset >= 1


def test_version_and_header_checks(tmp_path, small):
    p = tmp_path / "d.jsonl"
    save(small, p)
    lines = p.read_text().splitlines()
    head = json.loads(lines[0])
    head["version"] = 99
    p.write_text("\n".join([json.dumps(head)] + lines[1:]) + "\n")
    with pytest.raises(SchemaVersionUnsupported):
        load(p)
    p.write_text("")
    with pytest.raises(ParseError):
        load(p)


def test_standardizer_moments(small):
    std = fit_standardizer(small)
    out = apply_standardizer(std, small)
    segs = np.concatenate([r.segments for r in out.records])
    glob = np.stack([r.global_features for r in out.records])
    for m in (segs, glob):
        assert np.abs(m.mean(0)).max() < 1e-9
        assert np.abs(m.var(0) - 1.0).max() < 1e-6
    back = std.inverse(out.records[0])
    assert np.allclose(back.segments, small.records[0].segments, atol=1e-12)


def test_standardizer_constant_dimension():
    recs = [SegmentSequence(np.column_stack([np.full(3, 7.0), np.arange(3.0) + i]), [1.0, float(i)])
            for i in range(4)]
    std = fit_standardizer(recs)
    out = apply_standardizer(std, recs)
    assert all(np.isfinite(r.segments).all() for r in out)
    assert all(not r.segments[:, 0].any() and r.global_features[0] == 0.0 for r in out)


def test_standardizer_empty_split():
    with pytest.raises(EmptySplit):
        fit_standardizer([])


def test_uniform_segmentation_counts():
    frames = np.arange(10.0)[:, None]
    segs = uniform_segmentation(frames, 5)
    assert segs.shape == (2, 1) and list(segs[:, 0]) == [2.0, 7.0]
    segs = uniform_segmentation(np.arange(11.0), 5)
    assert segs.shape == (3, 1) and segs[-1, 0] == 10.0
    assert (uniform_segmentation(np.full((7, 3), 2.5), 3) == 2.5).all()
    with pytest.raises(ValueError):
        uniform_segmentation(np.zeros((0, 2)), 3)


def test_pooled_global_features():
    x0 = pooled_global_features(np.array([[1.0, 2.0], [3.0, 4.0]]), k_max=8)
    assert list(x0) == [2.0, 3.0, 0.25]


def test_synth_is_seeded(small):
    again = synth_generate(default_synthetic_spec(seed=4, n_sequences=12))
    other = synth_generate(default_synthetic_spec(seed=5, n_sequences=12))
    assert again == small and other != small
    assert [r.id for r in small.records][:2] == ["seq00000", "seq00001"]
    assert small.subjects == ["s0", "s1", "s2", "s3"]


def test_synth_identity_transitions_hold_action():
    spec = default_synthetic_spec(seed=1, n_sequences=30)
    spec.transitions = np.broadcast_to(np.eye(4), spec.transitions.shape).copy()
    ds = synth_generate(spec)
    assert all(len(set(r.actions)) == 1 for r in ds.records)


def test_synth_zero_noise_is_nearest_mean_separable():
    spec = default_synthetic_spec(seed=2, n_sequences=40, noise=0.0)
    ds = synth_generate(spec)
    flat_means = spec.means.reshape(-1, spec.space.dim_segment)
    for r in ds.records:
        d = ((r.segments[:, None, :] - flat_means[None]) ** 2).sum(-1)
        nearest = d.argmin(1) // spec.space.n_latent
        assert np.array_equal(nearest, r.actions)
        assert np.argmax(r.global_features) == r.activity


def test_synth_label_marginals():
    n = 10_000
    spec = default_synthetic_spec(seed=3, n_sequences=n, length_range=(1, 1), dim=2)
    ds = synth_generate(spec)
    acts = np.bincount([r.activity for r in ds.records], minlength=3)
    first = np.bincount([r.actions[0] for r in ds.records], minlength=4)
    for counts, p in ((acts, 1 / 3), (first, 1 / 4)):
        sd = np.sqrt(n * p * (1 - p))
        assert (np.abs(counts - n * p) <= 3 * sd).all()


@pytest.mark.parametrize("mutate", [
    lambda s: setattr(s, "transitions", s.transitions * 2.0),
    lambda s: setattr(s, "transitions", s.transitions[:, :2]),
    lambda s: setattr(s, "noise", -1.0),
    lambda s: setattr(s, "length_range", (0, 3)),
    lambda s: setattr(s, "means", s.means[:, :, :3]),
])
def test_invalid_spec(mutate):
    spec = default_synthetic_spec()
    mutate(spec)
    with pytest.raises(InvalidSpec):
        synth_generate(spec)


def test_model_container_roundtrip(tmp_path, small):
    rng = np.random.default_rng(0)
    w = WeightPack.random(small.space, rng)
    model = Model(small.space, w, fit_standardizer(small), small.action_names,
                  small.activity_names, Hyperparams(c_reg=3.0).to_dict())
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.weights == w and back.space == small.space
    assert np.array_equal(back.standardizer.segment_std, model.standardizer.segment_std)
    assert Hyperparams.from_dict(back.hyperparams).c_reg == 3.0
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ParseError):
        load_model(tmp_path / "bad.json")


def test_category_file_roundtrip(tmp_path):
    labels = [np.array([0, 2]), np.array([1])]
    save_categories(labels, ["a", "b"], 3, tmp_path / "c.jsonl")
    got, n = load_categories(tmp_path / "c.jsonl")
    assert n == 3 and list(got["a"]) == [0, 2] and list(got["b"]) == [1]


def test_convert_feature_table(tmp_path):
    rows = ["video_id,subject,activity,segment,action,f0,f1",
            "v1,s1,cook,1,reach,1.0,2.0",
            "v1,s1,cook,0,move,3.0,4.0",
            "v2,s2,eat,0,reach,0.5,0.5"]
    (tmp_path / "t.csv").write_text("\n".join(rows) + "\n")
    ds = convert_feature_table(tmp_path / "t.csv")
    assert ds.space == LabelSpace(2, 1, 2, 2, 3)
    v1 = ds.records[0]
    assert v1.id == "v1" and list(v1.actions) == [0, 1]
    assert v1.segments[0].tolist() == [3.0, 4.0]
    assert v1.global_features.tolist() == [2.0, 3.0, 1.0]
    assert ds.records[1].global_features[-1] == 0.5
    (tmp_path / "bad.csv").write_text("video_id,subject\n")
    with pytest.raises(ParseError):
        convert_feature_table(tmp_path / "bad.csv")


def test_validate_unknown_subject(small):
    ds = DatasetFile(small.space, small.records[:2], subjects=["zz"])
    with pytest.raises(ValidationError):
        ds.validate()
