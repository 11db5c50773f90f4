import numpy as np
import pytest

from hiact.core import LabelSpace, SegmentSequence, WeightPack
from hiact.data import (
    apply_standardizer,
    default_synthetic_spec,
    fit_standardizer,
    synth_generate,
)

ACCEPTANCE_RESULTS = []


def random_instance(rng, max_k=5, max_ny=3, max_nz=2, max_na=2, max_d=4, integer=False,
                    k_choices=None):
    """Random (weights, labeled sequence) pair on a small label space.

    With ``integer=True`` all weights and features are small integers, so
    exact ties are common and every score is computed without rounding.
    """
    space = LabelSpace(int(rng.integers(1, max_ny + 1)), int(rng.integers(1, max_nz + 1)),
                       int(rng.integers(1, max_na + 1)), int(rng.integers(1, max_d + 1)),
                       int(rng.integers(1, max_d + 1)))
    k = int(rng.choice(k_choices)) if k_choices else int(rng.integers(1, max_k + 1))
    if integer:
        w = WeightPack.zeros(space)
        w = type(w)(*(rng.integers(-2, 3, size=b.shape).astype(float)
                      for b in (w.w1, w.w2, w.w3, w.w4, w.w5)))
        x = rng.integers(-2, 3, size=(k, space.dim_segment)).astype(float)
        x0 = rng.integers(-2, 3, size=space.dim_global).astype(float)
    else:
        w = WeightPack.random(space, rng)
        x = rng.normal(size=(k, space.dim_segment))
        x0 = rng.normal(size=space.dim_global)
    seq = SegmentSequence(x, x0, rng.integers(space.n_actions, size=k),
                          int(rng.integers(space.n_activities)), "s0", "r")
    return space, w, seq


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synthetic():
    return synth_generate(default_synthetic_spec())


@pytest.fixture(scope="session")
def synthetic_split(synthetic):
    """Default synthetic data standardized on subjects s0-s2; s3 held out."""
    train = [r for r in synthetic.records if r.subject != "s3"]
    test = [r for r in synthetic.records if r.subject == "s3"]
    std = fit_standardizer(train)
    return synthetic.space, apply_standardizer(std, train), apply_standardizer(std, test)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for name, ok, detail in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
