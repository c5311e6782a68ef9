import numpy as np
import pytest

from albench.types import Candidate, Dataset, Goal


def make_pool(targets, features=None, goal=Goal.MAXIMIZE, name="pool", context=""):
    """Tiny pool from a target list; features default to 1-D ramp."""
    n = len(targets)
    if features is None:
        features = [(float(i),) for i in range(n)]
    candidates = [
        Candidate(id=i, features=tuple(float(v) for v in f), target=float(t))
        for i, (f, t) in enumerate(zip(features, targets))
    ]
    n_features = len(candidates[0].features)
    return Dataset(
        name=name,
        candidates=candidates,
        feature_names=[f"x{j + 1}" for j in range(n_features)],
        target_name="y",
        goal=goal,
        context=context,
    )


@pytest.fixture
def ramp_pool():
    return make_pool([1.0, 5.0, 3.0, 2.0, 4.0])


@pytest.fixture
def rng():
    return np.random.default_rng(0)
