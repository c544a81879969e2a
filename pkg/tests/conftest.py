import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))   # make oracles importable

from debias import (
    Observation,
    evaluate_bias_matrix,
    norm_ball,
    whole_space,
)


@pytest.fixture
def four_point_pooled():
    """The worked two-sample example: ball(1) stratum {0.5, -0.5},
    unrestricted stratum {0.2, 3.0}."""
    s0 = [Observation(np.array([0.5])), Observation(np.array([-0.5]))]
    s1 = [Observation(np.array([0.2])), Observation(np.array([3.0]))]
    return evaluate_bias_matrix([s0, s1], (norm_ball(1.0), whole_space()))


def random_stratified_pooled(rng, n1, n2, radius=1.0, dim=1):
    """Random instance of the two-sample stratified design: sample 1
    rejection-sampled into the ball, sample 2 unrestricted.  Always
    leaves at least one unrestricted point on each side of the boundary."""
    inside = []
    while len(inside) < n1:
        x = rng.standard_normal(dim)
        if np.linalg.norm(x) < radius:
            inside.append(Observation(x))
    while True:
        xs = rng.standard_normal((n2, dim))
        flags = np.linalg.norm(xs, axis=1) < radius
        if 0 < flags.sum() < n2:
            break
    s1 = [Observation(x) for x in xs]
    pooled = evaluate_bias_matrix([inside, s1],
                                  (norm_ball(radius), whole_space()))
    return pooled, int(flags.sum())
