import numpy as np
import pytest

from grbfnn.kernel import PrecisionFactor
from grbfnn.model import SUPERVISED, UNSUPERVISED, GrbfnnModel


def random_model(rng, N=8, D=3, M=3, O=1, supervised=False, trained=True):
    X = rng.uniform(-1, 1, (N, D))
    Y = rng.uniform(-1, 1, (N, O))
    model = GrbfnnModel(
        weights=rng.uniform(-1, 1, (M, O)),
        factor=PrecisionFactor(D, rng.uniform(-1, 1, D * (D + 1) // 2)),
        centers=rng.uniform(-1, 1, (M, D)),
        center_mode=SUPERVISED if supervised else UNSUPERVISED,
        trained=trained,
    )
    return model, X, Y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
