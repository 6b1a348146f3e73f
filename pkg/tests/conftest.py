import numpy as np
import pytest

from reservoir_pairing.estimators import OutcomeModel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_outcome_model(gen: np.random.Generator) -> OutcomeModel:
    """A random smooth model with positive variances, for oracle checks."""
    w = gen.normal(size=(4, 2))
    b = gen.normal(size=4)
    return OutcomeModel(
        mu1=lambda x, w=w, b=b: x @ w[0] + b[0],
        mu0=lambda x, w=w, b=b: x @ w[1] + b[1],
        var1=lambda x, w=w, b=b: (x @ w[2] + b[2]) ** 2 + 0.1,
        var0=lambda x, w=w, b=b: (x @ w[3] + b[3]) ** 2 + 0.1,
        tau=float(b[0] - b[1]),
    )


def random_partial_pairing(gen: np.random.Generator, t: int) -> list[tuple[int, int]]:
    k = int(gen.integers(0, t // 2 + 1))
    perm = gen.permutation(t) + 1
    return [
        (min(perm[2 * i], perm[2 * i + 1]), max(perm[2 * i], perm[2 * i + 1]))
        for i in range(k)
    ]
