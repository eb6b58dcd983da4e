import numpy as np
import pytest
import torch

torch.set_num_threads(1)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Random proper rotation from QR of a Gaussian matrix."""
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def rotation(rng):
    return random_rotation(rng)
