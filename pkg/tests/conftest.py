import numpy as np
import pytest


def random_pair(seed, n, s):
    """Random lifted pair ``(a, b)`` with standard normal entries."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, s)), rng.standard_normal((n, s))


def angles_oracle(a, b):
    """Principal angles via SVD of orthonormal bases from numpy's QR (ascending)."""
    qa, _ = np.linalg.qr(a)
    qb, _ = np.linalg.qr(b)
    cos = np.clip(np.linalg.svd(qa.T @ qb, compute_uv=False), -1.0, 1.0)
    return np.sort(np.arccos(cos))


def subspace_gap(x, y):
    """Sine of the largest principal angle between two column spaces of equal dimension."""
    qx, _ = np.linalg.qr(x)
    qy, _ = np.linalg.qr(y)
    return float(np.linalg.norm(qy - qx @ (qx.T @ qy), 2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
