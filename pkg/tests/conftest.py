import numpy as np
import pytest

from rsd import build_model


@pytest.fixture
def rho_model():
    return build_model([[1.0, 0.5], [0.5, 1.0]])


def random_covariance(rng, n, scaled=True):
    """Random PD covariance; with ``scaled`` the diagonal is not unit."""
    A = rng.standard_normal((n, n))
    S = A @ A.T + 0.1 * np.eye(n)
    if scaled:
        d = rng.uniform(0.3, 3.0, n)
        S = S / np.sqrt(np.outer(np.diag(S), np.diag(S))) * np.outer(d, d)
    return 0.5 * (S + S.T)


def conditional_oracle(sigma, x, removed, j):
    """Residual from the partitioned conditional Gaussian, via a full matrix inverse."""
    n = len(x)
    others = [i for i in range(n) if i != j and i not in removed]
    if not others:
        return x[j] / np.sqrt(sigma[j, j]), sigma[j, j]
    S_oo_inv = np.linalg.inv(sigma[np.ix_(others, others)])
    s = sigma[j, others]
    mean = s @ S_oo_inv @ x[others]
    var = sigma[j, j] - s @ S_oo_inv @ s
    return (x[j] - mean) / np.sqrt(var), var
