import numpy as np
import pytest


def central_diff_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, coordinate by coordinate."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        bump = np.zeros_like(xf)
        bump[i] = h
        flat[i] = (f((xf + bump).reshape(x.shape)) - f((xf - bump).reshape(x.shape))) / (2 * h)
    return grad


def max_rel_err(analytic: np.ndarray, reference: np.ndarray, floor: float = 1e-6) -> float:
    """Worst elementwise relative error, floored so near-zero pairs compare absolutely."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(reference, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max()) if a.size else 0.0


@pytest.fixture
def fd_grad():
    return central_diff_grad


@pytest.fixture
def rel_err():
    return max_rel_err
