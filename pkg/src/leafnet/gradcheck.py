"""Central finite differences for checking analytic gradients."""

import numpy as np


def numerical_gradient(f, x, h=1e-5):
    """Central-difference gradient of scalar ``f()`` w.r.t. array ``x``.

    ``x`` is perturbed in place one entry at a time and restored afterwards.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        grad.reshape(-1)[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic, numeric, floor=1e-8):
    """``||a - n|| / max(||a||, ||n||, floor)``.

    The floor keeps gradients that are truly zero (a bias feeding batch norm,
    dead ReLU units) from turning round-off into a ratio of 1.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / scale)
