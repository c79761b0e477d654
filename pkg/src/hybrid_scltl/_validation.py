"""Input checks shared by the estimators and the scenario loader."""
import numpy as np


def check_spd(M, name="matrix", atol=1e-9):
    """Raise ValueError unless ``M`` is square, symmetric and positive definite."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.abs(M).max()))
    if not np.allclose(M, M.T, atol=atol * scale, rtol=0.0):
        raise ValueError(f"{name} is not symmetric")
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))
    if lam[0] <= 0:
        raise ValueError(f"{name} is not positive definite (min eigenvalue {lam[0]:.3g})")
    return M


def check_vector(x, n, name="vector"):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != n:
        raise ValueError(f"{name} must have {n} entries, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def as_gain_matrix(value, size, name="gain"):
    """Scalar -> scalar * identity; otherwise a checked SPD matrix."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = float(arr) * np.eye(size)
    if arr.shape != (size, size):
        raise ValueError(f"{name} must be a scalar or a {size}x{size} matrix")
    return check_spd(arr, name)
