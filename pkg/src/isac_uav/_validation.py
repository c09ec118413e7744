import numpy as np

from .exceptions import DomainError


def check_complex_matrix(X, name="X", shape=None):
    """Coerce ``X`` to a finite 2-D complex array.

    sklearn's ``check_array`` refuses complex input, hence this helper.
    """
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if not np.issubdtype(X.dtype, np.number):
        raise ValueError(f"{name} must be numeric")
    X = X.astype(complex, copy=False)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or inf")
    if shape is not None and X.shape != tuple(shape):
        raise ValueError(f"{name} has shape {X.shape}, expected {tuple(shape)}")
    return X


def check_snapshot_stack(snapshots, n_elements, n_symbols):
    ys = np.asarray([np.asarray(s.entries if hasattr(s, "entries") else s) for s in snapshots])
    if ys.ndim != 3 or ys.shape[1:] != (n_elements, n_symbols):
        raise ValueError(f"snapshots must be (n_rows, {n_elements}, {n_symbols}), got {ys.shape}")
    return ys.astype(complex, copy=False)


def check_positions(points, name="points"):
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if p.shape[-1] != 3:
        raise ValueError(f"{name} must have 3 coordinates")
    if not np.all(np.isfinite(p)):
        raise DomainError(f"{name} contains NaN or inf")
    return p
