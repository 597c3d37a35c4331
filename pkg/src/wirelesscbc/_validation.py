"""Input validation helpers shared by the public constructors."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionError

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10


def as_matrix(value, name, shape=None):
    """Return ``value`` as a finite float 2-D array, checking ``shape``.

    ``None`` entries in ``shape`` are wildcards.
    """
    try:
        arr = check_array(value, dtype=np.float64, ensure_2d=True,
                          ensure_min_samples=0, ensure_min_features=0,
                          input_name=name)
    except ValueError as exc:
        raise DimensionError(f"{name}: {exc}") from exc
    if shape is not None:
        for axis, (got, want) in enumerate(zip(arr.shape, shape)):
            if want is not None and got != want:
                raise DimensionError(
                    f"{name} has shape {arr.shape}, expected "
                    f"{tuple('*' if s is None else s for s in shape)} "
                    f"(mismatch on axis {axis})")
    return np.array(arr, dtype=np.float64, copy=True)


def as_vector(value, name, size=None):
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if size is not None and arr.size != size:
        raise DimensionError(f"{name} has length {arr.size}, expected {size}")
    return arr


def check_symmetric(M, name, tol=SYMMETRY_TOL):
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got {M.shape}")
    if np.max(np.abs(M - M.T), initial=0.0) > tol * scale:
        raise ValueError(f"{name} is not symmetric (tolerance {tol:g})")
    return 0.5 * (M + M.T)


def check_psd(M, name, tol=PSD_TOL):
    """Symmetrize ``M``; reject it if an eigenvalue is below ``-tol`` (relative
    to the largest entry when that exceeds one)."""
    M = check_symmetric(M, name)
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and np.linalg.eigvalsh(M)[0] < -tol * scale:
        raise ValueError(f"{name} is not positive semidefinite")
    return M


def check_probability(mu, name):
    mu = float(mu)
    if not (0.0 < mu <= 1.0):
        raise ValueError(f"{name} must lie in (0, 1], got {mu!r}")
    return mu


def frozen(arr):
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr
