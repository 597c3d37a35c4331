"""Discretized dq-current model of a permanent magnet synchronous motor.

``build_motor`` evaluates the published discrete-time matrices verbatim.
Note the ``Ld/R`` and ``Lq/R`` prefactors on the diagonal of ``A``: for
small sampling times the diagonal tends to ``diag(Ld/R, Lq/R)`` rather
than the identity, unlike an exact zero-order-hold discretization of the
continuous dynamics.  The latter is available as
``discretization="zoh"`` for comparison.
"""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import expm

from .model import DtSls

__all__ = ["MotorParams", "build_motor", "PAPER_P", "PAPER_F", "DEFAULT_NOISE_STD"]

DEFAULT_NOISE_STD = 0.005

# Published certificate and gain for mu_theta = mu_phi = 0.9 (sampling time
# not reported).
PAPER_P = np.array([
    [0.92, 0.68, -0.58, -0.031, 0.34, -0.061, -0.073, -0.074],
    [0.68, 3.7, -0.41, -0.85, 0.21, 0.33, 0.036, 0.12],
    [-0.58, -0.41, 0.94, 0.22, -0.088, -0.056, 0.43, -0.034],
    [-0.031, -0.85, 0.22, 1.2, -0.071, 0.066, 0.23, 0.14],
    [0.34, 0.21, -0.088, -0.071, 1.5, -0.013, -0.85, -0.093],
    [-0.061, 0.33, -0.056, 0.066, -0.013, 0.91, -0.13, -0.13],
    [-0.073, 0.036, 0.43, 0.23, -0.85, -0.13, 1.5, -0.053],
    [-0.074, 0.12, -0.034, 0.14, -0.093, -0.13, -0.053, 0.88],
])
PAPER_F = np.array([
    [-0.68, -0.70],
    [0.79, -0.60],
])


@dataclass(frozen=True)
class MotorParams:
    """Stator resistance [ohm], electrical frequency [rad/s], d/q inductances
    [H] and sampling time [s]."""

    R: float = 0.025
    omega_el: float = 6283.2
    Ld: float = 1e-4
    Lq: float = 1.2e-4
    Ts: float = 1e-4

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"motor parameter {name} must be positive, got {value!r}")

    def to_dict(self):
        return {k: float(v) for k, v in asdict(self).items()}


def _paper_matrices(p):
    ed = np.exp(-p.R / p.Ld * p.Ts)
    eq = np.exp(-p.R / p.Lq * p.Ts)
    A = np.array([
        [p.Ld / p.R * ed, p.Lq * p.omega_el / p.R * (1.0 - ed)],
        [-p.Ld * p.omega_el / p.R * (1.0 - eq), p.Lq / p.R * eq],
    ])
    B = np.array([
        [(1.0 - ed) / p.R, p.Lq / p.R * (1.0 - ed)],
        [p.Ld / p.R * (1.0 - eq), (1.0 - eq) / p.R],
    ])
    return A, B


def _zoh_matrices(p):
    Ac = np.array([
        [-p.R / p.Ld, p.omega_el * p.Lq / p.Ld],
        [-p.omega_el * p.Ld / p.Lq, -p.R / p.Lq],
    ])
    Bc = np.diag([1.0 / p.Ld, 1.0 / p.Lq])
    M = np.zeros((4, 4))
    M[:2, :2], M[:2, 2:] = Ac, Bc
    E = expm(M * p.Ts)
    return E[:2, :2], E[:2, 2:]


def build_motor(params=None, noise_std=DEFAULT_NOISE_STD, discretization="paper"):
    """Motor plant as a :class:`DtSls` with isotropic noise of std ``noise_std``.

    Parameters
    ----------
    params : MotorParams, optional
    noise_std : float
        Standard deviation of every process and measurement noise channel.
    discretization : {"paper", "zoh"}
    """
    p = MotorParams() if params is None else params
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    if discretization == "paper":
        A, B = _paper_matrices(p)
    elif discretization == "zoh":
        A, B = _zoh_matrices(p)
    else:
        raise ValueError(f"unknown discretization {discretization!r}")
    cov = noise_std ** 2 * np.eye(2)
    return DtSls(A, B, cov, cov)
