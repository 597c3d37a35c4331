"""Plant, lossy-network and augmented closed-loop models.

The networked loop stacks plant state, controller prediction, applied
input and predicted input into ``z = [x; x_hat; u; u_hat]`` of size
``kappa = 2 (n + m)``.  Packet delivery on the sensor->controller link is
``theta(k)`` and on the controller->actuator link ``phi(k)``, both
Bernoulli with success probabilities ``mu_theta`` and ``mu_phi``.

Writing ``theta = mu_theta (1 - delta_theta)`` gives a zero-mean
fluctuation ``delta_theta`` with variance ``1/mu_theta - 1`` and splits the
random transition matrix into a mean part plus fluctuation parts::

    A(k) = A0 + A1 * delta_theta(k) + A2 * delta_phi(k)
    E(k) = E0 + E1 * delta_theta(k)
"""

from dataclasses import dataclass, field
from functools import cached_property
from enum import Enum

import numpy as np

from ._validation import as_matrix, check_probability, check_psd, frozen
from .exceptions import DimensionError

__all__ = [
    "CoeffVariant",
    "DtSls",
    "NetworkParams",
    "FeedbackGain",
    "AugmentedSystem",
    "build_augmented",
    "realize_transition",
    "sample_delta",
    "delta_value",
]


class CoeffVariant(str, Enum):
    """How the fluctuation terms are weighted in the drift and in ``c``.

    ``EXACT`` applies ``Var[delta] = 1/mu - 1`` to the scaled fluctuation
    blocks (which contain ``mu``), i.e. an effective ``mu (1 - mu)`` on the
    unscaled difference blocks.  ``PAPER`` weights the unscaled blocks by
    ``(1 - mu)**2`` as printed in the published matrix inequality.
    """

    PAPER = "paper"
    EXACT = "exact"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"paperliteral": "paper", "derivationexact": "exact"}
        key = str(value).lower().replace("_", "").replace("-", "")
        return cls(aliases.get(key, key))


@dataclass(frozen=True, eq=False)
class DtSls:
    """Discrete-time stochastic linear system ``x+ = A x + B u + w1``,
    measured as ``y = x + w2``.

    Noise covariances default to identity.
    """

    A: np.ndarray
    B: np.ndarray
    sigma_w1: np.ndarray = None
    sigma_w2: np.ndarray = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        n = A.shape[0]
        A = as_matrix(A, "A", (n, n))
        B = as_matrix(self.B, "B", (n, None))
        s1 = np.eye(n) if self.sigma_w1 is None else as_matrix(self.sigma_w1, "sigma_w1", (n, n))
        s2 = np.eye(n) if self.sigma_w2 is None else as_matrix(self.sigma_w2, "sigma_w2", (n, n))
        s1 = check_psd(s1, "sigma_w1", tol=1e-12)
        s2 = check_psd(s2, "sigma_w2", tol=1e-12)
        for name, val in (("A", A), ("B", B), ("sigma_w1", s1), ("sigma_w2", s2)):
            object.__setattr__(self, name, frozen(val))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def sigma_w(self):
        """Covariance of the stacked noise ``w = [w1; w2]``."""
        n = self.n
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = self.sigma_w1
        out[n:, n:] = self.sigma_w2
        return out

    def with_noise(self, sigma_w1, sigma_w2):
        return DtSls(self.A, self.B, sigma_w1, sigma_w2)


@dataclass(frozen=True)
class NetworkParams:
    """Per-step packet delivery probabilities of the two wireless links."""

    mu_theta: float = 1.0
    mu_phi: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mu_theta", check_probability(self.mu_theta, "mu_theta"))
        object.__setattr__(self, "mu_phi", check_probability(self.mu_phi, "mu_phi"))

    @property
    def var_theta(self):
        return 1.0 / self.mu_theta - 1.0

    @property
    def var_phi(self):
        return 1.0 / self.mu_phi - 1.0


@dataclass(frozen=True, eq=False)
class FeedbackGain:
    F: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "F", frozen(as_matrix(self.F, "F")))

    @classmethod
    def zeros(cls, system):
        return cls(np.zeros((system.m, system.n)))

    def check_against(self, system):
        if self.F.shape != (system.m, system.n):
            raise DimensionError(
                f"gain F has shape {self.F.shape}, expected "
                f"{(system.m, system.n)} for an n={system.n}, m={system.m} plant")
        return self


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    """Mean/fluctuation decomposition of the stacked jump-linear loop.

    ``E2`` is identically zero and not stored.
    """

    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    E0: np.ndarray
    E1: np.ndarray
    var_theta: float
    var_phi: float
    variant: CoeffVariant
    system: DtSls = field(repr=False)
    gain: FeedbackGain = field(repr=False)
    network: NetworkParams = field(repr=False)

    @property
    def n(self):
        return self.system.n

    @property
    def m(self):
        return self.system.m

    @property
    def kappa(self):
        return self.A0.shape[0]

    @property
    def blocks(self):
        """Slices of ``z`` holding x, x_hat, u and u_hat."""
        n, m = self.n, self.m
        return (slice(0, n), slice(n, 2 * n),
                slice(2 * n, 2 * n + m), slice(2 * n + m, 2 * (n + m)))

    def fluctuation_terms(self):
        """``(weight, matrix)`` pairs entering the expected quadratic drift.

        Under ``EXACT`` these are ``(var, A_i)``; under ``PAPER`` the
        unscaled blocks ``A_i / mu`` weighted by ``(1 - mu)**2``.
        """
        mt, mp = self.network.mu_theta, self.network.mu_phi
        if self.variant is CoeffVariant.EXACT:
            return ((self.var_theta, self.A1), (self.var_phi, self.A2))
        return (((1.0 - mt) ** 2, self.A1 / mt), ((1.0 - mp) ** 2, self.A2 / mp))

    @cached_property
    def transitions(self):
        """Read-only ``(A_k, E_k)`` for each outcome pair ``(theta, phi)``."""
        return {(t, p): tuple(frozen(M) for M in _realize(self, t, p))
                for t in (0, 1) for p in (0, 1)}

    def noise_fluctuation_term(self):
        mt = self.network.mu_theta
        if self.variant is CoeffVariant.EXACT:
            return self.var_theta, self.E1
        return (1.0 - mt) ** 2, self.E1 / mt


def build_augmented(system, gain, network, variant=CoeffVariant.EXACT):
    """Assemble the decomposed closed loop for plant, gain and network.

    Parameters
    ----------
    system : DtSls
    gain : FeedbackGain
    network : NetworkParams
    variant : CoeffVariant or str
        Fluctuation weighting used by downstream drift computations; the
        matrices themselves do not depend on it.

    Returns
    -------
    AugmentedSystem
    """
    variant = CoeffVariant.parse(variant)
    gain = gain if isinstance(gain, FeedbackGain) else FeedbackGain(gain)
    gain.check_against(system)
    A, B, F = system.A, system.B, gain.F
    n, m = system.n, system.m
    mt, mp = network.mu_theta, network.mu_phi
    FA, FB, Im = F @ A, F @ B, np.eye(m)
    Znn, Znm, Zmn, Zmm = (np.zeros(s) for s in ((n, n), (n, m), (m, n), (m, m)))

    A0 = np.block([
        [A, Znn, B, Znm],
        [mt * A, (1.0 - mt) * A, Znm, B],
        [Zmn, mp * FA, (1.0 - mp) * Im, mp * FB],
        [Zmn, FA, Zmm, FB],
    ])
    A1 = np.block([
        [Znn, Znn, Znm, Znm],
        [-mt * A, mt * A, Znm, Znm],
        [Zmn, Zmn, Zmm, Zmm],
        [Zmn, Zmn, Zmm, Zmm],
    ])
    A2 = np.block([
        [Znn, Znn, Znm, Znm],
        [Znn, Znn, Znm, Znm],
        [Zmn, -mp * FA, mp * Im, -mp * FB],
        [Zmn, Zmn, Zmm, Zmm],
    ])
    E0 = np.block([
        [np.eye(n), Znn],
        [Znn, mt * A],
        [Zmn, Zmn],
        [Zmn, Zmn],
    ])
    E1 = np.block([
        [Znn, Znn],
        [Znn, -mt * A],
        [Zmn, Zmn],
        [Zmn, Zmn],
    ])
    return AugmentedSystem(
        A0=frozen(A0), A1=frozen(A1), A2=frozen(A2), E0=frozen(E0), E1=frozen(E1),
        var_theta=network.var_theta, var_phi=network.var_phi, variant=variant,
        system=system, gain=gain, network=network)


def _check_bit(value, name):
    if value not in (0, 1, True, False):
        raise ValueError(f"{name} must be 0 or 1, got {value!r}")
    return int(value)


def realize_transition(aug, theta, phi):
    """Transition and noise matrices for one realized pair of packet outcomes.

    Built directly from the per-outcome block structure rather than from the
    mean/fluctuation split, so it can serve as an independent check on it.
    The four outcome pairs are assembled once per system and cached; the
    returned arrays are read-only.

    Returns
    -------
    A_k : ndarray, shape (kappa, kappa)
    E_k : ndarray, shape (kappa, 2n)
    """
    return aug.transitions[_check_bit(theta, "theta"), _check_bit(phi, "phi")]


def _realize(aug, theta, phi):
    A, B, F = aug.system.A, aug.system.B, aug.gain.F
    n, m = aug.n, aug.m
    Znn, Znm, Zmn, Zmm = (np.zeros(s) for s in ((n, n), (n, m), (m, n), (m, m)))
    A_k = np.block([
        [A, Znn, B, Znm],
        [theta * A, (1 - theta) * A, Znm, B],
        [Zmn, phi * (F @ A), (1 - phi) * np.eye(m), phi * (F @ B)],
        [Zmn, F @ A, Zmm, F @ B],
    ])
    E_k = np.block([
        [np.eye(n), Znn],
        [Znn, theta * A],
        [Zmn, Zmn],
        [Zmn, Zmn],
    ])
    return A_k, E_k


def delta_value(bit, mu):
    """Fluctuation value for a delivery outcome: 1 if lost, ``1 - 1/mu`` if delivered."""
    return 1.0 - 1.0 / mu if bit else 1.0


def sample_delta(mu, rng, size=None):
    """Draw the zero-mean fluctuation ``delta`` of a Bernoulli(mu) link.

    Returns 1 with probability ``1 - mu`` (packet lost) and ``1 - 1/mu``
    with probability ``mu`` (packet delivered).
    """
    mu = check_probability(mu, "mu")
    delivered = rng.random(size) < mu
    return np.where(delivered, 1.0 - 1.0 / mu, 1.0) if size is not None else (
        float(1.0 - 1.0 / mu) if delivered else 1.0)
