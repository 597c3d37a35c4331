"""Seeded Monte Carlo simulation of the networked closed loop.

One step of the loop, with ``theta`` / ``phi`` the delivery outcomes on the
sensor and actuator links::

    x+     = A x + B u + w1
    x_hat+ = theta A (x + w2) + (1 - theta) A x_hat + B u_hat
    u_hat+ = F (A x_hat + B u_hat)
    u+     = phi u_hat+ + (1 - phi) u          (zero-order hold on loss)

``phi`` here is the outcome of the control packet sent at step ``k`` and
applied at ``k + 1``, i.e. the one-step-delayed outcome of the hold
equation.

Every trajectory draws from its own generator seeded with
``(seed, index)``, so results do not depend on batching.
"""

import csv
import json
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.stats import beta as beta_dist

from ._validation import as_matrix
from .certificate import Box
from .model import FeedbackGain, realize_transition

__all__ = [
    "LoopState",
    "Draws",
    "SimConfig",
    "SimulationReport",
    "GaussianSource",
    "gaussian_draws",
    "step_componentwise",
    "step_augmented",
    "run_monte_carlo",
    "clopper_pearson",
    "empirical_drift",
    "write_trajectories_csv",
]

CONTROL_MODES = ("feedback", "zero-gain", "zero-input")


@dataclass(frozen=True)
class LoopState:
    """Plant state, predictor state, applied input and predicted input.

    Arrays may carry a leading batch axis.
    """

    x: np.ndarray
    x_hat: np.ndarray
    u: np.ndarray
    u_hat: np.ndarray

    def as_vector(self):
        return np.concatenate([self.x, self.x_hat, self.u, self.u_hat], axis=-1)

    @classmethod
    def from_vector(cls, z, n, m):
        z = np.asarray(z, dtype=float)
        return cls(z[..., :n], z[..., n:2 * n], z[..., 2 * n:2 * n + m], z[..., 2 * n + m:])


@dataclass(frozen=True)
class Draws:
    """Random inputs of one step: noises and packet outcomes (0 lost, 1 delivered)."""

    w1: np.ndarray
    w2: np.ndarray
    theta: np.ndarray
    phi: np.ndarray


def step_componentwise(state, system, gain, draws):
    """Advance the loop one step using the per-component update equations."""
    A, B = system.A, system.B
    F = gain.F if isinstance(gain, FeedbackGain) else np.asarray(gain)
    theta = np.asarray(draws.theta, dtype=float)[..., None]
    phi = np.asarray(draws.phi, dtype=float)[..., None]
    x, x_hat, u, u_hat = state.x, state.x_hat, state.u, state.u_hat
    x_next = x @ A.T + u @ B.T + draws.w1
    x_hat_next = theta * ((x + draws.w2) @ A.T) + (1.0 - theta) * (x_hat @ A.T) + u_hat @ B.T
    u_hat_next = (x_hat @ A.T + u_hat @ B.T) @ F.T
    u_next = phi * u_hat_next + (1.0 - phi) * u
    return LoopState(x_next, x_hat_next, u_next, u_hat_next)


def step_augmented(z, aug, draws):
    """Advance the stacked state ``z`` with the realized jump-linear matrices."""
    A_k, E_k = realize_transition(aug, int(draws.theta), int(draws.phi))
    w = np.concatenate([np.asarray(draws.w1, float), np.asarray(draws.w2, float)])
    return A_k @ np.asarray(z, dtype=float) + E_k @ w


class GaussianSource:
    """Correlated Gaussian vectors from a uniform stream.

    Standard normals come from the Box-Muller transform
    ``sqrt(-2 log(1 - u1)) * (cos, sin)(2 pi u2)`` applied to consecutive
    uniform pairs, then are colored by the symmetric square root of the
    covariance (computed once).
    """

    def __init__(self, covariance):
        cov = as_matrix(covariance, "covariance")
        cov = 0.5 * (cov + cov.T)
        vals, vecs = np.linalg.eigh(cov)
        scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
        if vals.size and vals[0] < -1e-10 * scale:
            raise np.linalg.LinAlgError("covariance is not positive semidefinite")
        self.dim = cov.shape[0]
        self.factor = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
        self.is_zero = not np.any(self.factor)

    @staticmethod
    def standard_normal(rng, count):
        pairs = (count + 1) // 2
        u = rng.random((pairs, 2))
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        ang = 2.0 * np.pi * u[:, 1]
        return np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1).reshape(-1)[:count]

    def draw(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        count = int(np.prod(size, dtype=np.int64)) * self.dim
        base = self.standard_normal(rng, count).reshape(size + (self.dim,))
        return base @ self.factor.T


def gaussian_draws(rng, covariance, size=()):
    """Draw Gaussian vectors with the given covariance (see :class:`GaussianSource`)."""
    return GaussianSource(covariance).draw(rng, size)


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Monte Carlo settings.

    ``init_mode`` is ``"uniform"`` (plant state uniform over ``X0``) or an
    array of fixed initial states cycled over trajectories.  ``control``
    selects the loop: ``"feedback"`` uses the supplied gain, ``"zero-gain"``
    keeps the network loop with ``F = 0`` and ``"zero-input"`` applies
    ``u = 0`` directly to the plant.
    """

    trajectories: int = 10
    horizon: int = 100
    seed: int = 0
    init_mode: object = "uniform"
    record_full: bool = False
    control: str = "feedback"

    def __post_init__(self):
        if int(self.trajectories) < 1 or int(self.horizon) < 1:
            raise ValueError("trajectories and horizon must be at least 1")
        if self.control not in CONTROL_MODES:
            raise ValueError(f"control must be one of {CONTROL_MODES}")
        if not (isinstance(self.init_mode, str) and self.init_mode == "uniform"):
            pts = np.atleast_2d(np.asarray(self.init_mode, dtype=float))
            object.__setattr__(self, "init_mode", pts)

    def to_dict(self):
        init = self.init_mode if isinstance(self.init_mode, str) else self.init_mode.tolist()
        return {"trajectories": int(self.trajectories), "horizon": int(self.horizon),
                "seed": int(self.seed), "init_mode": init,
                "record_full": bool(self.record_full), "control": self.control}


@dataclass
class SimulationReport:
    trajectories: int
    horizon: int
    violations: int
    empirical_p: float
    ci_lower: float
    ci_upper: float
    confidence: float
    bound_epsilon: object
    exits_x: int
    envelope_min: np.ndarray = field(repr=False)
    envelope_max: np.ndarray = field(repr=False)
    seed: int = 0
    config: dict = field(default_factory=dict, repr=False)
    paths: dict = field(default=None, repr=False)

    @property
    def bound_respected(self):
        """False only if the violation rate is significantly above the bound."""
        return self.bound_epsilon is None or self.ci_lower <= self.bound_epsilon

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "paths"}
        out["envelope_min"] = self.envelope_min.tolist()
        out["envelope_max"] = self.envelope_max.tolist()
        out["bound_respected"] = self.bound_respected
        return out

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


def clopper_pearson(k, n, confidence=0.99):
    """One-sided exact binomial bounds ``(lower, upper)`` at ``confidence``."""
    alpha = 1.0 - confidence
    lower = 0.0 if k == 0 else float(beta_dist.ppf(alpha, k, n - k + 1))
    upper = 1.0 if k == n else float(beta_dist.ppf(1.0 - alpha, k + 1, n - k))
    return lower, upper


def _trajectory_stream(seed, index, system, horizon, x0_box, noise_w1, noise_w2):
    rng = np.random.default_rng([int(seed), int(index)])
    x0 = x0_box.lower + (x0_box.upper - x0_box.lower) * rng.random(system.n)
    v0 = noise_w2.draw(rng)
    packets = rng.random((horizon, 2))
    w1 = noise_w1.draw(rng, horizon)
    w2 = noise_w2.draw(rng, horizon)
    return x0, v0, packets, w1, w2


def run_monte_carlo(system, gain, network, spec, cfg=None, epsilon=None, csv_path=None):
    """Simulate ``cfg.trajectories`` closed-loop runs of ``cfg.horizon`` steps.

    The controller starts from the first measurement ``y(0) = x(0) + w2``:
    ``x_hat(0) = y(0)`` and ``u(0) = u_hat(0) = F y(0)`` clipped into ``U``.
    A trajectory violates if ``x(k)`` enters any unsafe box for some
    ``k in [0, T]``; leaving ``X`` is counted separately.

    Parameters
    ----------
    epsilon : float, optional
        Certified bound to echo in the report.
    csv_path : path-like, optional
        If given (or ``cfg.record_full``), full trajectories are recorded and
        written there as CSV.

    Returns
    -------
    SimulationReport
    """
    cfg = SimConfig() if cfg is None else cfg
    n, m, T, N = system.n, system.m, int(cfg.horizon), int(cfg.trajectories)
    F = gain.F if isinstance(gain, FeedbackGain) else as_matrix(gain, "F", (m, n))
    if cfg.control != "feedback":
        F = np.zeros((m, n))
    noise_w1 = GaussianSource(system.sigma_w1)
    noise_w2 = GaussianSource(system.sigma_w2)
    fixed = None if isinstance(cfg.init_mode, str) else cfg.init_mode
    if fixed is not None and fixed.shape[1] != n:
        raise ValueError(f"fixed initial states must have {n} columns")

    streams = [_trajectory_stream(cfg.seed, i, system, T, spec.X0, noise_w1, noise_w2)
               for i in range(N)]
    x0 = np.array([s[0] for s in streams])
    if fixed is not None:
        x0 = fixed[np.arange(N) % fixed.shape[0]]
    v0 = np.array([s[1] for s in streams])
    packets = np.array([s[2] for s in streams])
    w1 = np.array([s[3] for s in streams])
    w2 = np.array([s[4] for s in streams])
    theta = (packets[..., 0] < network.mu_theta).astype(float)
    phi = (packets[..., 1] < network.mu_phi).astype(float)

    y0 = x0 + v0
    if cfg.control == "zero-input":
        u0 = np.zeros((N, m))
    else:
        u0 = spec.U.clip(y0 @ F.T)
    state = LoopState(x0, y0, u0, u0.copy())
    record = cfg.record_full or csv_path is not None
    zs = [state.as_vector()] if record else None
    unsafe = spec.is_unsafe(x0)
    flags = [unsafe] if record else None
    violated = unsafe.copy()
    exited = ~spec.X.contains(x0)
    env_min = [x0.min(axis=0)]
    env_max = [x0.max(axis=0)]
    gain_obj = FeedbackGain(F)
    for k in range(T):
        draws = Draws(w1[:, k], w2[:, k], theta[:, k], phi[:, k])
        if cfg.control == "zero-input":
            state = LoopState(state.x @ system.A.T + draws.w1, state.x_hat, state.u, state.u_hat)
        else:
            state = step_componentwise(state, system, gain_obj, draws)
        unsafe = spec.is_unsafe(state.x)
        violated |= unsafe
        exited |= ~spec.X.contains(state.x)
        env_min.append(state.x.min(axis=0))
        env_max.append(state.x.max(axis=0))
        if record:
            zs.append(state.as_vector())
            flags.append(unsafe)

    k_viol = int(violated.sum())
    lower, upper = clopper_pearson(k_viol, N)
    report = SimulationReport(
        trajectories=N, horizon=T, violations=k_viol, empirical_p=k_viol / N,
        ci_lower=lower, ci_upper=upper, confidence=0.99,
        bound_epsilon=None if epsilon is None else float(epsilon),
        exits_x=int(exited.sum()), envelope_min=np.array(env_min),
        envelope_max=np.array(env_max), seed=int(cfg.seed), config=cfg.to_dict())
    if record:
        report.paths = {"z": np.stack(zs, axis=1), "theta": theta, "phi": phi,
                        "unsafe": np.stack(flags, axis=1)}
        if csv_path is not None:
            write_trajectories_csv(csv_path, report.paths, n, m)
    return report


def write_trajectories_csv(path, paths, n, m):
    """One row per (trajectory, step).

    ``theta``/``phi`` on row ``k`` are the outcomes used for the transition
    ``k -> k+1`` and are blank on the final row.
    """
    z, theta, phi, unsafe = paths["z"], paths["theta"], paths["phi"], paths["unsafe"]
    header = (["trajectory", "k"] + [f"x{i + 1}" for i in range(n)]
              + [f"xhat{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
              + [f"uhat{i + 1}" for i in range(m)] + ["theta", "phi", "violated"])
    T = z.shape[1] - 1
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(z.shape[0]):
            for k in range(T + 1):
                pk = [int(theta[i, k]), int(phi[i, k])] if k < T else ["", ""]
                writer.writerow([i, k] + [repr(float(v)) for v in z[i, k]] + pk
                                + [int(unsafe[i, k])])


def empirical_drift(aug, P, domain, samples, rng, sigma_w=None):
    """Sample one-step changes ``B(z+) - B(z)`` from states uniform in ``domain``.

    Returns
    -------
    mean : float
    stderr : float
    """
    P = np.asarray(P, dtype=float)
    Z = domain.sample(rng, samples) if isinstance(domain, Box) else np.asarray(domain, float)
    count = Z.shape[0]
    theta = rng.random(count) < aug.network.mu_theta
    phi = rng.random(count) < aug.network.mu_phi
    cov = aug.system.sigma_w if sigma_w is None else sigma_w
    W = GaussianSource(cov).draw(rng, count)
    Znext = np.empty_like(Z)
    for t in (0, 1):
        for p in (0, 1):
            sel = (theta == t) & (phi == p)
            if sel.any():
                A_k, E_k = realize_transition(aug, t, p)
                Znext[sel] = Z[sel] @ A_k.T + W[sel] @ E_k.T
    delta = (np.einsum("ij,jk,ik->i", Znext, P, Znext)
             - np.einsum("ij,jk,ik->i", Z, P, Z))
    return float(delta.mean()), float(delta.std(ddof=1) / np.sqrt(count))
