"""Quadratic barrier certificates ``B(z) = z' P z`` over box regions.

A certificate is valid when

* the expected drift matrix satisfies ``L(P) - P <= 0`` (so that
  ``E[B(z+) | z] <= B(z) + c``),
* ``B <= eta`` on the initial region ``X0 x X x U x U``,
* ``B >= beta`` on every unsafe region ``X1_j x X x U x U``, with
  ``beta > eta``.

It then bounds the probability of reaching the unsafe set within ``T``
steps by ``(eta + c T) / beta``.

Because ``B`` is convex, the maximum over a box sits at a vertex and the
minimum over a box is found exactly by enumerating active sets.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_matrix, as_vector, check_psd, check_symmetric, frozen
from .exceptions import (CertificateError, DimensionError, SpecError,
                         UncertifiedLevelWarning)
from .model import CoeffVariant

__all__ = [
    "Box",
    "SafetySpec",
    "QuadraticCbc",
    "ResidualReport",
    "BoxExtremum",
    "drift_operator",
    "check_inequality",
    "compute_c",
    "compute_eta",
    "compute_beta",
    "maximize_quadratic_over_box",
    "minimize_quadratic_over_box",
    "bound_ratio",
    "probability_bound",
    "validate_cbc",
]

MAX_VERTEX_DIM = 26
MAX_ACTIVE_SET_DIM = 12


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box ``{v : lower <= v <= upper}``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = as_vector(self.lower, "lower")
        hi = as_vector(self.upper, "upper", lo.size)
        if np.any(lo > hi):
            raise SpecError(f"box has lower > upper: {lo} vs {hi}")
        object.__setattr__(self, "lower", frozen(lo))
        object.__setattr__(self, "upper", frozen(hi))

    @classmethod
    def symmetric(cls, half_width, dim):
        hw = np.broadcast_to(np.asarray(half_width, dtype=float), (dim,))
        return cls(-hw, hw)

    @classmethod
    def from_intervals(cls, intervals):
        arr = np.asarray(intervals, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    def to_intervals(self):
        return [[float(a), float(b)] for a, b in zip(self.lower, self.upper)]

    @property
    def dim(self):
        return self.lower.size

    def contains(self, points, tol=0.0):
        """Membership test; ``points`` may be a vector or an (N, dim) array."""
        pts = np.asarray(points, dtype=float)
        return np.all((pts >= self.lower - tol) & (pts <= self.upper + tol), axis=-1)

    def intersects(self, other):
        return bool(np.all(self.lower <= other.upper) and np.all(other.lower <= self.upper))

    def intersection(self, other):
        if not self.intersects(other):
            return None
        return Box(np.maximum(self.lower, other.lower), np.minimum(self.upper, other.upper))

    def issubset(self, other):
        return bool(np.all(self.lower >= other.lower) and np.all(self.upper <= other.upper))

    def product(self, *others):
        boxes = (self,) + others
        return Box(np.concatenate([b.lower for b in boxes]),
                   np.concatenate([b.upper for b in boxes]))

    def sample(self, rng, size):
        return self.lower + (self.upper - self.lower) * rng.random((size, self.dim))

    def clip(self, points):
        return np.clip(points, self.lower, self.upper)

    def __eq__(self, other):
        return (isinstance(other, Box) and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    def __repr__(self):
        return f"Box({self.to_intervals()})"


@dataclass(frozen=True, eq=False)
class SafetySpec:
    """Initial box, unsafe box union, state and input boxes, and horizon."""

    X: Box
    X0: Box
    X1: tuple
    U: Box
    T: int

    def __post_init__(self):
        object.__setattr__(self, "X1", tuple(self.X1))
        n = self.X.dim
        if self.X0.dim != n or any(b.dim != n for b in self.X1):
            raise DimensionError("X, X0 and all X1 boxes must share one dimension")
        if int(self.T) != self.T or self.T < 0:
            raise SpecError(f"horizon T must be a non-negative integer, got {self.T!r}")
        object.__setattr__(self, "T", int(self.T))
        if not self.X0.issubset(self.X):
            raise SpecError("initial set X0 is not contained in X")
        for j, box in enumerate(self.X1):
            if not box.intersects(self.X):
                raise SpecError(f"unsafe box {j} does not intersect X")
            if box.intersects(self.X0):
                raise SpecError(f"initial set X0 overlaps unsafe box {j}")

    @property
    def n(self):
        return self.X.dim

    @property
    def m(self):
        return self.U.dim

    def initial_domain(self):
        """``X0 x X x U x U``, the region ``eta`` must dominate."""
        return self.X0.product(self.X, self.U, self.U)

    def unsafe_domains(self):
        """``(X1_j cap X) x X x U x U`` for every unsafe box."""
        return [box.intersection(self.X).product(self.X, self.U, self.U) for box in self.X1]

    def domain(self):
        return self.X.product(self.X, self.U, self.U)

    def is_unsafe(self, x):
        """True where the plant state lies in some unsafe box."""
        x = np.asarray(x, dtype=float)
        hit = np.zeros(x.shape[:-1], dtype=bool)
        for box in self.X1:
            hit |= box.contains(x)
        return hit

    def with_input_box(self, U):
        return SafetySpec(self.X, self.X0, self.X1, U, self.T)

    def with_horizon(self, T):
        return SafetySpec(self.X, self.X0, self.X1, self.U, T)


@dataclass(frozen=True)
class ResidualReport:
    residual: np.ndarray = field(repr=False)
    max_eig: float
    tol: float

    @property
    def satisfied(self):
        return self.max_eig <= self.tol


@dataclass(frozen=True)
class BoxExtremum:
    value: float
    argument: np.ndarray = field(repr=False)
    certified: bool = True


@dataclass(frozen=True, eq=False)
class QuadraticCbc:
    """A validated certificate ``B(z) = z' P z`` with its level sets.

    ``beta_certified`` is False when ``beta`` came from the heuristic
    fallback and is therefore only an upper estimate of the true minimum.
    """

    P: np.ndarray
    eta: float
    beta: float
    c: float
    variant: CoeffVariant = CoeffVariant.EXACT
    mu_theta: float = 1.0
    mu_phi: float = 1.0
    sigma_w: np.ndarray = None
    beta_certified: bool = True

    def __post_init__(self):
        P = check_psd(as_matrix(self.P, "P"), "P")
        object.__setattr__(self, "P", frozen(P))
        if self.sigma_w is not None:
            object.__setattr__(self, "sigma_w", frozen(as_matrix(self.sigma_w, "sigma_w")))
        object.__setattr__(self, "variant", CoeffVariant.parse(self.variant))
        if not self.beta > self.eta:
            raise CertificateError(f"beta={self.beta:g} must exceed eta={self.eta:g}",
                                   {"beta > eta": self.beta - self.eta})
        if self.eta < 0 or self.c < 0:
            raise CertificateError("eta and c must be non-negative")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.einsum("...i,ij,...j->...", z, self.P, z)

    def epsilon(self, T):
        return probability_bound(self, T)

    def scaled(self, s):
        """The same certificate with ``P`` multiplied by ``s > 0``."""
        return QuadraticCbc(s * self.P, s * self.eta, s * self.beta, s * self.c,
                            self.variant, self.mu_theta, self.mu_phi, self.sigma_w,
                            self.beta_certified)


def _check_P(P, kappa):
    P = as_matrix(P, "P", (kappa, kappa))
    return check_symmetric(P, "P")


def drift_operator(aug, P):
    """Expected one-step quadratic drift matrix ``L(P)``.

    ``E[z+' P z+ | z] = z' L(P) z + c`` with
    ``L(P) = A0' P A0 + sum_i w_i A_i' P A_i``; the weights follow
    ``aug.variant``.
    """
    P = _check_P(P, aug.kappa)
    out = aug.A0.T @ P @ aug.A0
    for weight, Ai in aug.fluctuation_terms():
        if weight:
            out += weight * (Ai.T @ P @ Ai)
    return 0.5 * (out + out.T)


def check_inequality(aug, P, tol=1e-8):
    """Evaluate ``L(P) - P`` and whether its largest eigenvalue is ``<= tol``."""
    P = check_psd(_check_P(P, aug.kappa), "P")
    residual = drift_operator(aug, P) - P
    max_eig = float(np.linalg.eigvalsh(residual)[-1])
    return ResidualReport(residual, max_eig, tol)


def compute_c(aug, P, sigma_w=None):
    """Noise-driven drift constant ``c = E tr(E(k)' P E(k) Sigma_w)``."""
    P = _check_P(P, aug.kappa)
    nw = 2 * aug.n
    sigma_w = aug.system.sigma_w if sigma_w is None else as_matrix(sigma_w, "sigma_w", (nw, nw))
    c = np.trace(aug.E0.T @ P @ aug.E0 @ sigma_w)
    weight, E1 = aug.noise_fluctuation_term()
    if weight:
        c += weight * np.trace(E1.T @ P @ E1 @ sigma_w)
    return float(c)


def _vertices(box, start, stop):
    d = box.dim
    idx = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (idx >> np.arange(d, dtype=np.int64)) & 1
    return np.where(bits == 1, box.upper, box.lower)


def maximize_quadratic_over_box(P, box):
    """Exact ``max z' P z`` over a box for PSD ``P`` by vertex enumeration."""
    d = box.dim
    if d > MAX_VERTEX_DIM:
        raise ValueError(
            f"vertex enumeration over {d} coordinates needs 2**{d} evaluations; "
            f"limit is {MAX_VERTEX_DIM}. Reduce the state/input dimension.")
    if not (np.all(np.isfinite(box.lower)) and np.all(np.isfinite(box.upper))):
        raise ValueError("cannot maximize over an unbounded box")
    best, arg = -np.inf, None
    total, chunk = 1 << d, 1 << 16
    for start in range(0, total, chunk):
        V = _vertices(box, start, min(total, start + chunk))
        vals = np.einsum("ij,jk,ik->i", V, P, V)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, arg = float(vals[i]), V[i]
    return BoxExtremum(best, arg)


def _active_set_min(P, box, cond_limit=1e12):
    """Exact convex box-QP minimum by enumerating free/lower/upper patterns.

    For every free set S the stationarity system ``P_SS z_S = -P_SF z_F``
    is solved for all bound choices on the fixed coordinates at once.  Faces
    with singular ``P_SS`` are skipped: some global minimizer always lies on
    a face whose block is nonsingular (move along the null space until a
    further bound becomes active).
    """
    d = box.dim
    lo, hi = box.lower, box.upper
    scale = max(1.0, float(np.max(np.abs(np.concatenate([lo, hi])))))
    best, arg = np.inf, None
    coords = np.arange(d)
    for mask in range(1 << d):
        free = ((mask >> coords) & 1).astype(bool)
        fixed = ~free
        nf = int(fixed.sum())
        combos = np.arange(1 << nf, dtype=np.int64)[:, None]
        bits = (combos >> np.arange(nf, dtype=np.int64)) & 1
        zF = np.where(bits == 1, hi[fixed], lo[fixed])
        Z = np.empty((zF.shape[0], d))
        Z[:, fixed] = zF
        if free.any():
            Pss = P[np.ix_(free, free)]
            if np.linalg.cond(Pss) > cond_limit:
                continue
            zS = -np.linalg.solve(Pss, P[np.ix_(free, fixed)] @ zF.T).T
            ok = np.all((zS >= lo[free] - 1e-12 * scale) & (zS <= hi[free] + 1e-12 * scale), axis=1)
            if not ok.any():
                continue
            Z = Z[ok]
            Z[:, free] = np.clip(zS[ok], lo[free], hi[free])
        vals = np.einsum("ij,jk,ik->i", Z, P, Z)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best, arg = float(vals[i]), Z[i].copy()
    return best, arg


def _projected_gradient_min(P, box, rng, starts=64, iters=2000):
    step = 1.0 / max(float(np.linalg.eigvalsh(P)[-1]), 1e-300)
    Z = box.sample(rng, starts)
    Z[0] = box.clip(np.zeros(box.dim))
    for _ in range(iters):
        Z = box.clip(Z - step * (Z @ P))
    vals = np.einsum("ij,jk,ik->i", Z, P, Z)
    i = int(np.argmin(vals))
    return float(vals[i]), Z[i]


def minimize_quadratic_over_box(P, box, rng=None):
    """``min z' P z`` over a box for PSD ``P``.

    Exact for up to ``MAX_ACTIVE_SET_DIM`` coordinates (``3**d`` candidate
    points); beyond that a projected-gradient multistart is used and the
    result is flagged as not certified.
    """
    P = np.asarray(P, dtype=float)
    if box.dim <= MAX_ACTIVE_SET_DIM:
        value, arg = _active_set_min(P, box)
        return BoxExtremum(value, arg, True)
    rng = np.random.default_rng(0) if rng is None else rng
    value, arg = _projected_gradient_min(P, box, rng)
    return BoxExtremum(value, arg, False)


def compute_eta(P, spec):
    """Maximum of ``z' P z`` over ``X0 x X x U x U``."""
    dom = spec.initial_domain()
    P = check_psd(_check_P(P, dom.dim), "P")
    return maximize_quadratic_over_box(P, dom).value


def compute_beta(P, spec, return_certified=False):
    """Minimum of ``z' P z`` over every ``X1_j x X x U x U``.

    Emits :class:`UncertifiedLevelWarning` if the heuristic fallback was
    needed; pass ``return_certified=True`` to also get the flag.
    """
    if not spec.X1:
        raise SpecError("unsafe set X1 is empty; beta is undefined")
    doms = spec.unsafe_domains()
    P = check_psd(_check_P(P, doms[0].dim), "P")
    results = [minimize_quadratic_over_box(P, dom) for dom in doms]
    value = min(r.value for r in results)
    certified = all(r.certified for r in results)
    if not certified:
        warnings.warn("beta estimated by projected-gradient multistart; it is an "
                      "upper estimate and does not certify the unsafe level",
                      UncertifiedLevelWarning, stacklevel=2)
    value = max(value, 0.0)
    return (value, certified) if return_certified else value


def bound_ratio(eta, c, beta, T):
    """Raw ``(eta + c T) / beta`` without clamping."""
    if not beta > 0:
        raise ValueError("beta must be positive; the certificate is vacuous")
    if T < 0:
        raise ValueError("horizon T must be non-negative")
    return (eta + c * T) / beta


def probability_bound(cbc, T):
    """Upper bound ``min(1, (eta + c T) / beta)`` on reaching the unsafe set."""
    return float(min(1.0, max(0.0, bound_ratio(cbc.eta, cbc.c, cbc.beta, T))))


def validate_cbc(aug, P, spec, tol=1e-8, sigma_w=None):
    """Check every barrier condition and assemble the certificate.

    Raises
    ------
    CertificateError
        Listing each failed condition with its margin (negative = violated).
    """
    if spec.n != aug.n or spec.m != aug.m:
        raise DimensionError(
            f"spec has n={spec.n}, m={spec.m} but the system has n={aug.n}, m={aug.m}")
    P = _check_P(P, aug.kappa)
    failures = {}
    min_eig = float(np.linalg.eigvalsh(P)[0])
    if min_eig < -1e-10:
        failures["P positive semidefinite"] = min_eig
        raise CertificateError(_describe(failures), failures)
    report = check_inequality(aug, P, tol)
    if not report.satisfied:
        failures["drift inequality L(P) - P <= 0"] = -report.max_eig
    c = compute_c(aug, P, sigma_w)
    eta = compute_eta(P, spec)
    beta, certified = compute_beta(P, spec, return_certified=True)
    if not beta > eta:
        failures["beta > eta"] = beta - eta
    if failures:
        raise CertificateError(_describe(failures), failures)
    return QuadraticCbc(P, eta, beta, c, aug.variant, aug.network.mu_theta,
                        aug.network.mu_phi,
                        aug.system.sigma_w if sigma_w is None else sigma_w,
                        certified)


def _describe(failures):
    parts = [f"{name} (margin {margin:.3e})" for name, margin in failures.items()]
    return "certificate conditions failed: " + "; ".join(parts)
