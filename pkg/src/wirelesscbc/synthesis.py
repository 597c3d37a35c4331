"""Synthesis of a feedback gain and quadratic certificate.

For a fixed gain the drift map ``P -> L(P)`` is linear, so a certificate
exists iff its spectral radius is below one, and then ``P - L(P) = Q`` has
a unique positive definite solution for every ``Q > 0``.  The gain itself
is found by a derivative-free search on that spectral radius; gain and ``Q``
are then optionally tuned to minimize the probability bound.
"""

import logging
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.optimize import lsq_linear, minimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix, check_psd
from .certificate import (QuadraticCbc, compute_beta, compute_c,
                          maximize_quadratic_over_box, probability_bound,
                          validate_cbc)
from .exceptions import (CertificateError, ConditioningWarning, DimensionError,
                         InfeasibleError, SpecError)
from .model import CoeffVariant, FeedbackGain, build_augmented

__all__ = [
    "GainSearch",
    "Tolerances",
    "SynthesisConfig",
    "SynthesisResult",
    "operator_matrix",
    "operator_spectral_radius",
    "solve_generalized_lyapunov",
    "search_gain",
    "refine_certificate",
    "synthesize",
    "CbcSynthesizer",
]

logger = logging.getLogger(__name__)


class GainSearch(str, Enum):
    NELDER_MEAD = "nelder-mead"
    COORDINATE = "coordinate"


@dataclass(frozen=True)
class Tolerances:
    inequality: float = 1e-8
    psd: float = 1e-10
    symmetry: float = 1e-12
    condition: float = 1e12


@dataclass(frozen=True, eq=False)
class SynthesisConfig:
    """Knobs for :func:`synthesize`.

    ``budget`` caps objective evaluations of the gain search and
    ``refine_budget`` those of the bound-minimizing pass (0 disables it).
    """

    variant: CoeffVariant = CoeffVariant.EXACT
    lyapunov_rhs: np.ndarray = None
    gain_search: GainSearch = GainSearch.NELDER_MEAD
    budget: int = 2000
    seed: int = 0
    rho_target: float = 0.999
    restarts: int = 3
    refine_budget: int = 1000
    tol: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        object.__setattr__(self, "variant", CoeffVariant.parse(self.variant))
        object.__setattr__(self, "gain_search", GainSearch(self.gain_search))
        if int(self.budget) < 1:
            raise ValueError("budget must be at least 1")
        if not 0.0 < self.rho_target < 1.0:
            raise ValueError("rho_target must lie in (0, 1)")
        if self.restarts < 0 or self.refine_budget < 0:
            raise ValueError("restarts and refine_budget must be non-negative")
        if self.lyapunov_rhs is not None:
            Q = as_matrix(self.lyapunov_rhs, "lyapunov_rhs")
            object.__setattr__(self, "lyapunov_rhs", check_psd(Q, "lyapunov_rhs"))

    def rhs(self, kappa):
        if self.lyapunov_rhs is None:
            return np.eye(kappa)
        if self.lyapunov_rhs.shape != (kappa, kappa):
            raise DimensionError(f"lyapunov_rhs must be {kappa}x{kappa}")
        return self.lyapunov_rhs


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    gain: FeedbackGain
    cbc: QuadraticCbc
    rho: float
    bound: float
    horizon: int
    lyapunov_rhs: np.ndarray = field(repr=False)
    scale: float = 1.0
    trace: tuple = field(default=(), repr=False)

    @property
    def guarantee(self):
        return 1.0 - self.bound


# -- drift operator as a matrix ---------------------------------------------

def operator_matrix(aug):
    """Matrix of ``vec(P) -> vec(L(P))`` for row-major ``vec``."""
    M = np.kron(aug.A0.T, aug.A0.T)
    for weight, Ai in aug.fluctuation_terms():
        if weight:
            M += weight * np.kron(Ai.T, Ai.T)
    return M


def operator_spectral_radius(aug, method="eig", max_iter=200, rtol=1e-12):
    """Spectral radius of the drift map.

    ``method="eig"`` takes the eigenvalues of :func:`operator_matrix`.
    ``method="power"`` iterates ``P <- L(P) / |L(P)|`` from the identity;
    the map preserves the PSD cone so the iteration converges to the
    dominant PSD eigenvector.  A ``RuntimeWarning`` flags non-convergence.
    """
    if method == "eig":
        return float(np.max(np.abs(np.linalg.eigvals(operator_matrix(aug)))))
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    M = operator_matrix(aug)
    v = np.eye(aug.kappa).reshape(-1)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = M @ v
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - est) <= rtol * new:
            return new
        est = new
    warnings.warn(f"power iteration did not converge in {max_iter} steps; "
                  f"returning approximate radius {est:.6g}", RuntimeWarning, stacklevel=2)
    return est


def solve_generalized_lyapunov(aug, Q=None, cond_limit=1e12):
    """Unique symmetric ``P`` with ``P - L(P) = Q``.

    Raises
    ------
    InfeasibleError
        If the drift map is not a contraction.
    """
    kappa = aug.kappa
    Q = np.eye(kappa) if Q is None else check_psd(as_matrix(Q, "Q", (kappa, kappa)), "Q")
    M = operator_matrix(aug)
    radius = float(np.max(np.abs(np.linalg.eigvals(M))))
    if radius >= 1.0:
        raise InfeasibleError(
            f"drift operator spectral radius {radius:.6g} >= 1: no quadratic "
            f"certificate exists for this gain", best_radius=radius, stage="lyapunov")
    K = np.eye(kappa * kappa) - M
    cond = np.linalg.cond(K)
    if cond > cond_limit:
        warnings.warn(f"Lyapunov system condition number {cond:.3g} exceeds {cond_limit:.1g}",
                      ConditioningWarning, stacklevel=2)
    P = np.linalg.solve(K, Q.reshape(-1)).reshape(kappa, kappa)
    return 0.5 * (P + P.T)


# -- gain search ---------------------------------------------------------------

def _radius_objective(system, network, variant, trace):
    m, n = system.m, system.n

    def objective(theta):
        aug = build_augmented(system, FeedbackGain(theta.reshape(m, n)), network, variant)
        value = float(np.max(np.abs(np.linalg.eigvals(operator_matrix(aug)))))
        trace.append(value)
        return value

    return objective


def _coordinate_search(objective, x0, budget, step=0.5, shrink=0.5, min_step=1e-6):
    x, fx, used = x0.copy(), objective(x0), 1
    while used < budget and step > min_step:
        improved = False
        for i in range(x.size):
            for sign in (1.0, -1.0):
                if used >= budget:
                    break
                trial = x.copy()
                trial[i] += sign * step
                ft = objective(trial)
                used += 1
                if ft < fx:
                    x, fx, improved = trial, ft, True
                    break
        if not improved:
            step *= shrink
    return x, fx


def _run_gain_search(system, network, cfg):
    trace = []
    objective = _radius_objective(system, network, cfg.variant, trace)
    rng = np.random.default_rng(cfg.seed)
    dim = system.m * system.n
    starts = [np.zeros(dim)] + [rng.normal(scale=0.5, size=dim) for _ in range(cfg.restarts)]
    per_start = max(1, cfg.budget // len(starts))
    best_x, best_f = None, np.inf
    for x0 in starts:
        if cfg.gain_search is GainSearch.NELDER_MEAD:
            res = minimize(objective, x0, method="Nelder-Mead",
                           options={"maxfev": per_start, "xatol": 1e-8, "fatol": 1e-12})
            x, fx = res.x, float(res.fun)
        else:
            x, fx = _coordinate_search(objective, x0, per_start)
        if fx < best_f:
            best_x, best_f = x, fx
    return FeedbackGain(best_x.reshape(system.m, system.n)), best_f, tuple(trace)


def search_gain(system, network, cfg=None):
    """Gain minimizing the drift-operator spectral radius.

    Starts from ``F = 0`` plus ``cfg.restarts`` seeded random points.

    Raises
    ------
    InfeasibleError
        If the best radius found is ``>= 1``.
    """
    cfg = SynthesisConfig() if cfg is None else cfg
    gain, radius, _ = _run_gain_search(system, network, cfg)
    if radius >= 1.0:
        raise InfeasibleError(f"no stabilizing gain found within budget; best radius "
                              f"{radius:.6g}", best_radius=radius, stage="search_gain")
    return gain


# -- bound-minimizing refinement ----------------------------------------------

def _fast_beta(P, spec):
    """``min z' P z`` over the unsafe boxes via bounded least squares.

    Exact for positive definite ``P``; used only inside the refinement loop,
    the final certificate is always recomputed by active-set enumeration.
    """
    L = np.linalg.cholesky(P)
    best = np.inf
    for dom in spec.unsafe_domains():
        res = lsq_linear(L.T, np.zeros(dom.dim), bounds=(dom.lower, dom.upper),
                         method="bvls", tol=1e-14)
        best = min(best, float(res.x @ P @ res.x))
    return best


def _bound_value(system, network, spec, gain, variant, sigma_w, Q):
    kappa = Q.shape[0]
    aug = build_augmented(system, gain, network, variant)
    M = operator_matrix(aug)
    if np.max(np.abs(np.linalg.eigvals(M))) >= 1.0:
        return np.inf
    P = np.linalg.solve(np.eye(kappa * kappa) - M, Q.reshape(-1)).reshape(kappa, kappa)
    P = 0.5 * (P + P.T)
    try:
        beta = _fast_beta(P, spec)
    except np.linalg.LinAlgError:
        return np.inf
    if not beta > 0:
        return np.inf
    eta = maximize_quadratic_over_box(P, spec.initial_domain()).value
    return (eta + compute_c(aug, P, sigma_w) * spec.T) / beta


def _tracked(fn, trace, penalty=1e6):
    def objective(theta):
        value = fn(theta)
        trace.append(value)
        return value if np.isfinite(value) else penalty
    return objective


def _refine_rhs(system, network, spec, gain, Q, cfg, sigma_w, trace):
    """Nelder-Mead on ``log diag Q`` then Powell on a Cholesky factor of ``Q``."""
    kappa = Q.shape[0]
    tril = np.tril_indices(kappa)
    args = (system, network, spec, gain, cfg.variant, sigma_w)
    best = _bound_value(*args, Q)
    diag = _tracked(lambda th: _bound_value(*args, np.diag(np.exp(th))), trace)
    res = minimize(diag, np.log(np.clip(np.diag(Q), 1e-300, None)), method="Nelder-Mead",
                   options={"maxfev": cfg.refine_budget, "adaptive": True,
                            "xatol": 1e-6, "fatol": 1e-10})
    if res.fun < best:
        best, Q = res.fun, np.diag(np.exp(res.x))

    def full_q(th):
        L = np.zeros((kappa, kappa))
        L[tril] = th
        return _gram(L)

    res = minimize(_tracked(lambda th: _bound_value(*args, full_q(th)), trace),
                   np.linalg.cholesky(Q)[tril], method="Powell",
                   options={"maxfev": cfg.refine_budget, "xtol": 1e-6, "ftol": 1e-10})
    if res.fun < best:
        best, Q = res.fun, full_q(res.x)
    return Q, best


def refine_certificate(system, network, spec, gain, cfg, sigma_w=None):
    """Choose a gain and ``Q`` that reduce the probability bound.

    ``P`` depends linearly on ``Q``, so for a fixed gain the bound is
    quasi-convex in ``Q`` and is minimized by Nelder-Mead over
    ``log diag Q`` followed by Powell over a full Cholesky factor.  This is
    done for the supplied gain and for the zero gain (when it is
    stabilizing); the better one is then polished by one alternation of a
    Nelder-Mead gain search at fixed ``Q`` and a repeated ``Q`` pass.

    Returns
    -------
    gain : FeedbackGain
    Q : ndarray
    trace : tuple of float
    """
    kappa = 2 * (system.n + system.m)
    Q0 = cfg.rhs(kappa)
    trace = []
    candidates = [gain]
    zero = FeedbackGain.zeros(system)
    if np.any(gain.F != 0) and operator_spectral_radius(
            build_augmented(system, zero, network, cfg.variant)) < 1.0:
        candidates.append(zero)
    best = None
    for cand in candidates:
        if operator_spectral_radius(build_augmented(system, cand, network, cfg.variant)) >= 1.0:
            continue
        Q, value = _refine_rhs(system, network, spec, cand, Q0, cfg, sigma_w, trace)
        if best is None or value < best[2]:
            best = (cand, Q, value)
    if best is None:
        raise InfeasibleError("no candidate gain is stabilizing", stage="refine")
    gain, Q, value = best

    m, n = system.m, system.n
    by_gain = _tracked(lambda th: _bound_value(system, network, spec,
                                               FeedbackGain(th.reshape(m, n)),
                                               cfg.variant, sigma_w, Q), trace)
    res = minimize(by_gain, gain.F.reshape(-1), method="Nelder-Mead",
                   options={"maxfev": cfg.refine_budget, "xatol": 1e-8, "fatol": 1e-12})
    if res.fun < value:
        gain = FeedbackGain(res.x.reshape(m, n))
        Q, value = _refine_rhs(system, network, spec, gain, Q, cfg, sigma_w, trace)
    return gain, Q, tuple(trace)


def _gram(L):
    Q = L @ L.T
    Q = 0.5 * (Q + Q.T)
    return Q + 1e-9 * np.max(np.abs(np.diag(Q)), initial=1.0) * np.eye(Q.shape[0])


def synthesize(system, network, spec, cfg=None):
    """Gain search, Lyapunov solve, optional refinement, validation, bound.

    ``P`` is finally normalized so that ``beta = 1``; the bound is invariant
    to this scaling and the factor is recorded in ``SynthesisResult.scale``.
    Errors from each stage carry the stage name.
    """
    cfg = SynthesisConfig() if cfg is None else cfg
    if not spec.X1:
        raise SpecError("unsafe set X1 is empty; beta is undefined")
    if spec.n != system.n or spec.m != system.m:
        raise DimensionError("safety spec dimensions do not match the plant")
    gain, radius, trace = _run_gain_search(system, network, cfg)
    logger.info("gain search: best radius %.6g after %d evaluations", radius, len(trace))
    if radius >= 1.0:
        raise InfeasibleError(f"[search_gain] no stabilizing gain found; best radius "
                              f"{radius:.6g}", best_radius=radius, stage="search_gain")
    Q = cfg.rhs(2 * (system.n + system.m))
    if cfg.refine_budget:
        gain, Q, refine_trace = refine_certificate(system, network, spec, gain, cfg)
        trace = trace + refine_trace
        logger.info("refinement: %d evaluations", len(refine_trace))
    aug = build_augmented(system, gain, network, cfg.variant)
    rho = operator_spectral_radius(aug)
    try:
        P = solve_generalized_lyapunov(aug, Q, cfg.tol.condition)
    except InfeasibleError as exc:
        exc.stage = "lyapunov"
        raise
    beta = compute_beta(P, spec)
    scale = 1.0 / beta if beta > 0 else 1.0
    P = scale * P
    try:
        cbc = validate_cbc(aug, P, spec, cfg.tol.inequality)
    except CertificateError as exc:
        raise CertificateError(f"[validate_cbc] {exc}", exc.failures) from exc
    bound = probability_bound(cbc, spec.T)
    return SynthesisResult(gain, cbc, rho, bound, spec.T, scale * Q, scale, tuple(trace))


class CbcSynthesizer(BaseEstimator):
    """Estimator-style wrapper around :func:`synthesize`.

    ``fit(system, network, spec)`` learns a gain and certificate;
    ``decision_function(Z)`` evaluates the barrier ``z' P z`` on rows of
    ``Z``, and ``score`` returns the certified safety probability.

    Examples
    --------
    >>> est = CbcSynthesizer(refine_budget=0).fit(system, network, spec)  # doctest: +SKIP
    >>> est.guarantee_  # doctest: +SKIP
    """

    def __init__(self, variant="exact", lyapunov_rhs=None, gain_search="nelder-mead",
                 budget=2000, seed=0, rho_target=0.999, restarts=3,
                 refine_budget=1000, inequality_tol=1e-8):
        self.variant = variant
        self.lyapunov_rhs = lyapunov_rhs
        self.gain_search = gain_search
        self.budget = budget
        self.seed = seed
        self.rho_target = rho_target
        self.restarts = restarts
        self.refine_budget = refine_budget
        self.inequality_tol = inequality_tol

    def _config(self):
        return SynthesisConfig(
            variant=self.variant, lyapunov_rhs=self.lyapunov_rhs,
            gain_search=self.gain_search, budget=self.budget, seed=self.seed,
            rho_target=self.rho_target, restarts=self.restarts,
            refine_budget=self.refine_budget,
            tol=replace(Tolerances(), inequality=self.inequality_tol))

    def fit(self, system, network, spec):
        result = synthesize(system, network, spec, self._config())
        self.result_ = result
        self.gain_ = result.gain.F
        self.cbc_ = result.cbc
        self.P_ = result.cbc.P
        self.eta_ = result.cbc.eta
        self.beta_ = result.cbc.beta
        self.c_ = result.cbc.c
        self.rho_ = result.rho
        self.epsilon_ = result.bound
        self.guarantee_ = result.guarantee
        return self

    def decision_function(self, Z):
        check_is_fitted(self, "P_")
        Z = as_matrix(Z, "Z", (None, self.P_.shape[0]))
        return np.einsum("ij,jk,ik->i", Z, self.P_, Z)

    def score(self, T):
        """Certified lower bound on the probability of staying safe for ``T`` steps."""
        check_is_fitted(self, "cbc_")
        return 1.0 - probability_bound(self.cbc_, T)
