"""Command-line entry point.

Usage::

    wirelesscbc certify --config motor.json [--out DIR] [--seed N] [--variant exact]
    wirelesscbc verify --config motor.json --certificate DIR/certificate.json
    wirelesscbc bound --eta 0.0001306 --c 0.000166 --beta 0.7233 --T 100
    wirelesscbc simulate --config motor.json --certificate DIR/certificate.json
    wirelesscbc motor [--Ts 1e-4] [--emit-config]
    wirelesscbc export-paper-candidate [--config motor.json]

Exit codes: 0 success, 1 infeasible or invalid certificate, 2 usage or
configuration error.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .certificate import (bound_ratio, check_inequality, compute_beta, compute_c,
                          compute_eta)
from .config import ConfigError, RunConfig, default_motor_config
from .exceptions import CertificateError, DimensionError, InfeasibleError
from .model import FeedbackGain, build_augmented
from .motor import PAPER_F, PAPER_P, MotorParams, build_motor
from .simulator import SimConfig, run_monte_carlo
from .synthesis import operator_spectral_radius, synthesize

logger = logging.getLogger("wirelesscbc")

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


def floor_decimals(value, places=4):
    """Round down, so a printed lower bound is never optimistic."""
    factor = 10 ** places
    return math.floor(value * factor + 1e-9) / factor


def _dump(obj, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _matrix(a):
    return np.asarray(a, dtype=float).tolist()


def certificate_document(result, cfg):
    cbc = result.cbc
    doc = {
        "P": _matrix(cbc.P),
        "F": _matrix(result.gain.F),
        "eta": cbc.eta,
        "beta": cbc.beta,
        "c": cbc.c,
        "epsilon": result.bound,
        "epsilon_raw": bound_ratio(cbc.eta, cbc.c, cbc.beta, result.horizon),
        "guarantee": result.guarantee,
        "horizon": result.horizon,
        "variant": cbc.variant.value,
        "rho": result.rho,
        "scale": result.scale,
        "lyapunov_rhs": _matrix(result.lyapunov_rhs),
        "beta_certified": cbc.beta_certified,
        "mu_theta": cbc.mu_theta,
        "mu_phi": cbc.mu_phi,
        "sigma_w": _matrix(cbc.sigma_w),
        "U": cfg.spec.U.to_intervals(),
        "search_evaluations": len(result.trace),
    }
    if cfg.motor is not None:
        doc["motor"] = cfg.motor.to_dict()
        doc["Ts"] = cfg.motor.Ts
        doc["noise_std"] = cfg.noise_std
        doc["discretization"] = cfg.discretization
    return doc


def summary_text(cert, report, cfg):
    lines = [
        "Networked safety certificate",
        f"  links: mu_theta={cfg.network.mu_theta:g}, mu_phi={cfg.network.mu_phi:g}",
    ]
    if cfg.motor is not None:
        lines.append(f"  motor: Ts={cfg.motor.Ts:g} s (assumed), noise std={cfg.noise_std:g}, "
                     f"discretization={cfg.discretization}")
    lines += [
        f"  input box U: {cfg.spec.U.to_intervals()}",
        f"  variant: {cert['variant']}, drift radius: {cert['rho']:.6f}",
        f"  eta = {cert['eta']:.6g}, beta = {cert['beta']:.6g}, c = {cert['c']:.6g}",
        f"  horizon T = {cert['horizon']}, epsilon = {cert['epsilon']:.6g}",
        f"  guarantee >= {floor_decimals(cert['guarantee']):.4f}",
    ]
    if report is not None:
        lines += [
            f"  simulation: {report.violations}/{report.trajectories} trajectories "
            f"reached the unsafe set (99% upper bound {report.ci_upper:.4g}), "
            f"{report.exits_x} left X",
        ]
    return "\n".join(lines) + "\n"


def run_pipeline(cfg, out_dir=None):
    """Synthesize, simulate and write all artifacts.

    Returns
    -------
    dict
        Certificate document, simulation report and artifact paths.
    """
    out = Path(cfg.out_dir if out_dir is None else out_dir)
    system = cfg.system()
    result = synthesize(system, cfg.network, cfg.spec, cfg.synthesis)
    cert = certificate_document(result, cfg)
    csv_path = out / "trajectories.csv" if cfg.sim.record_full else None
    out.mkdir(parents=True, exist_ok=True)
    report = run_monte_carlo(system, result.gain, cfg.network, cfg.spec, cfg.sim,
                             epsilon=result.bound, csv_path=csv_path)
    paths = {"certificate": out / "certificate.json", "simulation": out / "simulation.json",
             "summary": out / "summary.txt", "config": out / "config.json"}
    _dump(cert, paths["certificate"])
    _dump(report.to_dict(), paths["simulation"])
    paths["config"].write_text(cfg.to_json() + "\n")
    text = summary_text(cert, report, cfg)
    paths["summary"].write_text(text)
    if csv_path is not None:
        paths["trajectories"] = csv_path
    return {"certificate": cert, "report": report, "summary": text, "paths": paths}


def verify_candidate(cfg, P, F):
    """Check a supplied ``(P, F)`` condition by condition; never raises on failure."""
    system = cfg.system()
    aug = build_augmented(system, FeedbackGain(F), cfg.network, cfg.synthesis.variant)
    P = np.asarray(P, dtype=float)
    residual = check_inequality(aug, P, cfg.synthesis.tol.inequality)
    eta = compute_eta(P, cfg.spec)
    beta = compute_beta(P, cfg.spec)
    c = compute_c(aug, P)
    valid = residual.satisfied and beta > eta
    verdict = {
        "valid": bool(valid),
        "residual_max_eig": residual.max_eig,
        "inequality_satisfied": bool(residual.satisfied),
        "drift_radius": operator_spectral_radius(aug),
        "P_min_eig": float(np.linalg.eigvalsh(P)[0]),
        "eta": eta,
        "beta": beta,
        "c": c,
        "beta_exceeds_eta": bool(beta > eta),
        "variant": aug.variant.value,
    }
    if beta > 0:
        ratio = bound_ratio(eta, c, beta, cfg.spec.T)
        verdict["epsilon_raw"] = ratio
        verdict["guarantee_if_valid"] = 1.0 - min(1.0, ratio)
    return verdict


def _load_config(args):
    if getattr(args, "config", None):
        cfg = RunConfig.load(args.config)
    else:
        cfg = RunConfig.from_dict(default_motor_config())
    return cfg.with_overrides(seed=getattr(args, "seed", None),
                              variant=getattr(args, "variant", None),
                              Ts=getattr(args, "Ts", None),
                              out_dir=getattr(args, "out", None))


def _load_candidate(path):
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if "P" not in doc or "F" not in doc:
        raise ConfigError(f"{path}: expected keys 'P' and 'F'")
    return doc


def cmd_certify(args):
    cfg = _load_config(args)
    artifacts = run_pipeline(cfg)
    sys.stdout.write(artifacts["summary"])
    for name, path in sorted(artifacts["paths"].items()):
        print(f"  wrote {name}: {path}")
    return EXIT_OK


def cmd_verify(args):
    cfg = _load_config(args)
    cand = _load_candidate(args.certificate)
    verdict = verify_candidate(cfg, cand["P"], cand["F"])
    print(json.dumps(verdict, indent=2, sort_keys=True))
    if args.out:
        _dump(verdict, Path(args.out) / "verification.json")
    return EXIT_OK if verdict["valid"] else EXIT_INVALID


def cmd_bound(args):
    ratio = bound_ratio(args.eta, args.c, args.beta, args.T)
    eps = min(1.0, max(0.0, ratio))
    print(f"epsilon = {eps:.6g} (raw ratio {ratio:.6g})")
    print(f"guarantee >= {floor_decimals(1.0 - eps):.4f}")
    return EXIT_OK


def cmd_simulate(args):
    cfg = _load_config(args)
    system = cfg.system()
    epsilon = None
    if args.certificate:
        cand = _load_candidate(args.certificate)
        F, epsilon = np.asarray(cand["F"]), cand.get("epsilon")
    else:
        F = np.zeros((system.m, system.n))
    sim = cfg.sim
    overrides = {k: v for k, v in (("trajectories", args.trajectories),
                                   ("horizon", args.horizon),
                                   ("control", args.control)) if v is not None}
    if overrides:
        sim = SimConfig(**{**sim.to_dict(), **overrides})
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "trajectories.csv" if sim.record_full else None
    report = run_monte_carlo(system, F, cfg.network, cfg.spec, sim, epsilon=epsilon,
                             csv_path=csv_path)
    _dump(report.to_dict(), out / "simulation.json")
    print(f"{report.violations}/{report.trajectories} trajectories reached the unsafe set; "
          f"empirical p = {report.empirical_p:.4g}, 99% CI [{report.ci_lower:.4g}, "
          f"{report.ci_upper:.4g}], {report.exits_x} left X")
    if epsilon is not None and not report.bound_respected:
        print(f"warning: violation rate significantly exceeds epsilon = {epsilon:.4g}",
              file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_motor(args):
    if args.emit_config:
        doc = default_motor_config()
        doc["plant"]["motor"]["Ts"] = args.Ts
        doc["plant"]["motor"]["noise_std"] = args.noise_std
        doc["plant"]["motor"]["discretization"] = args.discretization
        print(json.dumps(doc, indent=2, sort_keys=True))
        return EXIT_OK
    params = MotorParams(Ts=args.Ts)
    system = build_motor(params, args.noise_std, args.discretization)
    print(json.dumps({"A": _matrix(system.A), "B": _matrix(system.B),
                      "sigma_w1": _matrix(system.sigma_w1),
                      "sigma_w2": _matrix(system.sigma_w2),
                      "params": params.to_dict(), "discretization": args.discretization},
                     indent=2, sort_keys=True))
    return EXIT_OK


def cmd_export_paper_candidate(args):
    cfg = _load_config(args)
    verdict = verify_candidate(cfg, PAPER_P, PAPER_F)
    doc = {"P": _matrix(PAPER_P), "F": _matrix(PAPER_F), "verdict": verdict,
           "Ts": cfg.motor.Ts if cfg.motor is not None else None,
           "U": cfg.spec.U.to_intervals()}
    out = Path(cfg.out_dir)
    _dump(doc, out / "paper_candidate.json")
    print(json.dumps(verdict, indent=2, sort_keys=True))
    print(f"  wrote {out / 'paper_candidate.json'}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wirelesscbc",
        description="Barrier-certificate safety for linear systems over lossy links.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required,
                       help="run configuration JSON (default: built-in motor case)")
        p.add_argument("--seed", type=int)
        p.add_argument("--variant", choices=["paper", "exact"])
        p.add_argument("--Ts", type=float, help="override the motor sampling time [s]")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("certify", help="synthesize, validate and simulate")
    common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("verify", help="check a supplied P and F")
    common(p)
    p.add_argument("--certificate", required=True, help="JSON file with keys P and F")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bound", help="evaluate (eta + c T) / beta")
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--T", type=int, required=True)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("simulate", help="Monte Carlo runs for a given gain")
    common(p)
    p.add_argument("--certificate", help="JSON file with key F (and optionally epsilon)")
    p.add_argument("--trajectories", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--control", choices=["feedback", "zero-gain", "zero-input"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("motor", help="print the motor plant matrices")
    p.add_argument("--Ts", type=float, default=MotorParams().Ts)
    p.add_argument("--noise-std", type=float, default=default_motor_config()
                   ["plant"]["motor"]["noise_std"])
    p.add_argument("--discretization", choices=["paper", "zoh"], default="paper")
    p.add_argument("--emit-config", action="store_true",
                   help="print a complete default run configuration instead")
    p.set_defaults(func=cmd_motor)

    p = sub.add_parser("export-paper-candidate",
                       help="verify the published P and F at the configured Ts")
    common(p)
    p.set_defaults(func=cmd_export_paper_candidate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleError, CertificateError) as exc:
        stage = getattr(exc, "stage", None)
        label = f"[{stage}] " if stage and f"[{stage}]" not in str(exc) else ""
        print(f"error: {label}{exc}", file=sys.stderr)
        failures = getattr(exc, "failures", None)
        for name, margin in (failures or {}).items():
            print(f"  {name}: margin {margin:.6g}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
