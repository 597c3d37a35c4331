"""Run configuration: JSON document <-> typed objects.

Matrices are row-major nested lists and boxes are lists of ``[lo, hi]``
intervals.  The schema lives next to this module in
``config_schema.json``.
"""

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import jsonschema
import numpy as np

from .certificate import Box, SafetySpec
from .model import DtSls, NetworkParams
from .motor import DEFAULT_NOISE_STD, MotorParams, build_motor
from .simulator import SimConfig
from .synthesis import SynthesisConfig, Tolerances

__all__ = ["ConfigError", "RunConfig", "load_schema", "default_motor_config"]


class ConfigError(ValueError):
    """The configuration document is malformed."""


def load_schema():
    text = resources.files(__package__).joinpath("config_schema.json").read_text()
    return json.loads(text)


def default_motor_config():
    """Motor case study at 90% delivery on both links, as a JSON-ready dict."""
    return {
        "plant": {"motor": {**MotorParams().to_dict(), "noise_std": DEFAULT_NOISE_STD,
                            "discretization": "paper"}},
        "network": {"mu_theta": 0.9, "mu_phi": 0.9},
        "spec": {
            "X": [[-2.0, 2.0], [-2.0, 2.0]],
            "X0": [[-0.2, 0.2], [-0.2, 0.2]],
            "X1": [[[-2.0, -1.2], [-2.0, 2.0]], [[1.2, 2.0], [-2.0, 2.0]]],
            "U": [[-0.1, 0.1], [-0.1, 0.1]],
            "T": 100,
        },
        "synthesis": {"variant": "exact", "seed": 0},
        "simulation": {"trajectories": 10, "horizon": 100, "seed": 0, "record_full": True},
        "output": {"dir": "out"},
    }


def _matrix(value):
    return None if value is None else np.asarray(value, dtype=float).tolist()


@dataclass(frozen=True, eq=False)
class RunConfig:
    network: NetworkParams
    spec: SafetySpec
    motor: MotorParams = None
    noise_std: float = DEFAULT_NOISE_STD
    discretization: str = "paper"
    explicit: DtSls = None
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    out_dir: str = "out"

    def __post_init__(self):
        if (self.motor is None) == (self.explicit is None):
            raise ConfigError("exactly one plant source (motor or explicit matrices) is required")

    @classmethod
    def from_dict(cls, doc):
        try:
            jsonschema.validate(doc, load_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"schema error at {where}: {exc.message}") from exc
        try:
            return cls._build(doc)
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid configuration: {exc}") from exc

    @classmethod
    def _build(cls, doc):
        plant = doc["plant"]
        kwargs = {}
        if "motor" in plant:
            motor = dict(plant["motor"])
            kwargs["noise_std"] = float(motor.pop("noise_std", DEFAULT_NOISE_STD))
            kwargs["discretization"] = motor.pop("discretization", "paper")
            kwargs["motor"] = MotorParams(**motor)
        else:
            kwargs["explicit"] = DtSls(plant["A"], plant["B"], plant.get("sigma_w1"),
                                       plant.get("sigma_w2"))
        net = NetworkParams(**doc["network"])
        s = doc["spec"]
        spec = SafetySpec(Box.from_intervals(s["X"]), Box.from_intervals(s["X0"]),
                          [Box.from_intervals(b) for b in s["X1"]],
                          Box.from_intervals(s["U"]), s["T"])
        syn = dict(doc.get("synthesis", {}))
        tol = Tolerances(inequality=syn.pop("inequality_tol", Tolerances.inequality))
        synthesis = SynthesisConfig(tol=tol, **syn)
        sim = SimConfig(**doc.get("simulation", {}))
        out_dir = doc.get("output", {}).get("dir", "out")
        return cls(network=net, spec=spec, synthesis=synthesis, sim=sim,
                   out_dir=out_dir, **kwargs)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(doc)

    def system(self):
        if self.motor is not None:
            return build_motor(self.motor, self.noise_std, self.discretization)
        return self.explicit

    def to_dict(self):
        if self.motor is not None:
            plant = {"motor": {**self.motor.to_dict(), "noise_std": float(self.noise_std),
                               "discretization": self.discretization}}
        else:
            e = self.explicit
            plant = {"A": _matrix(e.A), "B": _matrix(e.B),
                     "sigma_w1": _matrix(e.sigma_w1), "sigma_w2": _matrix(e.sigma_w2)}
        s = self.spec
        syn = self.synthesis
        return {
            "plant": plant,
            "network": {"mu_theta": self.network.mu_theta, "mu_phi": self.network.mu_phi},
            "spec": {"X": s.X.to_intervals(), "X0": s.X0.to_intervals(),
                     "X1": [b.to_intervals() for b in s.X1], "U": s.U.to_intervals(),
                     "T": s.T},
            "synthesis": {
                "variant": syn.variant.value, "lyapunov_rhs": _matrix(syn.lyapunov_rhs),
                "gain_search": syn.gain_search.value, "budget": int(syn.budget),
                "seed": int(syn.seed), "rho_target": float(syn.rho_target),
                "restarts": int(syn.restarts), "refine_budget": int(syn.refine_budget),
                "inequality_tol": float(syn.tol.inequality),
            },
            "simulation": self.sim.to_dict(),
            "output": {"dir": self.out_dir},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_overrides(self, seed=None, variant=None, Ts=None, out_dir=None):
        """Copy with command-line overrides applied."""
        cfg = self
        if seed is not None:
            cfg = replace(cfg, synthesis=replace(cfg.synthesis, seed=seed),
                          sim=replace(cfg.sim, seed=seed))
        if variant is not None:
            cfg = replace(cfg, synthesis=replace(cfg.synthesis, variant=variant))
        if Ts is not None:
            if cfg.motor is None:
                raise ConfigError("--Ts only applies to the motor plant")
            cfg = replace(cfg, motor=replace(cfg.motor, Ts=Ts))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=out_dir)
        return cfg
