"""Run configuration: the sectioned key-value document and its parsing.

Every key has a default, unknown keys are rejected, and validation
errors name the offending ``section.key``.  ``parse_config`` and
``serialize_config`` round-trip exactly.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field

from .button import DESIGN_BOUNDS, DESIGN_FIELDS, FORCE_CEILING_N
from .errors import FormatError

OBJECTIVE_NAMES = ("completion_time_s", "error_rate", "effort")
PROVIDERS = ("simulated_button", "schaffer", "zdt1")
KERNELS = ("matern52", "squared_exponential")

# Admissible design-parameter ranges; configured bounds must stay inside.
_FIELD_LIMITS = {
    "travel": (0.5, 5.0, True, True),
    "activation_fraction": (0.2, 0.9, False, False),
    "peak_force": (0.3, FORCE_CEILING_N, False, True),
    "snap_ratio": (0.0, 0.8, True, True),
    "velocity_stiffening": (0.0, 1.0, True, True),
    "damping": (0.0, 1.0, False, True),
}


@dataclass(frozen=True)
class CidConfig:
    """Everything a closed-loop run needs, besides file paths."""

    provider: str = "simulated_button"
    objectives: tuple[str, ...] = OBJECTIVE_NAMES
    bounds: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DESIGN_BOUNDS)
    )
    budget: int = 40
    init_count: int = 8
    master_seed: int = 0
    scan_count: int = 1024
    ehvi_samples: int = 128
    kernel: str = "matern52"
    inner_lr: float = 0.05
    adapt_episodes: int = 8
    episodes_per_eval: int = 20
    horizon: int = 1000
    sensory_delay: int = 50
    dwell_limit: int = 300
    policy_path: str = ""
    sample_rate_hz: float = 1000.0
    mass_kg: float = 0.005

    def __post_init__(self):
        object.__setattr__(self, "objectives", tuple(self.objectives))
        object.__setattr__(
            self,
            "bounds",
            {k: (float(lo), float(hi)) for k, (lo, hi) in self.bounds.items()},
        )
        _validate(self)


def _fail(path: str, message: str):
    raise FormatError(f"{path}: {message}")


def _validate(cfg: CidConfig):
    if cfg.provider not in PROVIDERS:
        _fail("run.provider", f"must be one of {PROVIDERS}, got {cfg.provider!r}")
    if len(cfg.objectives) < 2:
        _fail("objectives.minimize", "need at least 2 objectives")
    for name in cfg.objectives:
        if name not in OBJECTIVE_NAMES:
            _fail("objectives.minimize", f"unknown objective {name!r}")
    if len(set(cfg.objectives)) != len(cfg.objectives):
        _fail("objectives.minimize", "objectives must be distinct")
    if not cfg.bounds:
        _fail("design_space", "bounds must be nonempty")
    for key in cfg.bounds:
        if key not in DESIGN_FIELDS:
            _fail(f"design_space.{key}", "unknown design parameter")
    for key in DESIGN_FIELDS:
        if key not in cfg.bounds:
            _fail(f"design_space.{key}", "missing bounds")
        lo, hi = cfg.bounds[key]
        if not lo < hi:
            _fail(f"design_space.{key}", f"lower bound {lo} must be < upper bound {hi}")
        lim_lo, lim_hi, closed_lo, closed_hi = _FIELD_LIMITS[key]
        lo_ok = lo >= lim_lo if closed_lo else lo > lim_lo
        hi_ok = hi <= lim_hi if closed_hi else hi < lim_hi
        if not (lo_ok and hi_ok):
            bracket = f"{'[' if closed_lo else '('}{lim_lo}, {lim_hi}{']' if closed_hi else ')'}"
            _fail(f"design_space.{key}", f"bounds ({lo}, {hi}) outside admissible {bracket}")
    if cfg.init_count < 2:
        _fail("run.init_count", f"must be >= 2 to fit surrogates, got {cfg.init_count}")
    positives = (
        ("run.budget", cfg.budget),
        ("optimizer.scan_count", cfg.scan_count),
        ("optimizer.ehvi_samples", cfg.ehvi_samples),
        ("user_model.episodes_per_eval", cfg.episodes_per_eval),
        ("user_model.horizon", cfg.horizon),
        ("user_model.dwell_limit", cfg.dwell_limit),
    )
    for path, value in positives:
        if value < 1:
            _fail(path, f"must be >= 1, got {value}")
    if cfg.kernel not in KERNELS:
        _fail("optimizer.kernel", f"must be one of {KERNELS}, got {cfg.kernel!r}")
    if cfg.inner_lr <= 0:
        _fail("user_model.inner_lr", f"must be > 0, got {cfg.inner_lr}")
    if cfg.adapt_episodes < 0:
        _fail("user_model.adapt_episodes", f"must be >= 0, got {cfg.adapt_episodes}")
    if cfg.sensory_delay < 0:
        _fail("user_model.sensory_delay", f"must be >= 0, got {cfg.sensory_delay}")
    if cfg.sample_rate_hz <= 0:
        _fail("simulator.sample_rate_hz", f"must be > 0, got {cfg.sample_rate_hz}")
    if cfg.mass_kg <= 0:
        _fail("simulator.mass_kg", f"must be > 0, got {cfg.mass_kg}")


_INT_KEYS = {
    ("run", "budget"): "budget",
    ("run", "init_count"): "init_count",
    ("run", "master_seed"): "master_seed",
    ("optimizer", "scan_count"): "scan_count",
    ("optimizer", "ehvi_samples"): "ehvi_samples",
    ("user_model", "adapt_episodes"): "adapt_episodes",
    ("user_model", "episodes_per_eval"): "episodes_per_eval",
    ("user_model", "horizon"): "horizon",
    ("user_model", "sensory_delay"): "sensory_delay",
    ("user_model", "dwell_limit"): "dwell_limit",
}
_FLOAT_KEYS = {
    ("user_model", "inner_lr"): "inner_lr",
    ("simulator", "sample_rate_hz"): "sample_rate_hz",
    ("simulator", "mass_kg"): "mass_kg",
}
_STR_KEYS = {
    ("run", "provider"): "provider",
    ("optimizer", "kernel"): "kernel",
    ("user_model", "policy_path"): "policy_path",
}
_SECTIONS = ("design_space", "objectives", "optimizer", "user_model", "simulator", "run")


def parse_config(text: str) -> CidConfig:
    """Parse the sectioned document, filling defaults for missing keys.

    Raises:
        FormatError: syntax errors, unknown sections or keys, type or
            range violations; messages name ``section.key``.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise FormatError(f"config syntax error: {exc}") from exc

    values: dict = {}
    bounds = dict(DESIGN_BOUNDS)
    for section in parser.sections():
        if section not in _SECTIONS:
            _fail(section, f"unknown section; expected one of {_SECTIONS}")
        for key, raw in parser.items(section):
            path = f"{section}.{key}"
            if section == "design_space":
                if key not in DESIGN_FIELDS:
                    _fail(path, "unknown design parameter")
                parts = [p.strip() for p in raw.split(",")]
                if len(parts) != 2:
                    _fail(path, f"expected 'low, high', got {raw!r}")
                try:
                    bounds[key] = (float(parts[0]), float(parts[1]))
                except ValueError:
                    _fail(path, f"expected two numbers, got {raw!r}")
            elif section == "objectives":
                if key != "minimize":
                    _fail(path, "the only objectives key is 'minimize'")
                values["objectives"] = tuple(p.strip() for p in raw.split(",") if p.strip())
            elif (section, key) in _INT_KEYS:
                try:
                    values[_INT_KEYS[(section, key)]] = int(raw)
                except ValueError:
                    _fail(path, f"expected an integer, got {raw!r}")
            elif (section, key) in _FLOAT_KEYS:
                try:
                    values[_FLOAT_KEYS[(section, key)]] = float(raw)
                except ValueError:
                    _fail(path, f"expected a number, got {raw!r}")
            elif (section, key) in _STR_KEYS:
                values[_STR_KEYS[(section, key)]] = raw.strip()
            else:
                _fail(path, "unknown key")
    values["bounds"] = bounds
    if "budget" in values and values["budget"] < 1:
        _fail("run.budget", f"must be >= 1, got {values['budget']}")
    return CidConfig(**values)


def serialize_config(cfg: CidConfig) -> str:
    """Render a config as the sectioned text document, all keys explicit."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["design_space"] = {
        key: f"{cfg.bounds[key][0]!r}, {cfg.bounds[key][1]!r}" for key in DESIGN_FIELDS
    }
    parser["objectives"] = {"minimize": ", ".join(cfg.objectives)}
    parser["optimizer"] = {
        "scan_count": str(cfg.scan_count),
        "ehvi_samples": str(cfg.ehvi_samples),
        "kernel": cfg.kernel,
    }
    parser["user_model"] = {
        "inner_lr": repr(cfg.inner_lr),
        "adapt_episodes": str(cfg.adapt_episodes),
        "episodes_per_eval": str(cfg.episodes_per_eval),
        "horizon": str(cfg.horizon),
        "sensory_delay": str(cfg.sensory_delay),
        "dwell_limit": str(cfg.dwell_limit),
        "policy_path": cfg.policy_path,
    }
    parser["simulator"] = {
        "sample_rate_hz": repr(cfg.sample_rate_hz),
        "mass_kg": repr(cfg.mass_kg),
    }
    parser["run"] = {
        "provider": cfg.provider,
        "budget": str(cfg.budget),
        "init_count": str(cfg.init_count),
        "master_seed": str(cfg.master_seed),
    }
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def config_fingerprint(cfg: CidConfig) -> str:
    """Stable digest identifying a config for resume compatibility."""
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()
