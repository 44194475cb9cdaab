"""Run configuration: one JSON document with three optional sections."""

from dataclasses import asdict, dataclass, field, fields
import hashlib
import json

import numpy as np

from .errors import ConfigError
from .model import Hyperparameters
from .sampler import SamplerConfig
from .simulation import SimConfig

SECTIONS = ("simulation", "hyperparameters", "sampler")
HYPER_KEYS = ("a0", "b0", "av", "bv", "kappa0", "mu0", "R0", "Mmax", "Pmax", "state_floor", "omega_diag_upper")


@dataclass
class RunConfig:
    simulation: dict = field(default_factory=dict)
    hyperparameters: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)

    def sim_config(self, seed=None):
        kw = dict(self.simulation)
        if seed is not None:
            kw["seed"] = seed
        return _build(SimConfig, kw, "simulation")

    def sampler_config(self, seed=None, thin=None, chains=None):
        kw = dict(self.sampler)
        for key, val in (("seed", seed), ("thin", thin), ("chains", chains)):
            if val is not None:
                kw[key] = val
        return _build(SamplerConfig, kw, "sampler")

    def hyper(self, D):
        kw = dict(self.hyperparameters)
        mu0 = kw.pop("mu0", 0.0)
        R0 = kw.pop("R0", 0.1)
        kw["mu0"] = np.broadcast_to(np.asarray(mu0, dtype=float), (D,)).copy() if np.ndim(mu0) == 0 else mu0
        kw["R0"] = float(R0) * np.eye(D) if np.ndim(R0) == 0 else R0
        try:
            return Hyperparameters(D=D, **kw)
        except ConfigError:
            raise
        except (TypeError, ValueError, np.linalg.LinAlgError) as exc:
            raise ConfigError(str(exc), _guess_field("hyperparameters", exc, kw)) from None

    def as_dict(self):
        return asdict(self)

    def digest(self):
        return config_hash(self.as_dict())


def _guess_field(section, exc, kw):
    msg = str(exc)
    for key in kw:
        if msg.startswith(key) or f"'{key}'" in msg or f" {key} " in f" {msg} ":
            return f"{section}.{key}"
    return section


def _build(cls, kw, section):
    try:
        return cls(**kw)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], f"{section}.{exc.field}" if exc.field else section) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), _guess_field(section, exc, kw)) from None


def _check_keys(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ConfigError("expected a JSON object", where or None)
    for key in doc:
        if key not in allowed:
            raise ConfigError("unknown key", f"{where}.{key}" if where else key)


def parse_config(doc):
    """Validate the structure of a config document; unknown keys are errors."""
    _check_keys(doc, SECTIONS, "")
    sim_keys = tuple(f.name for f in fields(SimConfig))
    samp_keys = tuple(f.name for f in fields(SamplerConfig))
    _check_keys(doc.get("simulation", {}), sim_keys, "simulation")
    _check_keys(doc.get("hyperparameters", {}), HYPER_KEYS, "hyperparameters")
    _check_keys(doc.get("sampler", {}), samp_keys, "sampler")
    cfg = RunConfig(
        simulation=dict(doc.get("simulation", {})),
        hyperparameters=dict(doc.get("hyperparameters", {})),
        sampler=dict(doc.get("sampler", {})),
    )
    if cfg.simulation:
        cfg.sim_config()
    cfg.sampler_config()
    return cfg


def load_config(path):
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", str(path)) from None
    except OSError as exc:
        raise ConfigError(str(exc), str(path)) from None
    return parse_config(doc)


def config_hash(doc):
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serialisable: {type(x)}")
