"""TOML run configuration.

Every section has defaults; unknown keys are errors so that a typo cannot
silently fall back to a default.  The config hash is the SHA-256 of the
canonical JSON form and is stamped on every output file.
"""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from pathlib import Path

from .errors import ConfigurationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULTS = {
    "seed": 0,
    "output_dir": "stripstab-out",
    "profile": {"kind": "poiseuille", "beta": 10.0, "path": None},
    "discretization": {"N": 128},
    "spectrum": {"alpha": 2.0, "nu": 5e-5, "eigenfunction": True},
    "neutral": {"nu_min": 2e-5, "nu_max": 8.5e-5, "points": 12, "branch": "upper"},
    "audit": {"nu": 8e-5, "alpha_min": 0.25, "alpha_max": 4.0, "scan_points": 16},
    "green": {"alpha": 2.0, "nu": 1e-4, "lambda_min": 1e2, "lambda_max": 1e4,
              "samples": 9, "forcings": 4},
    "hopf": {"nu": 8e-5, "gauge": "pressure"},
    "simulate": {"mu": None, "a0_re": None, "a0_im": 0.0, "t_final": 200.0, "dt": 0.01,
                 "stride": 10},
    "roll": {"mu": None, "nx": 65, "nt": 4},
    "pipeline": {"nu": 8e-5, "critical": True, "critical_nu_min": 5e-5,
                 "critical_nu_max": 1.2e-4, "critical_alpha_min": 1.5,
                 "critical_alpha_max": 2.6, "mu_fraction": 1e-3},
    "sweep": {"nus": [7e-5, 8e-5], "workers": 1},
}

BRANCHES = ("upper", "lower")
GAUGES = ("pressure", "flux")


def _merge(base, override, where=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise ConfigurationError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigurationError(f"config key {where}{key!r} must be a table")
            out[key] = _merge(base[key], val, f"{where}{key}.")
        else:
            out[key] = val
    return out


class RunConfig:
    """Resolved configuration; attribute access by section, e.g. ``cfg.hopf["nu"]``."""

    def __init__(self, data=None, base_dir: Path | None = None):
        self.data = _merge(DEFAULTS, data or {})
        self.base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
        path = self.data["profile"]["path"]
        if path is not None:
            p = Path(path)
            if not p.is_absolute():
                p = self.base_dir / p
            self.data["profile"]["path"] = str(p)
        self.validate()

    def __getattr__(self, name):
        data = self.__dict__.get("data", {})
        if name in data:
            return data[name]
        raise AttributeError(name)

    @property
    def N(self) -> int:
        return int(self.data["discretization"]["N"])

    def validate(self):
        d = self.data
        if int(d["discretization"]["N"]) < 16:
            raise ConfigurationError("discretization.N must be >= 16")
        if d["neutral"]["branch"] not in BRANCHES:
            raise ConfigurationError(f"neutral.branch must be one of {BRANCHES}")
        if d["hopf"]["gauge"] not in GAUGES:
            raise ConfigurationError(f"hopf.gauge must be one of {GAUGES}")
        for sec in ("spectrum", "audit", "green", "hopf", "pipeline"):
            if not float(d[sec]["nu"]) > 0:
                raise ConfigurationError(f"{sec}.nu must be positive")
        if d["profile"]["kind"] == "tabulated":
            path = d["profile"]["path"]
            if path is None or not Path(path).is_file():
                raise ConfigurationError(f"tabulated profile file not found: {path}")
        if not float(d["green"]["lambda_max"]) > float(d["green"]["lambda_min"]) > 0:
            raise ConfigurationError("need 0 < green.lambda_min < green.lambda_max")

    def override(self, section: str | None, **values) -> "RunConfig":
        """Copy with the given keys replaced (None values are ignored)."""
        data = copy.deepcopy(self.data)
        target = data if section is None else data[section]
        for k, v in values.items():
            if v is not None:
                if k not in target:
                    raise ConfigurationError(f"unknown config key {k!r}")
                target[k] = v
        return RunConfig(data, self.base_dir)

    def to_dict(self):
        return copy.deepcopy(self.data)

    def hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return RunConfig(data, path.parent)
