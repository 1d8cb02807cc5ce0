"""Flat ``key = value`` experiment configuration with per-experiment defaults."""

from __future__ import annotations

import shlex
from pathlib import Path

EXPERIMENTS = ("cube", "convergence", "mumag5", "custom")


class ConfigError(ValueError):
    pass


_COMMON = {
    "strategy": "ab",
    "epsilon": "1e-10",
    "max_sweeps": "500",
    "first_step": "as-printed",
    "alpha": "1.0",
    "c_ex": "1.0",
    "out": "out",
    "seed": "0",
    "threads": "1",
    "stray": "true",
    "stray_testing": "galerkin",
    "stray_quadrature": "5",
    "stray_rtol": "1e-12",
    "snapshot_times": "",
}

DEFAULTS = {
    "cube": {
        "nx": "8", "ny": "8", "nz": "8",
        "lo": "0,0,0", "hi": "1,1,1",
        "k": "0.0016", "T": "5",
        "m0": "1,0,0",
        "applied_field": "-2,-0.5,0",
        "snapshot_times": "0,1,2,3,4,5",
    },
    "convergence": {
        "nx": "4", "ny": "4", "nz": "4",
        "lo": "0,0,0", "hi": "1,1,1",
        "T": "0.5",
        "k_list": "0.0004,0.0008,0.0016",
        "k_ref": "0.0001",
        "strategies": "mp,ab,ee",
        "reference_strategy": "mp",
        "m0": "1,0,0",
        "applied_field": "-2,-0.5,0",
    },
    "mumag5": {
        "nx": "20", "ny": "20", "nz": "2",
        "lo": "-50,-50,-5", "hi": "50,50,5",
        "length_scale": "1e-9",
        "exchange_A": "1.3e-11",
        "Ms": "8.0e5",
        "gamma0": "2.21e5",
        "alpha": "0.1",
        "relax_alpha": "1.0",
        "relax_T": "200",
        "T_ns": "8",
        "k": "0.1",
        "epsilon": "5e-5",
        "v_tilde": "-72.17,0,0",
        "xi": "0.05",
        "snapshot_times": "",
    },
    "custom": {
        "mesh_file": "",
        "nx": "4", "ny": "4", "nz": "4",
        "lo": "0,0,0", "hi": "1,1,1",
        "k": "0.001", "T": "0.1",
        "m0": "1,0,0",
        "applied_field": "0,0,0",
        "stray": "false",
        "anisotropy_axis": "",
        "zl_velocity": "",
        "zl_xi": "0.05",
    },
}


def parse_config_text(text, source="<string>"):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or any(c.isspace() for c in key):
            raise ConfigError(f"{source}:{lineno}: invalid key {key!r}")
        out[key] = value
    return out


def load_config(experiment, path=None, overrides=None):
    """Defaults for ``experiment`` updated by the file at ``path`` and ``overrides``."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    cfg = dict(_COMMON)
    cfg.update(DEFAULTS[experiment])
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg.update(parse_config_text(text, str(path)))
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = str(value)
    cfg["experiment"] = experiment
    return Config(cfg)


class Config(dict):
    """String-valued config with typed accessors that raise ``ConfigError``."""

    def _raw(self, key):
        if key not in self:
            raise ConfigError(f"missing config key {key!r}")
        return self[key]

    def str(self, key):
        return self._raw(key)

    def float(self, key, positive=False):
        try:
            v = float(self._raw(key))
        except ValueError:
            raise ConfigError(f"{key} = {self[key]!r} is not a number") from None
        if positive and not v > 0:
            raise ConfigError(f"{key} must be positive, got {v}")
        return v

    def int(self, key, minimum=None):
        try:
            v = int(self._raw(key))
        except ValueError:
            raise ConfigError(f"{key} = {self[key]!r} is not an integer") from None
        if minimum is not None and v < minimum:
            raise ConfigError(f"{key} must be at least {minimum}, got {v}")
        return v

    def bool(self, key):
        v = self._raw(key).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} = {self[key]!r} is not a boolean")

    def floats(self, key, length=None):
        raw = self._raw(key).strip()
        if not raw:
            return []
        try:
            vals = [float(s) for s in raw.replace(";", ",").split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"{key} = {raw!r} is not a comma-separated list of numbers") from None
        if length is not None and len(vals) != length:
            raise ConfigError(f"{key} needs {length} values, got {len(vals)}")
        return vals

    def words(self, key):
        return [s.strip() for s in self._raw(key).split(",") if s.strip()]

    def dump(self):
        lines = [f"{k} = {shlex.quote(v) if ' ' in v else v}" for k, v in sorted(self.items())]
        return "\n".join(lines) + "\n"
