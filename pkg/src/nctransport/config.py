"""Flat ``key = value`` scenario configuration.

Blank lines and ``#`` comments are ignored. Unknown keys and malformed values
raise :class:`ConfigError`. Defaults reproduce the pebble-bed example
(``<s^2> = 6.2898``, atomic-mix ``sigma_t = 0.5934``, ``c = 0.99``).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

_NOT_RECORDED = ("workers", "out")

SCENARIOS = ("curves", "moments", "mc", "integral", "compare")
LAWS = ("diffusion_matched", "classical", "tabulated")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    scenario: str = "compare"
    law: str = "diffusion_matched"
    ms2: float = 6.2898
    sigmabar: float = 0.5934
    sigma_t: float | None = None      # classical law; defaults to sigmabar
    table: str | None = None          # tabulated law file
    c: float = 0.99
    strength: float = 1.0
    histories: int = 1_000_000
    seed: int = 12345
    workers: int = 1
    implicit_capture: bool = False
    track_length: bool = False
    shells: int = 60
    r_max: float | None = None        # default 12/kappa
    grid_nodes: int = 400
    tol: float = 1e-8
    max_iters: int | None = None      # default ceil(ln tol / ln c) + 50
    mfp_true: float | None = None     # true medium <s>; default 1/sigmabar
    curve_points: int = 500
    curve_s_max: float = 10.0
    moments_tol: float = 1e-8
    integral_rtol: float = 0.01
    integral_r_min: float = 0.5
    integral_r_max: float = 10.0
    mc_sigma: float = 3.0
    mc_max_rel_err: float = 0.02
    mc_r_min: float = 1.0
    mc_r_max: float = 8.0
    out: str = "."

    def __post_init__(self):
        self.validate()

    # --- derived -----------------------------------------------------------

    @property
    def classical_sigma_t(self) -> float:
        return self.sigmabar if self.sigma_t is None else self.sigma_t

    @property
    def true_mean_free_path(self) -> float:
        return 1.0 / self.sigmabar if self.mfp_true is None else self.mfp_true

    # --- validation ----------------------------------------------------------

    def validate(self):
        def positive(name):
            v = getattr(self, name)
            if v is not None and not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")

        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {', '.join(SCENARIOS)}")
        if self.law not in LAWS:
            raise ConfigError(f"unknown law {self.law!r}; expected one of {', '.join(LAWS)}")
        for name in ("ms2", "sigmabar", "sigma_t", "r_max", "tol", "mfp_true", "curve_s_max",
                     "moments_tol", "integral_rtol", "integral_r_max", "mc_sigma", "mc_max_rel_err",
                     "mc_r_max", "histories", "workers", "shells", "grid_nodes", "max_iters",
                     "curve_points"):
            positive(name)
        if not (0.0 <= self.c < 1.0):
            raise ConfigError(f"c must lie in [0, 1), got {self.c!r}")
        if self.strength < 0:
            raise ConfigError("strength must be >= 0")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.grid_nodes < 8:
            raise ConfigError("grid_nodes must be at least 8")
        if self.curve_points < 2:
            raise ConfigError("curve_points must be at least 2")
        if self.law == "tabulated" and not self.table:
            raise ConfigError("law = tabulated needs a 'table' file")
        if self.integral_r_min < 0 or self.mc_r_min < 0:
            raise ConfigError("comparison ranges must start at r >= 0")
        if self.scenario == "compare" and self.law != "diffusion_matched":
            raise ConfigError("compare needs law = diffusion_matched (the oracle is exact only for it)")

    # --- (de)serialisation ----------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {_format(v)}")
        return "\n".join(lines) + "\n"

    def one_line(self) -> str:
        """Settings that determine the results; ``workers`` and ``out`` do not."""
        return "; ".join(f"{f.name}={_format(getattr(self, f.name))}" for f in fields(self)
                         if f.name not in _NOT_RECORDED)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def _format(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def _coerce(key: str, raw: str):
    typ = _TYPES[key]
    raw = raw.strip()
    optional = "None" in typ
    if optional and raw.lower() in ("auto", "none", ""):
        return None
    base = typ.split("|")[0].strip()
    try:
        if base == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if base == "int":
            return int(raw.replace("_", ""))
        if base == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r} (expected {base})") from None


def parse_overrides(pairs: dict) -> dict:
    out = {}
    for key, raw in pairs.items():
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = raw if not isinstance(raw, str) else _coerce(key, raw)
    return out


def parse_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def load_config(path=None, overrides: dict | None = None) -> ScenarioConfig:
    """Config from an optional file, then ``overrides`` (which win)."""
    values = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        values.update(parse_text(text, str(path)))
    values.update(parse_overrides(overrides or {}))
    try:
        return ScenarioConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def from_text(text: str) -> ScenarioConfig:
    return ScenarioConfig(**parse_text(text))
