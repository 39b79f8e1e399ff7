"""Run configuration: a flat key = value file, mirrored one-to-one by
command-line flags (flags win). Unknown keys and constraint violations are
usage errors. The effective configuration is echoed next to every run's
artifacts and its digest is embedded in them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .geometry import Box, Disk, Domain, unit_area_disk

SCHEMA_VERSION = 1

_UNIT_DISK_RADIUS = unit_area_disk().radius


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2."""


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    domain_shape: str = "disk"
    dim: int = 2
    domain_size: float = _UNIT_DISK_RADIUS
    alpha: float = 0.5
    lambdas: list = field(default_factory=lambda: [100.0])
    c: float = 1.0
    beta0: object = 0.5
    n0: float = 0.0
    seed: int = 20250811
    n_spatial: int = 16
    n_mark: int = 3
    t_mark: float | None = None
    replicates: list = field(default_factory=lambda: [1000])
    workers: int = 1
    output_dir: str = "out"
    pair_distance: float = 0.3
    test_mark_x: float = 1.0
    test_mark_y: float = 1.0
    convention: str = "exclude-desired"
    eps1: float | None = None
    eps2: float | None = None
    entropy_method: str = "quadrature"
    mc_budget: int = 1_000_000
    bound: float = 1.0
    tol: float = 1e-6

    def domain(self) -> Domain:
        if self.domain_shape == "disk":
            return Disk(radius=self.domain_size)
        return Box(dim=self.dim, side=self.domain_size)

    def flat_items(self) -> list[tuple[str, str]]:
        return [(f.name, format_value(getattr(self, f.name))) for f in fields(self)]

    def digest(self) -> str:
        text = "\n".join(f"{k} = {v}" for k, v in self.flat_items())
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_FIELD_NAMES = {f.name for f in fields(RunConfig)}

# file/flag spelling for keys whose internal name differs
_ALIASES = {"lambda": "lambdas", "n_s": "n_spatial", "n_m": "n_mark"}

# defaults applied per subcommand when the user did not set the key;
# connectivity uses a small coefficient so the finite-domain bias of the
# closed form stays well inside the Monte Carlo resolution
SUITE_DEFAULTS: dict[str, dict] = {
    "simulate": {"lambdas": [100.0]},
    "verify-connectivity": {
        "lambdas": [100.0],
        "replicates": [100_000],
        "alpha": 0.5,
        "beta0": 0.05,
    },
    "entropy": {},
    "aep": {"lambdas": [25.0, 50.0, 100.0], "replicates": [50]},
    "wlln": {
        "lambdas": [100.0, 1000.0, 10000.0],
        "replicates": [60, 40, 12],
    },
    "concentration": {"lambdas": [100.0], "replicates": [100_000]},
    "rate": {},
    "sweep": {"lambdas": [100.0, 1000.0, 10000.0]},
}


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    return str(value)


def _parse_scalar(text: str):
    text = text.strip()
    if text == "":
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def parse_value(key: str, text: str):
    """Parse one raw value string for a known key."""
    text = text.strip()
    if key in ("lambdas", "replicates"):
        if text == "":
            raise ConfigError(f"{key} must not be empty")
        return [_parse_scalar(part) for part in text.split(",")]
    if key == "beta0" and ":" in text:
        rows = []
        for part in text.split(","):
            upper, value = part.split(":")
            upper = upper.strip()
            rows.append(
                [None if upper in ("", "inf") else float(upper), float(value)]
            )
        return rows
    return _parse_scalar(text)


def read_config_file(path) -> dict:
    """Flat key = value lines; '#' starts a comment."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, text = line.split("=", 1)
        key = key.strip()
        canonical = _ALIASES.get(key, key)
        if canonical not in _FIELD_NAMES:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
        values[canonical] = parse_value(canonical, text)
    return values


def build_config(
    subcommand: str,
    file_values: dict | None = None,
    flag_values: dict | None = None,
) -> RunConfig:
    """Defaults, overlaid by per-subcommand defaults, the config file, then
    explicit flags."""
    merged: dict = {}
    merged.update(SUITE_DEFAULTS.get(subcommand, {}))
    merged.update(file_values or {})
    merged.update({k: v for k, v in (flag_values or {}).items() if v is not None})
    unknown = set(merged) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    config = RunConfig(**merged)
    _normalize(config)
    _validate(config, subcommand)
    return config


def _normalize(config: RunConfig):
    if not isinstance(config.lambdas, (list, tuple)):
        config.lambdas = [config.lambdas]
    config.lambdas = [float(v) for v in config.lambdas]
    if not isinstance(config.replicates, (list, tuple)):
        config.replicates = [config.replicates]
    config.replicates = [int(v) for v in config.replicates]


def _validate(config: RunConfig, subcommand: str):
    def need(cond: bool, message: str):
        if not cond:
            raise ConfigError(message)

    need(config.schema_version == SCHEMA_VERSION,
         f"unrecognized schema_version {config.schema_version}")
    need(config.domain_shape in ("disk", "box"),
         "domain_shape must be 'disk' or 'box'")
    if config.domain_shape == "disk":
        need(config.dim == 2, "disk domains require dim = 2")
    need(config.dim >= 1, "dim must be a positive integer")
    need(config.domain_size > 0, "domain_size must be positive")
    need(config.alpha > 0, "alpha must be positive")
    need(config.alpha < config.dim,
         f"alpha < d required for the kernel integrals (alpha={config.alpha}, d={config.dim})")
    need(all(v > 0 for v in config.lambdas), "lambda must be positive")
    need(sorted(config.lambdas) == config.lambdas, "lambda list must be increasing")
    need(config.c > 0, "c must be positive")
    need(config.n0 >= 0, "n0 must be nonnegative")
    need(all(r >= 1 for r in config.replicates), "replicates must be at least 1")
    need(len(config.replicates) in (1, len(config.lambdas)),
         "replicates must be a single count or one per lambda")
    need(config.n_spatial >= 1 and config.n_mark >= 1,
         "partition sizes must be positive")
    need(config.workers >= 1, "workers must be at least 1")
    need(config.convention in ("paper-literal", "exclude-desired"),
         "convention must be 'paper-literal' or 'exclude-desired'")
    need(config.entropy_method in ("quadrature", "monte-carlo"),
         "entropy_method must be 'quadrature' or 'monte-carlo'")
    need(config.bound > 0, "bound must be positive")
    need(config.tol > 0, "tol must be positive")
    if subcommand == "simulate":
        need(len(config.lambdas) == 1, "simulate takes a single lambda")
    if subcommand in ("verify-connectivity", "concentration"):
        need(len(config.lambdas) == 1, f"{subcommand} takes a single lambda")
    if subcommand == "verify-connectivity":
        need(config.n0 == 0.0, "the connectivity formula requires n0 = 0")


def write_effective_config(config: RunConfig, subcommand: str, path) -> None:
    lines = [f"# effective configuration ({subcommand})"]
    lines += [f"{k} = {v}" for k, v in config.flat_items()]
    Path(path).write_text("\n".join(lines) + "\n")
