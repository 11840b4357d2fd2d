"""Run configuration: declarative key = value files with typed defaults.

Config files are flat `key = value` lines; `#` starts a comment. Lists are
comma-separated. Unknown keys and missing required fields are configuration
errors. Defaults follow the simulator's base hyperparameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, asdict
from pathlib import Path

from .errors import ConfigError

ALGORITHMS = ("dcpfl", "fedavg", "standalone", "fixed_group", "naive_dynamic")


@dataclass
class RunConfig:
    # population and data
    n_clients: int = 20
    layer_dims: list[int] = field(default_factory=lambda: [16, 32, 10])
    num_classes: int = 10
    sigma_p_min: float = 40.0
    sigma_p_max: float = 60.0
    sigma_s_min: float = 20.0
    sigma_s_max: float = 40.0
    samples_per_client: int = 100
    center_spread: float = 0.5
    test_fraction: float = 0.2
    # local training
    lr: float = 0.05
    local_epochs: int = 2
    batch_size: int = 32
    # controller / schedule
    tau: int = 5
    alpha: int = 3
    lambda_gamma: float = 0.2
    t_obv: int = 3
    t_sp: int = 6
    window: int = 5
    t_start: int = 5
    # run shape
    max_rounds: int = 60
    link_rate: float = 2e6  # bits per second
    comp_time_per_sample: float = 1e-4  # seconds
    seed: int = 0
    algorithm: str = "dcpfl"
    gamma_tilde: float = 1.0  # cut level for fixed_group / naive_dynamic
    split_round: int = 50  # naive_dynamic only

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.n_clients < 1:
            raise ConfigError("n_clients must be >= 1")
        if len(self.layer_dims) < 2:
            raise ConfigError("layer_dims needs at least input and output widths")
        if self.layer_dims[-1] != self.num_classes:
            raise ConfigError(
                f"layer_dims output width {self.layer_dims[-1]} != num_classes {self.num_classes}"
            )
        if not 0.0 <= self.gamma_tilde <= 1.0:
            raise ConfigError("gamma_tilde must be in [0, 1]")
        if self.sigma_p_min > self.sigma_p_max or self.sigma_s_min > self.sigma_s_max:
            raise ConfigError("skew ranges must have min <= max")
        if self.sigma_p_max + self.sigma_s_max > 100.0:
            raise ConfigError("sigma_p_max + sigma_s_max must not exceed 100")
        for name in (
            "samples_per_client", "lr", "local_epochs", "batch_size", "tau",
            "t_obv", "t_sp", "window", "t_start", "max_rounds", "link_rate",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.alpha <= 1:
            raise ConfigError("alpha must be > 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must be in (0, 1)")
        if self.lambda_gamma < 0:
            raise ConfigError("lambda_gamma must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def _parse_value(raw: str, typ, key: str):
    raw = raw.strip()
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
        if typ == list[int] or typ == "list[int]":
            return [int(v) for v in raw.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    raise ConfigError(f"unsupported type for {key}")


def parse_kv_file(path) -> dict[str, str]:
    """Read a flat key = value file into a string dict."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from a key = value file (plus optional overrides)."""
    raw = parse_kv_file(path)
    if overrides:
        raw.update({k: str(v) for k, v in overrides.items()})
    if "algorithm" not in raw:
        raise ConfigError("missing required field: algorithm")
    known = {f.name: f.type for f in fields(RunConfig)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config field: {key}")
        typ = known[key]
        if isinstance(typ, str):
            typ = {"int": int, "float": float, "str": str, "list[int]": "list[int]"}[typ]
        kwargs[key] = _parse_value(value, typ, key)
    return RunConfig(**kwargs)
