"""Run configuration: TOML/JSON files with strict key validation."""

import json
from dataclasses import asdict, dataclass, fields

from .errors import InputError


@dataclass
class RunConfig:
    """Parameters shared by the CLI subcommands.

    Every numeric field is validated against its documented range; the
    whole config is echoed verbatim into every output artifact.
    """

    foliation: dict = None           # {"builtin": ..., ...} or components
    horizon: float = 50.0
    n_paths: int = 200
    grid: int = 32
    eta_method: str = "CHAIN_REFINED"
    eta_depth: int = 8
    eta_cloud: int = 1200
    dt_max: float = 0.01
    seed: int = 20240101
    workers: int = 1
    kappa_every: int = 16
    burn_frac: float = 0.1
    out_dir: str = "."
    cache_dir: str = None
    plot: bool = True

    def validate(self):
        if not 0 < self.horizon <= 1e5:
            raise InputError("horizon must lie in (0, 1e5]")
        if not 1 <= self.n_paths <= 10_000_000:
            raise InputError("n_paths must lie in [1, 1e7]")
        if not 2 <= self.grid <= 4096:
            raise InputError("grid must lie in [2, 4096]")
        if self.eta_method not in ("FLOW_DISC", "CHAIN_REFINED",
                                   "REFERENCE_EXACT"):
            raise InputError(f"unknown eta method {self.eta_method!r}")
        if not 0 <= self.eta_depth <= 64:
            raise InputError("eta_depth must lie in [0, 64]")
        if not 0 < self.dt_max <= 0.5:
            raise InputError("dt_max must lie in (0, 0.5]")
        if not 0 <= self.seed < 2 ** 64:
            raise InputError("seed must be a 64-bit unsigned integer")
        if not 1 <= self.workers <= 256:
            raise InputError("workers must lie in [1, 256]")
        if not 0 <= self.burn_frac < 0.9:
            raise InputError("burn_frac must lie in [0, 0.9)")
        return self

    def echo(self):
        return asdict(self)


def load_config(path):
    """Load a TOML or JSON config file; unknown keys are errors."""
    raw = open(path, "rb").read()
    if str(path).endswith(".toml"):
        try:
            import tomllib as toml
        except ImportError:
            import tomli as toml
        data = toml.loads(raw.decode())
    else:
        data = json.loads(raw.decode())
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**data).validate()
