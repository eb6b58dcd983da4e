"""Flat key=value run configuration with documented defaults."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


@dataclass
class RunConfig:
    k: int = 1                      # invariant latent width (2 for large molecules)
    tau: float = 2.0                # local-edge radius, Angstrom
    T: int = 1000                   # diffusion steps
    schedule_kind: str = "linear"   # linear | polynomial
    sigma_mode: str = "beta_tilde"  # beta_tilde | beta | unit
    reg_mode: str = "ES"            # ES | KL
    kl_weight: float = 1.0
    gamma_weighting: bool = False
    var_noise_source: str = "normal"   # normal | uniform | encoder
    var_noise_scale: str = "squared"   # squared | linear
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_steps: int = 2000
    es_patience: int = 5
    hidden_dim: int = 64
    n_layers: int = 2
    n_conv: int = 2
    noise_dim: int = 2
    time_dim: int = 8
    cond_dim: int = 0
    seed: int = 0
    cond_properties: str = ""       # comma-separated sidecar property names

    def validate(self) -> None:
        if self.k < 1 or self.T < 2 or self.tau <= 0:
            raise ValueError("k >= 1, T >= 2, tau > 0 required")
        if self.schedule_kind not in ("linear", "polynomial"):
            raise ValueError(f"bad schedule_kind {self.schedule_kind!r}")
        if self.sigma_mode not in ("beta_tilde", "beta", "unit"):
            raise ValueError(f"bad sigma_mode {self.sigma_mode!r}")
        if self.reg_mode not in ("ES", "KL"):
            raise ValueError(f"bad reg_mode {self.reg_mode!r}")
        if self.var_noise_source not in ("normal", "uniform", "encoder"):
            raise ValueError(f"bad var_noise_source {self.var_noise_source!r}")
        if self.var_noise_scale not in ("squared", "linear"):
            raise ValueError(f"bad var_noise_scale {self.var_noise_scale!r}")
        if min(self.learning_rate, self.batch_size, self.max_steps + 1) <= 0:
            raise ValueError("numeric fields must be positive")

    def to_dict(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = str(v).lower() if isinstance(v, bool) else str(v)
        return out


def parse_config(pairs: dict[str, str] | None = None,
                 path: str | Path | None = None) -> RunConfig:
    """Build a RunConfig from a key=value file and/or explicit overrides.

    Unknown keys are rejected.
    """
    values: dict[str, str] = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key=value")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    if pairs:
        values.update(pairs)

    cfg = RunConfig()
    known = {f.name: f.type for f in fields(RunConfig)}
    casts = {"int": int, "float": float, "str": str,
             "bool": lambda s: str(s).lower() in ("1", "true", "yes", "on")}
    for key, raw in values.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        setattr(cfg, key, casts[known[key]](raw))
    cfg.validate()
    return cfg
