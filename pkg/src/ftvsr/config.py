"""Run configuration: defaults < config file < command-line flags, with the
FTVSR_SEED environment variable overriding the seed last. The resolved
config is echoed verbatim into the output directory so every run is
reproducible from its artifacts.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields

from ftvsr.video_attention import SCHEME_KINDS

SEED_ENV_VAR = "FTVSR_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    scale: int = 2
    block_size: int = 4
    token_edge: int = 2
    scheme: str = "st"
    attention: str = "fa"          # "fa" | "dfa"
    head_count: int = 1
    hidden_channels: int = 8
    phi_width: int = 16
    base_lr: float = 2e-4
    total_steps: int = 500
    checkpoint_every: int = 0      # 0: only at the end
    jobs: int = 1

    def validate(self) -> "RunConfig":
        if self.scale < 1:
            raise ConfigError(f"scale must be >= 1, got {self.scale}")
        for name in ("block_size", "token_edge", "head_count", "hidden_channels",
                     "phi_width", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.scheme not in SCHEME_KINDS:
            raise ConfigError(f"scheme must be one of {SCHEME_KINDS}, got {self.scheme!r}")
        if self.attention not in ("fa", "dfa"):
            raise ConfigError(f"attention must be 'fa' or 'dfa', got {self.attention!r}")
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be positive, got {self.base_lr}")
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")
        return self

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name}={getattr(self, f.name)}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, kind, value: str):
    try:
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc


def parse_config_file(path: str) -> dict[str, object]:
    """key=value lines; '#' starts a comment; unknown keys rejected."""
    known = {f.name: f.type for f in fields(RunConfig)}
    types = {"seed": int, "scale": int, "block_size": int, "token_edge": int,
             "scheme": str, "attention": str, "head_count": int,
             "hidden_channels": int, "phi_width": int, "base_lr": float,
             "total_steps": int, "checkpoint_every": int, "jobs": int}
    out: dict[str, object] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _coerce(key, types[key], value.strip())
    return out


def resolve_config(config_path: str | None, overrides: dict[str, object]) -> RunConfig:
    """Merge defaults, config file, explicit flags, then the seed env var."""
    merged: dict[str, object] = {}
    if config_path:
        merged.update(parse_config_file(config_path))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        merged["seed"] = _coerce("seed", int, env_seed)
    return RunConfig(**merged).validate()


def echo_config(config: RunConfig, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(config.to_text())
