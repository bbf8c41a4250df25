"""Run configuration: a flat key-value file with [model] and [lite] sections.

The format is a TOML subset (sections, scalar assignments, # comments); it is
parsed here directly so the package has no parser dependency on Python 3.10.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


def _parse_scalar(text: str):
    text = text.strip()
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_flat_toml(text: str) -> dict[str, dict]:
    out: dict[str, dict] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            out.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: assignment before any [section]")
        key, val = line.split("=", 1)
        out[section][key.strip()] = _parse_scalar(val)
    return out


@dataclass
class RunConfig:
    """Everything a run needs; mirrors the two config-file sections."""

    # [model]
    model: str = "ising"
    j: float = 1.0
    h_t: float = 1.4
    h_l: float = 0.9045
    gamma: float = 0.5
    beta: float = 0.05
    bump_width: int = 3
    bump_polarization: float = -0.2
    chain_length: int = 0  # finite chain (compare-oracle); 0 = infinite

    # [lite]
    lmin: int = 3
    lmax: int = 5
    q_max_percent: float = 0.5  # minimization trigger, percent of total info
    w: float = 1e-5
    damping: float = 0.9
    p_boundary: float = 1e-12
    q_lstar: float = 1e-10
    rk_error: float = 1e-8
    dt_min: float = 1e-9
    dt_init: float = 1e-3
    alpha: float = 1e-8
    t_final: float = 30.0
    output_stride: int = 1
    snapshot_stride: int = 0
    seed: int = 1
    threads: int = 1
    minimization: bool = True

    def validate(self) -> None:
        if self.model not in ("ising", "xx_dephasing"):
            raise ConfigError(f"unknown model {self.model!r}")
        if not self.lmin < self.lmax:
            raise ConfigError("lmin must be smaller than lmax")
        for name in ("q_max_percent", "w", "p_boundary", "q_lstar", "rk_error", "dt_min", "dt_init"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.damping <= 1:
            raise ConfigError("damping must be in (0, 1]")
        if self.t_final <= 0:
            raise ConfigError("t_final must be positive")
        if self.bump_width < 1:
            raise ConfigError("bump_width must be at least 1")
        if self.gamma < 0:
            raise ConfigError("gamma must be non-negative")

    @staticmethod
    def from_file(path: str | Path) -> "RunConfig":
        data = parse_flat_toml(Path(path).read_text())
        return RunConfig.from_sections(data)

    @staticmethod
    def from_sections(data: dict[str, dict]) -> "RunConfig":
        known = {f.name: f.type for f in fields(RunConfig)}
        merged: dict = {}
        for section in ("model", "lite"):
            for key, val in data.get(section, {}).items():
                if key == "name" and section == "model":
                    merged["model"] = val
                    continue
                if key not in known:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                merged[key] = val
        cfg = RunConfig(**merged)
        # Integer fields may arrive as floats from the parser.
        for name in ("bump_width", "lmin", "lmax", "output_stride", "snapshot_stride", "seed", "threads", "chain_length"):
            setattr(cfg, name, int(getattr(cfg, name)))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
