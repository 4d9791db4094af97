"""Run configuration, loadable from an INI-style [run] section."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import require
from .inifmt import Section, load_sections

_MODES = ("translate", "edit", "long")
_PROPAGATION = ("warp", "tokens", "three-level")


@dataclass
class RunConfig:
    mode: str = "translate"
    prompt: str | None = None
    strength: float = 0.75  # fraction of T where sampling starts
    batch_size: int = 8
    steps: int = 20
    beta_first: float = 1e-4
    beta_last: float = 0.02
    seed: int = 0
    denoiser_seed: int = 0
    block_size: int = 8
    radius: int = 4
    lam_spat: float = 50.0
    lam_s: float = 5.0
    lam_t: float = 5.0
    opt_iterations: int = 20
    opt_lr: float = 0.4
    enable_opt: bool = True
    enable_spatial_attn: bool = True
    enable_cross_frame: bool = True
    enable_temporal_attn: bool = True
    spat_in_edit: bool = False  # the spatial loss is dropped when editing unless asked for
    opt_steps_limit: int = 0  # optimize features only at the first k sampling steps; 0 = all
    s_min: int = 2
    s_max: int = 6
    propagation: str = "warp"
    long_base: str = "translate"  # per-batch manipulation used by long runs
    cyclic_keys: int = 3
    frame_rate: float = 8.0

    def __post_init__(self):
        require(self.mode in _MODES, f"mode must be one of {_MODES}, got {self.mode!r}")
        require(self.propagation in _PROPAGATION, f"propagation must be one of {_PROPAGATION}, got {self.propagation!r}")
        require(self.long_base in ("translate", "edit"), f"long_base must be translate or edit, got {self.long_base!r}")
        require(0.0 <= self.strength <= 1.0, "strength must be in [0, 1]")
        require(self.batch_size >= 3, "batch size must be >= 3")
        require(self.steps >= 1, "need at least one diffusion step")
        require(1 <= self.s_min <= self.s_max, "need 1 <= s_min <= s_max")
        require(self.cyclic_keys >= 1, "cyclic_keys must be >= 1")


def _coerce(raw: str, target_type):
    if target_type is bool:
        low = raw.lower()
        require(low in ("1", "0", "true", "false", "yes", "no"), f"not a boolean: {raw!r}")
        return low in ("1", "true", "yes")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    return raw


def config_from_sections(sections: list[Section], overrides: dict | None = None) -> RunConfig:
    kv: dict[str, str] = {}
    for name, pairs in sections:
        if name in ("", "run"):
            kv.update(pairs)
    by_name = {f.name: f for f in fields(RunConfig)}
    parsed = {}
    for key, raw in kv.items():
        require(key in by_name, f"unknown config key {key!r}")
        f = by_name[key]
        target = {"str": str, "int": int, "float": float, "bool": bool}.get(
            f.type.replace(" | None", ""), str
        )
        parsed[key] = _coerce(raw, target)
    if overrides:
        for key in overrides:
            require(key in by_name, f"unknown config key {key!r}")
        parsed.update(overrides)
    return RunConfig(**parsed)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    return config_from_sections(load_sections(path), overrides)
