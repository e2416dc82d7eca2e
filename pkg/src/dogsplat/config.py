"""Run configuration: schema, defaults, and the flat key=value file format.

Defaults mirror the full-scale constants for documentation fidelity; the
desk preset scales the iteration counts down to something a laptop finishes
in minutes. Unknown keys are rejected outright since a silently ignored
typo in a scheduler constant would invalidate an experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ParseError, RangeError, UnknownKeyError

VARIANTS = ("v1", "v2", "v3", "full")


@dataclass
class TrainConfig:
    # iteration budget and phase boundaries
    total_iters: int = 30000
    prune_start_iter: int = 15000
    check_period: int = 500
    iter_max: int = 2000
    prune_phase_cap: int = 10000
    # pruning schedule
    beta: float = 0.95
    prune_target_ratio: float = 0.9
    n_target: int = 0          # 0: derive from prune_target_ratio
    min_prune_count: int = -1  # -1: max(1, 0.5% of the post-warmup count)
    uniform_rounds: int = 10   # used only by the uniform-count ablation
    # combined importance score
    lambda_s: float = 0.5
    lambda_f: float = 0.5
    gamma_f: float = 1.0
    score_include_position: bool = False
    # difference-of-Gaussians extension
    f_s_max: float = 1.0
    dog_f_init: float = 0.5
    dog_falpha_init: float = 0.1
    degrade_threshold: float = 0.01
    degrade_rule: str = "f_alpha"
    dog_recover_iters: int = 200
    # optimization
    lambda_dssim: float = 0.2
    lr_position: float = 1.6e-4
    lr_position_final: float = 1.6e-6
    lr_opacity: float = 5e-2
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_color: float = 2.5e-3
    lr_dog: float = 5e-3
    # run setup
    variant: str = "full"
    seed: int = 0
    sh_degree: int = 0
    n_init: int = 300
    background: float = 0.0
    rasterizer: str = "tiled"

    # -- variant gates ------------------------------------------------------

    @property
    def use_dpra(self) -> bool:
        return self.variant in ("v2", "v3", "full")

    @property
    def use_sps(self) -> bool:
        return self.variant in ("v3", "full")

    @property
    def use_dog(self) -> bool:
        return self.variant == "full"

    def resolve_n_target(self, n_init: int) -> int:
        if self.n_target > 0:
            return self.n_target
        return max(1, round(n_init * (1.0 - self.prune_target_ratio)))

    def validate(self) -> "TrainConfig":
        def require(cond, msg):
            if not cond:
                raise RangeError(msg)

        require(self.total_iters >= 1, "total_iters must be >= 1")
        require(self.prune_start_iter >= 1, "prune_start_iter must be >= 1")
        require(self.check_period >= 1, "check_period must be >= 1")
        require(self.iter_max >= self.check_period,
                "iter_max must be >= check_period")
        require(self.prune_phase_cap >= 1, "prune_phase_cap must be >= 1")
        require(0.0 < self.beta < 1.0, "beta must be in (0, 1)")
        require(0.0 < self.prune_target_ratio < 1.0,
                "prune_target_ratio must be in (0, 1)")
        require(self.n_target >= 0, "n_target must be >= 0")
        require(self.uniform_rounds >= 1, "uniform_rounds must be >= 1")
        require(self.gamma_f > 0.0, "gamma_f must be > 0")
        require(self.lambda_s >= 0.0 and self.lambda_f >= 0.0,
                "score weights must be >= 0")
        require(0.0 < self.f_s_max <= 2.0, "f_s_max must be in (0, 2]")
        require(0.0 < self.dog_f_init < self.f_s_max,
                "dog_f_init must be in (0, f_s_max)")
        require(0.0 < self.dog_falpha_init < 1.0,
                "dog_falpha_init must be in (0, 1)")
        require(0.0 < self.degrade_threshold < 1.0,
                "degrade_threshold must be in (0, 1)")
        require(self.degrade_rule in ("f_alpha", "alpha_p"),
                "degrade_rule must be f_alpha or alpha_p")
        require(0.0 <= self.lambda_dssim < 1.0, "lambda_dssim must be in [0, 1)")
        for name in ("lr_position", "lr_position_final", "lr_opacity",
                     "lr_scale", "lr_rotation", "lr_color", "lr_dog"):
            require(getattr(self, name) > 0.0, f"{name} must be > 0")
        require(self.variant in VARIANTS, f"variant must be one of {VARIANTS}")
        require(self.sh_degree in (0, 1, 2), "sh_degree must be 0, 1 or 2")
        require(self.n_init >= 1, "n_init must be >= 1")
        require(0.0 <= self.background <= 1.0, "background must be in [0, 1]")
        require(self.rasterizer in ("naive", "tiled"),
                "rasterizer must be naive or tiled")
        return self


def desk_preset(**overrides) -> TrainConfig:
    """Desk-scale run: minutes on a CPU instead of GPU-hours."""
    base = dict(total_iters=3000, prune_start_iter=300, check_period=50,
                iter_max=200, prune_phase_cap=1500, n_init=300, n_target=100,
                dog_recover_iters=200)
    base.update(overrides)
    return TrainConfig(**base).validate()


def _parse_value(key: str, text: str, target_type, line_no: int):
    if target_type is bool:
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise TypeError(f"line {line_no}: {key} expects a boolean, got {text!r}")
    if target_type is int:
        try:
            return int(text)
        except ValueError:
            raise TypeError(f"line {line_no}: {key} expects an integer, got {text!r}")
    if target_type is float:
        try:
            return float(text)
        except ValueError:
            raise TypeError(f"line {line_no}: {key} expects a number, got {text!r}")
    return text


def parse_config(text: str) -> TrainConfig:
    """Parse `key = value` lines; '#' starts a comment."""
    schema = {f.name: f.type for f in fields(TrainConfig)}
    types = {"int": int, "float": float, "str": str, "bool": bool}
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {raw!r}", line=line_no)
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in schema:
            raise UnknownKeyError(f"line {line_no}: unknown config key {key!r}")
        values[key] = _parse_value(key, val, types[schema[key]], line_no)
    return TrainConfig(**values).validate()


def load_config(path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
