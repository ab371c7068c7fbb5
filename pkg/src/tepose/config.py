"""Run configuration: one flat dataclass, TOML files with optional sections,
and ``key=value`` overrides.

Defaults follow the published settings (T+1=6, K=13/6, tau=3, gamma=0.9,
H=505, batch 32, learning rates 5e-5 / 1e-4, widths 2048/1024/1024).
:func:`desk_config` scales the model down to run on a CPU in minutes.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    # temporal window and sequential loading
    T: int = 5
    H: int = 505
    gamma: float = 0.9
    gamma_scope: str = "frame"
    selection: str = "iteration"
    batch_size: int = 32
    ratio_3d: float = 0.4
    epoch_fraction: float = 0.125
    warm_start: str = "gt"
    refresh_cache: bool = False  # re-roll cached predictions at each epoch start
    refresh_every: int = 0      # ... and additionally every this many iterations (0 = never)
    prefill: bool = True        # warm-start every training frame, not only 0..T-1
    # optimisation
    iterations: int = 2000
    lr_gen: float = 5e-5
    lr_disc: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    patience: int = 8
    lr_factor: float = 0.1
    validate_every_epoch: bool = True
    # predictor
    feature_dim: int = 2048
    hidden: int = 1024
    reg_hidden: int = 1024
    gru_layers: int = 2
    n_iter: int = 3
    normalize_inputs: bool = False  # standardize encoder inputs with training-set statistics
    two_gru: bool = True
    feedback: bool = True
    # discriminator
    adversarial: bool = True
    disc_channels: tuple[int, ...] = (3, 64, 128, 256)
    gcn_scales: int = 13
    g3d_scales: int = 6
    tau: int = 3
    # loss multipliers
    w_2d: float = 1.0
    w_3d: float = 1.0
    w_theta: float = 1.0
    w_adv: float = 1.0
    # data
    data_dir: str = ""
    skeleton: str = ""          # optional skeleton JSON; default 14-joint tree
    n_3d: int = 24
    n_2d: int = 24
    n_val: int = 2
    n_test: int = 6
    n_real: int = 24
    min_length: int = 90
    max_length: int = 130
    test_length: int = 100
    feature_noise: float = 0.05
    feature_bias: float = 0.5
    feature_gain: float = 2.5

    def validate(self) -> "RunConfig":
        checks = [
            (self.T >= 1, "T must be >= 1"),
            (self.H >= self.T + 1, "H must be >= T + 1"),
            (0.0 <= self.gamma <= 1.0, "gamma must lie in [0, 1]"),
            (self.gamma_scope in ("frame", "sample"), "gamma_scope must be 'frame' or 'sample'"),
            (self.selection in ("epoch", "iteration"), "selection must be 'epoch' or 'iteration'"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (0.0 <= self.ratio_3d <= 1.0, "ratio_3d must lie in [0, 1]"),
            (0.0 < self.epoch_fraction <= 1.0, "epoch_fraction must lie in (0, 1]"),
            (self.warm_start in ("gt", "mean"), "warm_start must be 'gt' or 'mean'"),
            (self.iterations >= 0, "iterations must be >= 0"),
            (self.lr_gen > 0 and self.lr_disc > 0, "learning rates must be positive"),
            (self.tau >= 1 and self.tau % 2 == 1, "tau must be a positive odd number"),
            (len(self.disc_channels) == 4, "disc_channels needs four entries (three blocks)"),
            (self.disc_channels[0] == 3, "discriminator input channels must be 3 (joint coordinates)"),
            (self.gcn_scales >= 0 and self.g3d_scales >= 0, "scale counts must be >= 0"),
            (self.n_iter >= 1, "n_iter must be >= 1"),
            (self.gru_layers >= 1, "gru_layers must be >= 1"),
            (min(self.feature_dim, self.hidden, self.reg_hidden) >= 1, "widths must be positive"),
            (self.min_length >= self.T + 1, "videos must be at least T + 1 frames long"),
            (self.max_length >= self.min_length, "max_length must be >= min_length"),
            (self.test_length >= self.T + 3, "test videos need T + 3 frames for ACCEL"),
            (self.n_3d + self.n_2d >= 1, "need at least one training video"),
            (self.refresh_every >= 0, "refresh_every must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name, value):
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    default = getattr(RunConfig(), name)
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(value)
                return value.lower() in ("true", "1")
            return bool(value)
        if isinstance(default, tuple):
            if isinstance(value, str):
                value = [v for v in value.replace("(", "").replace(")", "").split(",") if v.strip()]
            return tuple(int(v) for v in value)
        return type(default)(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc


def from_mapping(doc: dict, base: RunConfig | None = None) -> RunConfig:
    """Build a config from a (possibly sectioned) mapping; sections are flattened."""
    flat = {}
    for k, v in doc.items():
        if isinstance(v, dict):
            flat.update(v)
        else:
            flat[k] = v
    values = {k: _coerce(k, v) for k, v in flat.items()}
    return dataclasses.replace(base or RunConfig(), **values)


def load_config(path=None, overrides=(), base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    if path:
        with open(path, "rb") as fh:
            try:
                doc = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from exc
        cfg = from_mapping(doc, cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        cfg = dataclasses.replace(cfg, **{k.strip(): _coerce(k.strip(), v.strip())})
    return cfg.validate()


def desk_config(**kw) -> RunConfig:
    """CPU-sized model: F=64, h=128, N=14 joints, batch 16, desk channels."""
    base = dict(
        feature_dim=64, hidden=128, reg_hidden=128, batch_size=16, H=90,
        disc_channels=(3, 16, 32, 64), lr_gen=3e-3, lr_disc=1e-3,
        epoch_fraction=1.0, w_adv=0.01, n_3d=100, n_2d=100, feature_bias=0.2,
    )
    base.update(kw)
    return RunConfig(**base).validate()


def dump_toml(cfg: RunConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        if isinstance(v, bool):
            lines.append(f"{k} = {'true' if v else 'false'}")
        elif isinstance(v, (int, float)):
            lines.append(f"{k} = {v!r}")
        elif isinstance(v, (tuple, list)):
            lines.append(f"{k} = [{', '.join(str(x) for x in v)}]")
        else:
            lines.append(f'{k} = "{v}"')
    return "\n".join(lines) + "\n"
