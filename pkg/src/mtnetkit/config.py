"""Run configuration: one JSON document, unknown keys rejected."""
import json
from dataclasses import asdict, dataclass, field, fields, replace

from .backbone import BackboneConfig
from .losses import LossConfig
from .tracker import Model, TrackerConfig, UpdateConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModalityConfig:
    reduction: int = 4

    def __post_init__(self):
        if self.reduction < 1:
            raise ValueError("reduction must be >= 1")


@dataclass(frozen=True)
class FusionConfig:
    d_model: int = 64
    heads: int = 4
    num_layers: int = 4
    use_pos: bool = True

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if self.d_model % 4:
            raise ValueError("d_model must be divisible by 4 (2-D positional encodings)")
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")


_SECTIONS = {
    "backbone": BackboneConfig,
    "modality": ModalityConfig,
    "fusion": FusionConfig,
    "loss": LossConfig,
    "update": UpdateConfig,
    "tracker": TrackerConfig,
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    modality: ModalityConfig = field(default_factory=ModalityConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    update: UpdateConfig = field(default_factory=UpdateConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {"seed", *_SECTIONS}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        if "seed" in d:
            kwargs["seed"] = int(d["seed"])
        for name, typ in _SECTIONS.items():
            if name not in d:
                continue
            sec = d[name]
            if not isinstance(sec, dict):
                raise ConfigError(f"section {name!r} must be an object")
            allowed = {f.name for f in fields(typ)}
            bad = set(sec) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
            sec = dict(sec)
            if name == "backbone" and "seed" in sec:
                raise ConfigError("set the seed at the top level, not in 'backbone'")
            if "widths" in sec:
                sec["widths"] = tuple(sec["widths"])
            try:
                kwargs[name] = typ(**sec)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"invalid {name!r} section: {e}") from None
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            try:
                return cls.from_dict(json.load(f))
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: {e}") from None

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def to_dict(self):
        d = asdict(self)
        d["backbone"]["widths"] = list(d["backbone"]["widths"])
        return d

    def build_model(self):
        bcfg = replace(self.backbone, seed=self.seed)
        f = self.fusion
        return Model.build(bcfg, d_model=f.d_model, heads=f.heads, num_layers=f.num_layers,
                           reduction=self.modality.reduction, use_pos=f.use_pos,
                           search_scale=self.tracker.search_scale)


PRESETS = {
    "default": RunConfig(),
    "gtot": RunConfig(update=UpdateConfig(M=50, N=2)),
}
