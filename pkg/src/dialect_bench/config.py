"""Experiment configuration: one nested key/value document per experiment.

Serialization is canonical (sorted keys, fixed style) so that
serialize -> parse -> serialize is byte-identical.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .augment import AugmentSpec, ChunkDropSpec, FreqMaskSpec
from .dsp import FrontendConfig
from .metrics_adi import LreCostParams
from .metrics_asr import NormalizationPolicy
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    manifests: dict[str, str] = field(default_factory=dict)   # stage1/stage2/eval -> path
    features_dir: str = "features"
    out_dir: str = "runs/exp"
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    lre: LreCostParams = field(default_factory=LreCostParams)
    normalization: NormalizationPolicy = field(default_factory=NormalizationPolicy)
    asr_routing: dict[str, str] = field(default_factory=dict)  # dialect -> hyp/checkpoint path

    def to_dict(self) -> dict:
        data = asdict(self)
        # tuples -> lists for clean emission
        return _listify(data)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        if "manifests" in data:
            kwargs["manifests"] = {str(k): str(v) for k, v in (data["manifests"] or {}).items()}
        for key in ("features_dir", "out_dir"):
            if key in data:
                kwargs[key] = str(data[key])
        if "augment" in data:
            aug = dict(data["augment"])
            if "freq_mask" in aug:
                aug["freq_mask"] = FreqMaskSpec(**aug["freq_mask"])
            if "chunk_drop" in aug:
                aug["chunk_drop"] = ChunkDropSpec(**aug["chunk_drop"])
            if "snr_db_range" in aug:
                aug["snr_db_range"] = tuple(aug["snr_db_range"])
            if "speed_factors" in aug:
                aug["speed_factors"] = tuple(aug["speed_factors"])
            kwargs["augment"] = AugmentSpec(**aug)
        if "frontend" in data:
            kwargs["frontend"] = FrontendConfig(**data["frontend"])
        if "train" in data:
            tr = dict(data["train"])
            if "adam_betas" in tr:
                tr["adam_betas"] = tuple(tr["adam_betas"])
            kwargs["train"] = TrainConfig(**tr)
        if "lre" in data:
            lre = dict(data["lre"])
            if "p_targets" in lre:
                lre["p_targets"] = tuple(lre["p_targets"])
            kwargs["lre"] = LreCostParams(**lre)
        if "normalization" in data:
            kwargs["normalization"] = NormalizationPolicy(**data["normalization"])
        if "asr_routing" in data:
            kwargs["asr_routing"] = {str(k): str(v) for k, v in (data["asr_routing"] or {}).items()}
        return cls(**kwargs)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        data = yaml.safe_load(text)
        if data is None:
            return cls()
        if not isinstance(data, dict):
            raise ConfigError("config document must be a mapping")
        return cls.from_dict(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_yaml(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            return cls.from_yaml(Path(path).read_text(encoding="utf-8"))
        except (TypeError, ValueError, yaml.YAMLError) as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def validate_paths(self) -> None:
        """Referenced manifests and routing targets must resolve."""
        missing = [p for p in self.manifests.values() if not Path(p).exists()]
        missing += [p for p in self.asr_routing.values() if not Path(p).exists()]
        if missing:
            raise ConfigError(f"config references missing paths: {missing}")


def _listify(obj):
    if isinstance(obj, tuple):
        return [_listify(v) for v in obj]
    if isinstance(obj, list):
        return [_listify(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _listify(v) for k, v in obj.items()}
    return obj
