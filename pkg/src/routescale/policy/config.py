from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 6
    heads: int = 8
    kv_dim: int = 16
    ffn_multiplier: float = 2.75
    clip: float = 10.0
    spectral_norm: bool = True
    tw_input: bool = True
    rms_eps: float = 1e-6
    sn_block: int = 8

    def __post_init__(self):
        if min(self.layers, self.heads, self.kv_dim) < 1:
            raise ValueError("layers, heads and kv_dim must be positive")
        if self.ffn_multiplier <= 0 or self.clip <= 0:
            raise ValueError("ffn_multiplier and clip must be positive")

    @property
    def hidden_dim(self) -> int:
        return self.heads * self.kv_dim

    @property
    def ffn_dim(self) -> int:
        return max(1, int(round(self.ffn_multiplier * self.hidden_dim)))

    @property
    def input_dim(self) -> int:
        return 6 if self.tw_input else 3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise KeyError(f"unknown model config key(s): {', '.join(sorted(unknown))}")
        return cls(**doc)

    def with_(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


# ffn_multiplier calibrated once so param_count lands on the published sizes
PRESETS = {
    "1M": ModelConfig(layers=6, heads=8, kv_dim=16, ffn_multiplier=2.75),
    "5M": ModelConfig(layers=12, heads=16, kv_dim=16, ffn_multiplier=0.625),
    "40M": ModelConfig(layers=12, heads=16, kv_dim=32, ffn_multiplier=2.65625),
    "1B": ModelConfig(layers=20, heads=16, kv_dim=128, ffn_multiplier=2.953125),
}
PRESET_SIZES = {"1M": 1.3e6, "5M": 5.0e6, "40M": 3.89e7, "1B": 1.1e9}


def preset(name: str) -> ModelConfig:
    key = name.strip().upper()
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return PRESETS[key]
