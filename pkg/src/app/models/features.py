from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from pydantic import BaseModel, Field, field_validator


class StyleMode(str, Enum):
    """How layer activations become style vectors."""
    GRAM = "gram"
    RAW_EMBEDDING = "raw-embedding"


class LayerTap(BaseModel):
    """Declared output of one backbone layer: (layer_id, c_l, h_l, w_l)."""
    layer_id: str = Field(..., description="Layer identifier")
    channels: int = Field(..., ge=1)
    height: int = Field(..., ge=0)
    width: int = Field(..., ge=0)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)


class FeatureExtractorConfig(BaseModel):
    """Backbone, tapped layers and style mode used to build style feature stacks."""
    backbone_id: str = Field("toy-cnn", description="Registered backbone identifier")
    layer_ids: list[str] = Field(
        default_factory=lambda: ["block1", "block2", "block3", "block4"],
        description="Ordered layer identifiers to tap",
    )
    style_mode: StyleMode = Field(StyleMode.GRAM, description="gram or raw-embedding")
    seed: int = Field(0, description="Seed for backbone initialization")
    image_size: int = Field(256, ge=8, description="Square side of preprocessed images")

    @field_validator("layer_ids")
    @classmethod
    def validate_layer_ids(cls, v):
        """At least one layer, no duplicates."""
        if not v:
            raise ValueError("layer_ids must not be empty")
        if len(set(v)) != len(v):
            raise ValueError("layer_ids must not repeat")
        return v

    @property
    def num_layers(self) -> int:
        return len(self.layer_ids)


@dataclass(frozen=True)
class LayerFeatureSet:
    """Per-layer activations, one array per configured layer, in layer_ids order."""
    layer_ids: list[str]
    activations: list[np.ndarray]

    def __len__(self) -> int:
        return len(self.activations)


@dataclass(frozen=True)
class StyleFeatureStack:
    """Per-layer style vectors and their ordered concatenation."""
    layer_ids: list[str]
    per_layer_vectors: list[np.ndarray]
    stacked: np.ndarray
    layer_offsets: list[tuple[int, int]] = field(default_factory=list)

    @classmethod
    def from_vectors(cls, layer_ids: list[str], vectors: list[np.ndarray]) -> "StyleFeatureStack":
        """Concatenate per-layer vectors and record each layer's index range."""
        offsets: list[tuple[int, int]] = []
        start = 0
        for vector in vectors:
            offsets.append((start, start + vector.size))
            start += vector.size
        flat = [np.asarray(v, dtype=np.float64).reshape(-1) for v in vectors]
        stacked = np.concatenate(flat) if flat else np.zeros(0, dtype=np.float64)
        return cls(layer_ids=list(layer_ids), per_layer_vectors=flat, stacked=stacked, layer_offsets=offsets)

    @property
    def dim(self) -> int:
        return int(self.stacked.size)
