from enum import Enum, IntEnum
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator


class PairLabel(IntEnum):
    """Pair ground truth: 1 for real-real, 0 for fake-real."""
    FAKE_REAL = 0
    REAL_REAL = 1


class SplitName(str, Enum):
    """Named dataset splits."""
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class PairRecord(BaseModel):
    """One data point: a real reference image and a suspicious image."""
    model_config = ConfigDict(extra="allow")

    pair_id: str = Field(..., min_length=1, description="Unique pair identifier")
    real_path: str = Field(..., description="Reference (real) image path, relative to the manifest")
    suspicious_path: str = Field(..., description="Suspicious image path, relative to the manifest")
    label: PairLabel = Field(..., description="1 real-real, 0 fake-real")
    technique: str = Field("external", description="Technique tag, e.g. synthetic-swap")
    scenario: dict[str, str] = Field(default_factory=dict, description="Lighting, pose, expression tags")

    @field_validator("label", mode="before")
    @classmethod
    def validate_label(cls, v):
        """Labels must be exactly 0 or 1."""
        if v not in (0, 1):
            raise ValueError("label must be 0 (fake-real) or 1 (real-real)")
        return int(v)

    @property
    def is_real_pair(self) -> bool:
        return self.label == PairLabel.REAL_REAL


class DatasetManifest(BaseModel):
    """Records plus named split index sets; paths resolve against ``root``."""
    records: list[PairRecord] = Field(default_factory=list)
    split_seed: Optional[int] = None
    splits: dict[str, list[int]] = Field(default_factory=dict)
    metadata: dict[str, Any] = Field(default_factory=dict)

    _root: Path = PrivateAttr(default=Path("."))

    @property
    def root(self) -> Path:
        return self._root

    def with_root(self, root: Path) -> "DatasetManifest":
        self._root = Path(root)
        return self

    def resolve(self, path: str) -> Path:
        candidate = Path(path)
        return candidate if candidate.is_absolute() else self._root / candidate

    @property
    def is_split(self) -> bool:
        return bool(self.splits)

    def split_records(self, name: str | None) -> list[PairRecord]:
        """Records of one split; all records when ``name`` is None."""
        if name is None:
            return list(self.records)
        return [self.records[i] for i in self.splits.get(name, [])]

    def split_names(self) -> list[Optional[str]]:
        """Split name of every record, in record order."""
        names: list[Optional[str]] = [None] * len(self.records)
        for name, indices in self.splits.items():
            for index in indices:
                names[index] = name
        return names

    @property
    def techniques(self) -> list[str]:
        return sorted({r.technique for r in self.records})


class SyntheticIdentity(BaseModel):
    """Deterministic style signature of one synthetic identity."""
    identity_id: int = Field(..., ge=0)
    style_signature: list[float] = Field(..., description="Palette, texture and facial geometry parameters")
