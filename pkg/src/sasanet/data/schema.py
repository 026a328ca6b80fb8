"""Feature schema: per-feature kind plus vocabulary or normalization stats."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    vocabulary: tuple[str, ...] = ()
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, CONTINUOUS):
            raise SchemaError(f"feature '{self.name}': unknown kind '{self.kind}'")
        if self.kind == CATEGORICAL and not self.vocabulary:
            raise SchemaError(f"categorical feature '{self.name}' needs a non-empty vocabulary")
        if self.kind == CONTINUOUS and not self.std > 0:
            raise SchemaError(f"continuous feature '{self.name}' needs std > 0, got {self.std}")

    @property
    def unk_index(self) -> int:
        return len(self.vocabulary)

    @property
    def embedding_rows(self) -> int:
        # one extra row reserved for unknown categories
        return len(self.vocabulary) + 1


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.features) < 1:
            raise SchemaError("schema needs at least one feature")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names in schema")

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def __getitem__(self, i: int) -> Feature:
        return self.features[i]

    def to_dict(self) -> dict:
        out = []
        for f in self.features:
            if f.kind == CATEGORICAL:
                out.append({"name": f.name, "kind": f.kind, "vocabulary": list(f.vocabulary)})
            else:
                out.append({"name": f.name, "kind": f.kind, "mean": f.mean, "std": f.std})
        return {"features": out}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        feats = []
        for item in d["features"]:
            if item["kind"] == CATEGORICAL:
                feats.append(Feature(item["name"], CATEGORICAL, tuple(item["vocabulary"])))
            else:
                feats.append(Feature(item["name"], CONTINUOUS,
                                     mean=float(item.get("mean", 0.0)),
                                     std=float(item.get("std", 1.0))))
        return cls(tuple(feats))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))


def continuous_schema(n: int, prefix: str = "x") -> FeatureSchema:
    """All-continuous schema with unit stats (already-normalized inputs)."""
    return FeatureSchema(tuple(Feature(f"{prefix}{i + 1}", CONTINUOUS) for i in range(n)))
