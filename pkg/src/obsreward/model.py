"""Domain types shared by every module: items, preference pairs, datasets, DGP config."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from types import MappingProxyType
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError

SPLITS = ("train", "valid", "test")
SCENARIOS = ("orthogonal", "entangled", "temporal", "weekday_marker")
REGIONS = ("none", "west", "central", "east")


def _frozen_map(m):
    return MappingProxyType(dict(m or {}))


def _float_map(m):
    return MappingProxyType({str(k): float(v) for k, v in (m or {}).items()})


@dataclass(frozen=True)
class Item:
    """One logged interaction.

    ``latent`` holds simulation ground truth and is read only by evaluation
    code, never by fitting code.
    """

    id: str
    embedding: tuple
    outcome: float
    confounders: Mapping[str, float] = field(default_factory=dict)
    instruments: Mapping[str, float] = field(default_factory=dict)
    latent: Optional[Mapping[str, float]] = None
    time_month: Optional[int] = None
    time_weekday: Optional[int] = None
    context_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "embedding", tuple(float(x) for x in self.embedding))
        object.__setattr__(self, "outcome", float(self.outcome))
        object.__setattr__(self, "confounders", _float_map(self.confounders))
        object.__setattr__(self, "instruments", _float_map(self.instruments))
        if self.latent is not None:
            object.__setattr__(self, "latent", _float_map(self.latent))

    def with_outcome(self, outcome: float) -> "Item":
        return replace(self, outcome=outcome)


@dataclass(frozen=True)
class PreferencePair:
    context_id: str
    winner_id: str
    loser_id: str
    margin: float


@dataclass(frozen=True)
class Dataset:
    items: tuple
    pairs: tuple = ()
    split: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "pairs", tuple(self.pairs))
        object.__setattr__(self, "split", _frozen_map(self.split))

    def __len__(self):
        return len(self.items)

    def by_id(self) -> dict:
        return {it.id: it for it in self.items}

    def split_of(self, item_id: str) -> str:
        # unassigned items count as training data
        return self.split.get(item_id, "train")

    def items_in(self, split: str) -> list:
        return [it for it in self.items if self.split_of(it.id) == split]

    def pairs_in(self, split: str) -> list:
        return [p for p in self.pairs if self.split_of(p.winner_id) == split]

    def subset(self, split: str) -> "Dataset":
        items = self.items_in(split)
        ids = {it.id for it in items}
        return Dataset(
            items,
            [p for p in self.pairs if p.winner_id in ids],
            {i: split for i in ids},
        )

    def with_items(self, items: Sequence[Item]) -> "Dataset":
        return Dataset(items, self.pairs, self.split)

    def embedding_matrix(self, items: Optional[Sequence[Item]] = None) -> np.ndarray:
        items = self.items if items is None else items
        if not items:
            return np.zeros((0, 0))
        return np.array([it.embedding for it in items], dtype=float)


def concat(datasets: Sequence[Dataset]) -> Dataset:
    items, pairs, split = [], [], {}
    for ds in datasets:
        items.extend(ds.items)
        pairs.extend(ds.pairs)
        split.update(ds.split)
    return Dataset(items, pairs, split)


def validate(dataset: Dataset) -> list:
    """Return a list of invariant violations; empty iff the dataset is well formed."""
    problems = []
    seen = {}
    for it in dataset.items:
        if it.id in seen:
            problems.append(f"duplicate item id {it.id!r}")
        seen[it.id] = it
        if not all(math.isfinite(x) for x in it.embedding):
            problems.append(f"item {it.id!r}: non-finite embedding entry")
        if not math.isfinite(it.outcome):
            problems.append(f"item {it.id!r}: non-finite outcome")
        for name, v in list(it.confounders.items()) + list(it.instruments.items()):
            if not math.isfinite(v):
                problems.append(f"item {it.id!r}: non-finite value for {name!r}")
        if it.time_month is not None and not 1 <= it.time_month <= 12:
            problems.append(f"item {it.id!r}: month {it.time_month} outside 1..12")
        if it.time_weekday is not None and not 0 <= it.time_weekday <= 6:
            problems.append(f"item {it.id!r}: weekday {it.time_weekday} outside 0..6")
    dims = {len(it.embedding) for it in dataset.items}
    if len(dims) > 1:
        problems.append(f"inconsistent embedding lengths {sorted(dims)}")
    for item_id, s in dataset.split.items():
        if s not in SPLITS:
            problems.append(f"item {item_id!r}: unknown split {s!r}")
        if item_id not in seen:
            problems.append(f"split entry {item_id!r} references no item")
    for k, p in enumerate(dataset.pairs):
        tag = f"pair {k} ({p.winner_id!r} > {p.loser_id!r})"
        if p.winner_id == p.loser_id:
            problems.append(f"{tag}: winner_id equals loser_id")
            continue
        missing = [i for i in (p.winner_id, p.loser_id) if i not in seen]
        if missing:
            problems.append(f"{tag}: unknown item id(s) {missing}")
            continue
        if not (p.margin > 0):
            problems.append(f"{tag}: margin {p.margin} not strictly positive")
        if dataset.split_of(p.winner_id) != dataset.split_of(p.loser_id):
            problems.append(
                f"{tag}: cross-split pair "
                f"({dataset.split_of(p.winner_id)}/{dataset.split_of(p.loser_id)})"
            )
    return problems


@dataclass(frozen=True)
class DgpConfig:
    """Configuration of the synthetic data generators.

    Defaults follow the simulation setup: outcome coefficient 0.1 on
    popularity, region levels 1/2/3, entanglement coefficient -10.5.
    ``d=None`` means the embedding width is derived from the layout.
    """

    scenario: str = "orthogonal"
    n: int = 1000
    seed: int = 0
    coef_confounder: float = 0.1
    coef_entangle: float = -10.5
    region_levels: tuple = (1.0, 2.0, 3.0)
    noise_outcome_sd: float = 0.1
    noise_confounder_sd: float = 0.5
    d: Optional[int] = None
    nuisance_dims: int = 8
    region_prob: tuple = (0.25, 0.25, 0.25, 0.25)
    # extensions used by the temporal / weekday generators and pair building
    context_size: int = 0
    pair_cap: int = 10
    month_effects: Optional[tuple] = None
    month_trace: float = 0.05
    month_trace_noise: float = 0.02
    skew: float = 0.52
    min_context: int = 2
    max_context: int = 5

    def __post_init__(self):
        object.__setattr__(self, "region_levels", tuple(float(x) for x in self.region_levels))
        object.__setattr__(self, "region_prob", tuple(float(x) for x in self.region_prob))
        if self.month_effects is not None:
            object.__setattr__(self, "month_effects", tuple(float(x) for x in self.month_effects))

    def check(self) -> "DgpConfig":
        """Raise ``ConfigError`` naming the first invalid field; return self."""
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}", "scenario")
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n!r}", "n")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}", "seed")
        if len(self.region_levels) != 3:
            raise ConfigError("region_levels needs 3 values (west, central, east)", "region_levels")
        if len(self.region_prob) != 4 or any(p < 0 for p in self.region_prob):
            raise ConfigError("region_prob needs 4 non-negative values (none, west, central, east)", "region_prob")
        if abs(sum(self.region_prob) - 1.0) > 1e-9:
            raise ConfigError(f"region_prob sums to {sum(self.region_prob)}, not 1", "region_prob")
        for name in ("noise_outcome_sd", "noise_confounder_sd", "month_trace_noise"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0", name)
        if self.nuisance_dims < 0:
            raise ConfigError("nuisance_dims must be >= 0", "nuisance_dims")
        if self.context_size < 0:
            raise ConfigError("context_size must be >= 0", "context_size")
        if self.pair_cap < 1:
            raise ConfigError("pair_cap must be positive", "pair_cap")
        if self.month_effects is not None and len(self.month_effects) != 12:
            raise ConfigError(f"month_effects needs 12 values, got {len(self.month_effects)}", "month_effects")
        if not 0.0 <= self.skew <= 1.0:
            raise ConfigError(f"skew must lie in [0, 1], got {self.skew}", "skew")
        if not 2 <= self.min_context <= self.max_context:
            raise ConfigError("need 2 <= min_context <= max_context", "min_context")
        if self.d is not None and self.d < self.layout_width():
            raise ConfigError(
                f"d={self.d} is smaller than the embedding layout ({self.layout_width()} dims)", "d"
            )
        return self

    def layout_width(self) -> int:
        width = 1 + 3 + self.nuisance_dims
        if self.scenario == "weekday_marker":
            width += 1
        if self.scenario == "temporal":
            width += 12
        return width

    @property
    def dim(self) -> int:
        return self.d if self.d is not None else self.layout_width()

    @classmethod
    def from_dict(cls, data: Mapping) -> "DgpConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown DGP config key(s): {unknown}", unknown[0])
        return cls(**data).check()

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out
