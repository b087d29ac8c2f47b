"""Seeded synthetic generators for confounded outcome data.

Per-item draws come from counter-based streams keyed by ``(seed, namespace,
index)`` with a fixed slot layout, so two scenarios sharing a seed share
their sentiment, region and noise realizations.

Embedding layout (all scenarios)::

    [0]            sentiment s
    [1:4]          region one-hot (west, central, east)
    [4]            marker (weekday_marker only): 1 iff Monday
    [..+12]        month trace (temporal only): month_trace * one-hot + noise
    [..]           nuisance dims ~ N(0, 1)
    [..d]          zero padding when cfg.d exceeds the layout width
"""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import rng
from .errors import ConfigError
from .model import REGIONS, Dataset, DgpConfig, Item, PreferencePair

NAMESPACES = {"train": 1, "valid": 2, "test": 3, "candidates": 4}
_CONTEXT_NS_OFFSET = 100

# slot layout of each item's stream
S_SENTIMENT = 0
S_REGION = 1
S_EPS = (2, 3)
S_NU = (4, 5)
S_MONTH = 6
S_WEEKDAY = 7
S_TARGET_NOISE = (8, 9)
S_NUISANCE = 16

MONDAY = 0
INSTRUMENT_NAMES = ("region_west", "region_central", "region_east")

# default seasonal profile for the temporal scenario (CTR-scale month shifts)
DEFAULT_MONTH_EFFECTS = tuple(
    round(0.08 * math.sin(2 * math.pi * m / 12) + 0.04 * math.cos(4 * math.pi * m / 12), 6)
    for m in range(12)
)


def _n_slots(cfg: DgpConfig) -> int:
    n = S_NUISANCE + 2 * cfg.nuisance_dims
    if cfg.scenario == "temporal":
        n += 24
    return n


def _normal(u: np.ndarray, slots) -> np.ndarray:
    return rng.box_muller(u[:, slots[0]], u[:, slots[1]])


def _nuisance(u: np.ndarray, cfg: DgpConfig) -> np.ndarray:
    k = cfg.nuisance_dims
    if k == 0:
        return np.zeros((u.shape[0], 0))
    a = u[:, S_NUISANCE : S_NUISANCE + 2 * k : 2]
    b = u[:, S_NUISANCE + 1 : S_NUISANCE + 2 * k : 2]
    return rng.box_muller(a, b)


def _month_trace(u: np.ndarray, months: np.ndarray, cfg: DgpConfig) -> np.ndarray:
    base = S_NUISANCE + 2 * cfg.nuisance_dims
    noise = rng.box_muller(u[:, base : base + 24 : 2], u[:, base + 1 : base + 24 : 2])
    onehot = np.zeros((len(months), 12))
    onehot[np.arange(len(months)), months - 1] = 1.0
    return cfg.month_trace * onehot + cfg.month_trace_noise * noise


def _embed_block(cfg, sentiment, region, nuisance, marker=None, trace=None) -> np.ndarray:
    n = len(sentiment)
    parts = [np.asarray(sentiment, dtype=float)[:, None]]
    onehot = np.zeros((n, 3))
    tagged = region > 0
    onehot[np.nonzero(tagged)[0], region[tagged] - 1] = 1.0
    parts.append(onehot)
    if cfg.scenario == "weekday_marker":
        parts.append(np.asarray(marker, dtype=float)[:, None])
    if cfg.scenario == "temporal":
        parts.append(trace)
    parts.append(nuisance)
    out = np.hstack(parts)
    if out.shape[1] < cfg.dim:
        out = np.hstack([out, np.zeros((n, cfg.dim - out.shape[1]))])
    return out


def embed(attrs: Mapping, cfg: DgpConfig, stream: int = 0) -> np.ndarray:
    """Embedding of a single item from its attributes.

    ``attrs`` needs ``sentiment`` and ``region`` (a name from ``REGIONS`` or its
    index); ``weekday`` / ``month`` are read for the marker and temporal layouts.
    Nuisance draws come from stream ``stream`` of ``cfg.seed``.
    """
    cfg.check()
    region = attrs.get("region", "none")
    region = REGIONS.index(region) if isinstance(region, str) else int(region)
    u = rng.uniforms(cfg.seed, np.array([stream], dtype=np.uint64), _n_slots(cfg))
    marker = trace = None
    if cfg.scenario == "weekday_marker":
        marker = [1.0 if attrs.get("weekday") == MONDAY else 0.0]
    if cfg.scenario == "temporal":
        trace = _month_trace(u, np.array([int(attrs.get("month", 1))]), cfg)
    return _embed_block(
        cfg, [float(attrs["sentiment"])], np.array([region]), _nuisance(u, cfg), marker, trace
    )[0]


def _context_ids(split: str, n: int, size: int) -> list:
    if size <= 0:
        return [None] * n
    return [f"{split}-ctx{i // size:06d}" for i in range(n)]


def _popularity_items(cfg: DgpConfig, split: str, namespace: Optional[int], entangle: float) -> Dataset:
    cfg.check()
    ns = NAMESPACES[split] if namespace is None else namespace
    u = rng.uniforms(cfg.seed, rng.stream_ids(ns, 0, cfg.n), _n_slots(cfg))
    s = u[:, S_SENTIMENT]
    region = rng.categorical(u[:, S_REGION], cfg.region_prob)
    levels = np.concatenate([[0.0], cfg.region_levels])[region]
    eps = cfg.noise_confounder_sd * _normal(u, S_EPS)
    nu = cfg.noise_outcome_sd * _normal(u, S_NU)
    target_noise = cfg.noise_outcome_sd * _normal(u, S_TARGET_NOISE)
    p_true = levels + entangle * s
    p = p_true + eps
    y = s + cfg.coef_confounder * p + nu
    emb = _embed_block(cfg, s, region, _nuisance(u, cfg))
    ctx = _context_ids(split, cfg.n, cfg.context_size)
    items = []
    for i in range(cfg.n):
        items.append(
            Item(
                id=f"{split}-{i:07d}",
                embedding=emb[i],
                outcome=y[i],
                confounders={"popularity": p[i]},
                instruments={name: float(region[i] == k + 1) for k, name in enumerate(INSTRUMENT_NAMES)},
                latent={
                    "sentiment": s[i],
                    "popularity_true": p_true[i],
                    "region": float(region[i]),
                    "eps": eps[i],
                    "nu": nu[i],
                    "target_noise": target_noise[i],
                },
                context_id=ctx[i],
            )
        )
    pairs = build_pairs(items, cfg.pair_cap) if cfg.context_size > 0 else []
    return Dataset(items, pairs, {it.id: split for it in items})


def gen_orthogonal(cfg: DgpConfig, split: str = "train", namespace: Optional[int] = None) -> Dataset:
    """Popularity depends on region only: p = level(region) + eps."""
    if cfg.scenario != "orthogonal":
        raise ConfigError(f"gen_orthogonal needs scenario 'orthogonal', got {cfg.scenario!r}", "scenario")
    return _popularity_items(cfg, split, namespace, 0.0)


def gen_entangled(cfg: DgpConfig, split: str = "train", namespace: Optional[int] = None) -> Dataset:
    """Popularity also loads on sentiment: p = level(region) + coef_entangle * s + eps."""
    if cfg.scenario != "entangled":
        raise ConfigError(f"gen_entangled needs scenario 'entangled', got {cfg.scenario!r}", "scenario")
    return _popularity_items(cfg, split, namespace, cfg.coef_entangle)


def gen_temporal(
    cfg: DgpConfig,
    month_effects: Optional[Sequence[float]] = None,
    split: str = "train",
    namespace: Optional[int] = None,
) -> Dataset:
    """Outcome ``s + month_effects[month] + nu`` with a faint month trace in the embedding.

    With ``cfg.context_size > 0`` items are grouped into contexts that share a
    month (concurrent comparisons), and pairs are built within each context.
    """
    if cfg.scenario != "temporal":
        raise ConfigError(f"gen_temporal needs scenario 'temporal', got {cfg.scenario!r}", "scenario")
    cfg.check()
    if month_effects is None:
        month_effects = cfg.month_effects if cfg.month_effects is not None else DEFAULT_MONTH_EFFECTS
    effects = np.asarray(month_effects, dtype=float)
    if effects.shape != (12,):
        raise ConfigError(f"month_effects needs 12 values, got {effects.size}", "month_effects")
    ns = NAMESPACES[split] if namespace is None else namespace
    u = rng.uniforms(cfg.seed, rng.stream_ids(ns, 0, cfg.n), _n_slots(cfg))
    if cfg.context_size > 0:
        n_ctx = -(-cfg.n // cfg.context_size)
        uc = rng.uniforms(cfg.seed, rng.stream_ids(ns + _CONTEXT_NS_OFFSET, 0, n_ctx), 1)
        months = 1 + (uc[:, 0] * 12).astype(int)[np.arange(cfg.n) // cfg.context_size]
    else:
        months = 1 + (u[:, S_MONTH] * 12).astype(int)
    s = u[:, S_SENTIMENT]
    region = rng.categorical(u[:, S_REGION], cfg.region_prob)
    nu = cfg.noise_outcome_sd * _normal(u, S_NU)
    effect = effects[months - 1]
    y = s + effect + nu
    emb = _embed_block(cfg, s, region, _nuisance(u, cfg), trace=_month_trace(u, months, cfg))
    ctx = _context_ids(split, cfg.n, cfg.context_size)
    items = []
    for i in range(cfg.n):
        m = int(months[i])
        items.append(
            Item(
                id=f"{split}-{i:07d}",
                embedding=emb[i],
                outcome=y[i],
                confounders={"month": float(m), "month_effect": effect[i]},
                instruments={f"month_{k}": float(k == m) for k in range(1, 13)},
                latent={"sentiment": s[i], "nu": nu[i], "month_effect": effect[i], "region": float(region[i])},
                time_month=m,
                context_id=ctx[i],
            )
        )
    pairs = build_pairs(items, cfg.pair_cap) if cfg.context_size > 0 else []
    return Dataset(items, pairs, {it.id: split for it in items})


def monday_bump(skew: float) -> float:
    """Additive Monday shift b with P(s1 + b > s2) = skew for s1, s2 ~ U(0, 1).

    s1 - s2 is triangular on (-1, 1), so P(s1 - s2 > -b) = 1 - (1 - b)^2 / 2 for b >= 0.
    """
    if not 0.0 <= skew <= 1.0:
        raise ConfigError(f"skew must lie in [0, 1], got {skew}", "skew")
    if skew >= 0.5:
        return 1.0 - math.sqrt(2.0 * (1.0 - skew))
    return -(1.0 - math.sqrt(2.0 * skew))


def gen_weekday_pairs(
    cfg: DgpConfig,
    skew: Optional[float] = None,
    split: str = "train",
    namespace: Optional[int] = None,
) -> Dataset:
    """Contexts of 2-5 answers with weekday tags; Monday answers get an outcome bump.

    ``cfg.n`` is the number of contexts. Outcome is ``s + b * [Monday]`` with
    ``b = monday_bump(skew)``, so among mixed Monday / non-Monday pairs the
    Monday item wins with probability ``skew`` exactly.
    """
    if cfg.scenario != "weekday_marker":
        raise ConfigError(f"gen_weekday_pairs needs scenario 'weekday_marker', got {cfg.scenario!r}", "scenario")
    cfg.check()
    skew = cfg.skew if skew is None else skew
    bump = monday_bump(skew)
    ns = NAMESPACES[split] if namespace is None else namespace
    uc = rng.uniforms(cfg.seed, rng.stream_ids(ns + _CONTEXT_NS_OFFSET, 0, cfg.n), 1)
    span = cfg.max_context - cfg.min_context + 1
    sizes = cfg.min_context + np.minimum((uc[:, 0] * span).astype(int), span - 1)
    total = int(sizes.sum())
    u = rng.uniforms(cfg.seed, rng.stream_ids(ns, 0, total), _n_slots(cfg))
    s = u[:, S_SENTIMENT]
    region = rng.categorical(u[:, S_REGION], cfg.region_prob)
    weekday = np.minimum((u[:, S_WEEKDAY] * 7).astype(int), 6)
    monday = (weekday == MONDAY).astype(float)
    y = s + bump * monday
    emb = _embed_block(cfg, s, region, _nuisance(u, cfg), marker=monday)
    ctx_of = np.repeat(np.arange(cfg.n), sizes)
    pos = np.arange(total) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    items = []
    for i in range(total):
        c = int(ctx_of[i])
        items.append(
            Item(
                id=f"{split}-c{c:06d}-{int(pos[i])}",
                embedding=emb[i],
                outcome=y[i],
                confounders={"weekday": float(weekday[i]), "monday": monday[i]},
                instruments={},
                latent={"sentiment": s[i], "monday_bump": bump, "region": float(region[i])},
                time_weekday=int(weekday[i]),
                context_id=f"{split}-c{c:06d}",
            )
        )
    pairs = build_pairs(items, cfg.pair_cap)
    return Dataset(items, pairs, {it.id: split for it in items})


def generate(cfg: DgpConfig, split: str = "train", namespace: Optional[int] = None) -> Dataset:
    """Dispatch on ``cfg.scenario``."""
    cfg.check()
    if cfg.scenario == "orthogonal":
        return gen_orthogonal(cfg, split, namespace)
    if cfg.scenario == "entangled":
        return gen_entangled(cfg, split, namespace)
    if cfg.scenario == "temporal":
        return gen_temporal(cfg, None, split, namespace)
    return gen_weekday_pairs(cfg, None, split, namespace)


def build_pairs(items: Iterable[Item] | Mapping[str, Sequence[Item]], cap: int) -> list:
    """All strictly ordered pairs within each context, capped per context.

    Pairs are ranked by descending margin, ties broken by ``(winner_id,
    loser_id)``; the first ``cap`` survive. Equal outcomes produce no pair.
    Items without a context id are ignored.
    """
    if cap < 1:
        raise ConfigError("pair cap must be positive", "pair_cap")
    if isinstance(items, Mapping):
        groups = {k: list(v) for k, v in items.items()}
    else:
        groups = defaultdict(list)
        for it in items:
            if it.context_id is not None:
                groups[it.context_id].append(it)
    out = []
    for ctx in sorted(groups):
        members = groups[ctx]
        cands = []
        for a in members:
            for b in members:
                if a.outcome > b.outcome:
                    cands.append((-(a.outcome - b.outcome), a.id, b.id))
        cands.sort()
        for neg_margin, w, l in cands[:cap]:
            out.append(PreferencePair(ctx, w, l, -neg_margin))
    return out


def split_sizes(n: int, fractions: Sequence[float] = (0.6, 0.2, 0.2)) -> tuple:
    total = float(sum(fractions))
    if total <= 0:
        raise ConfigError("split fractions must sum to a positive value", "split_fractions")
    n_train = int(round(n * fractions[0] / total))
    n_valid = int(round(n * fractions[1] / total))
    n_valid = min(n_valid, n - n_train)
    return n_train, n_valid, n - n_train - n_valid


def generate_splits(cfg: DgpConfig, fractions: Sequence[float] = (0.6, 0.2, 0.2)) -> Dataset:
    """``cfg.n`` units (items, or contexts for weekday_marker) divided into train/valid/test.

    Each split draws from its own stream namespace.
    """
    from dataclasses import replace

    from .model import concat

    cfg.check()
    parts = []
    for split, size in zip(("train", "valid", "test"), split_sizes(cfg.n, fractions)):
        if size > 0:
            parts.append(generate(replace(cfg, n=size), split))
    return concat(parts)
