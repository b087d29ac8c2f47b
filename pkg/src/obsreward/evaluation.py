"""Metrics: pairwise ROC AUC, correlations, temporal pattern, marker rates, t-tests, best-of-n."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError, UndefinedCorrelationError
from .model import Item, PreferencePair
from .reward import RewardModel, predict_many
from .stats import t_sf_two_sided

T_TEST_VARIANT = "welch"
REGION_KEYS = ("W", "C", "E")


def roc_auc(pairs: Sequence[PreferencePair], model: RewardModel, items: Mapping[str, Item]) -> float:
    """Fraction of pairs the model orders correctly; exact score ties count 0.5."""
    if len(pairs) == 0:
        raise InputError("roc_auc needs at least one pair")
    try:
        winners = [items[p.winner_id] for p in pairs]
        losers = [items[p.loser_id] for p in pairs]
    except KeyError as e:
        raise InputError(f"pair references unknown item {e.args[0]!r}") from None
    return pair_auc(predict_many(model, winners), predict_many(model, losers))


def pair_auc(winner_scores, loser_scores) -> float:
    sw = np.asarray(winner_scores, dtype=float)
    sl = np.asarray(loser_scores, dtype=float)
    credit = np.count_nonzero(sw > sl) + 0.5 * np.count_nonzero(sw == sl)
    return float(credit) / len(sw)


def auc_from_scores(pos_scores, neg_scores) -> float:
    """Mann-Whitney AUC from midranks; equals the all-pairs count with ties at 0.5."""
    pos = np.asarray(pos_scores, dtype=float)
    neg = np.asarray(neg_scores, dtype=float)
    if pos.size == 0 or neg.size == 0:
        raise InputError("auc needs at least one positive and one negative score")
    allv = np.concatenate([pos, neg])
    order = np.argsort(allv, kind="stable")
    sorted_v = allv[order]
    # twice the midrank keeps everything integral
    ranks2 = np.empty(allv.size, dtype=np.int64)
    i = 0
    while i < allv.size:
        j = i
        while j + 1 < allv.size and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks2[order[i : j + 1]] = i + j + 2
        i = j + 1
    n1, n0 = pos.size, neg.size
    u2 = int(ranks2[:n1].sum()) - n1 * (n1 + 1)
    return u2 / (2 * n1 * n0)


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InputError(f"pearson needs equal-length vectors, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise InputError("pearson needs at least 2 observations")
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = float(da @ da), float(db @ db)
    if saa == 0.0 or sbb == 0.0:
        raise UndefinedCorrelationError("correlation undefined: zero variance")
    r = float(da @ db) / math.sqrt(saa * sbb)
    return max(-1.0, min(1.0, r))


def _monthly_means(months, values) -> dict:
    acc = defaultdict(list)
    for m, v in zip(months, values):
        acc[m].append(v)
    return {m: float(np.mean(v)) for m, v in acc.items()}


def temporal_corr(model: RewardModel, valid_items: Sequence[Item], train_items: Sequence[Item]) -> float:
    """Correlation of monthly mean predictions (valid) with monthly mean outcomes (train)."""
    for name, group in (("valid", valid_items), ("train", train_items)):
        if any(it.time_month is None for it in group):
            raise InputError(f"temporal_corr: {name} items need time_month")
    pred = _monthly_means([it.time_month for it in valid_items], predict_many(model, valid_items))
    obs = _monthly_means([it.time_month for it in train_items], [it.outcome for it in train_items])
    common = sorted(set(pred) & set(obs))
    if len(common) < 2:
        raise InputError(f"temporal_corr needs >= 2 months in both splits, got {len(common)}")
    return pearson([pred[m] for m in common], [obs[m] for m in common])


@dataclass(frozen=True)
class MarkerStats:
    rates: tuple
    mean: float
    se: float


def marker_stats(runs: Sequence[Sequence[bool]]) -> MarkerStats:
    """Per-run marker rates with their cross-run mean and standard error."""
    if len(runs) == 0:
        raise InputError("marker_stats needs at least one run")
    rates = []
    for k, run in enumerate(runs):
        if len(run) == 0:
            raise InputError(f"run {k} is empty")
        rates.append(float(np.mean(np.asarray(run, dtype=float))))
    r = np.asarray(rates)
    se = float(r.std(ddof=1) / math.sqrt(r.size)) if r.size > 1 else 0.0
    return MarkerStats(tuple(rates), float(r.mean()), se)


@dataclass(frozen=True)
class TTest:
    t: float
    p: float
    df: float

    def __post_init__(self):
        for name in ("t", "p", "df"):
            object.__setattr__(self, name, float(getattr(self, name)))


def welch_ttest(a, b) -> TTest:
    """Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise InputError("welch_ttest needs >= 2 observations per sample")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = float(a.mean() - b.mean())
    if va + vb == 0.0:
        if diff == 0.0:
            return TTest(0.0, 1.0, math.nan)
        return TTest(math.copysign(math.inf, diff), 0.0, math.nan)
    t = diff / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    return TTest(t, t_sf_two_sided(t, df), df)


def one_sample_ttest(x, mu: float = 0.0) -> TTest:
    """Two-sided one-sample t-test of mean(x) == mu."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise InputError("one_sample_ttest needs >= 2 observations")
    se = x.std(ddof=1) / math.sqrt(x.size)
    diff = float(x.mean() - mu)
    if se == 0.0:
        return TTest(0.0, 1.0, x.size - 1.0) if diff == 0 else TTest(math.copysign(math.inf, diff), 0.0, x.size - 1.0)
    t = diff / se
    return TTest(t, t_sf_two_sided(t, x.size - 1.0), x.size - 1.0)


def best_of_n(model: RewardModel, candidates: Mapping[str, Sequence[Item]]) -> dict:
    """Highest-scoring candidate per context; ties go to the smallest id."""
    chosen = {}
    for ctx in sorted(candidates):
        cands = sorted(candidates[ctx], key=lambda it: it.id)
        if not cands:
            raise InputError(f"context {ctx!r} has no candidates")
        scores = predict_many(model, cands)
        chosen[ctx] = cands[int(np.argmax(scores))]  # argmax returns the first maximum
    return chosen


def _mean_se(values) -> tuple:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def arm_report(selections: Mapping[str, Sequence[Sequence[Item]]]) -> list:
    """Aggregate best-of-n picks per arm across seeds.

    ``selections[arm]`` holds one list of chosen items per seed. Each row has
    the mean (and SE across seeds) of the per-seed mean selected sentiment and
    of the per-seed pick counts for the West / Central / East regions.
    """
    rows = []
    for arm in selections:
        sent, counts = [], {k: [] for k in REGION_KEYS}
        for picks in selections[arm]:
            s_vals = []
            c = dict.fromkeys(REGION_KEYS, 0)
            for it in picks:
                lat = it.latent or {}
                if "sentiment" not in lat or "region" not in lat:
                    raise InputError(f"item {it.id!r} lacks latent sentiment/region")
                s_vals.append(lat["sentiment"])
                r = int(lat["region"])
                if r > 0:
                    c[REGION_KEYS[r - 1]] += 1
            sent.append(float(np.mean(s_vals)) if s_vals else math.nan)
            for k in REGION_KEYS:
                counts[k].append(c[k])
        m, se = _mean_se(sent)
        row = {"arm": arm, "mean_sentiment": m, "se": se}
        for k in REGION_KEYS:
            row[k], row[f"{k}_se"] = _mean_se(counts[k])
        rows.append(row)
    return rows
