"""Experiment orchestration: lambda sweeps, scenario arm comparisons, the weekday study."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import dgp
from .deconfound import fit_dml, fit_iv2sls, fit_ols, residualize
from .errors import ConfigError, EstimatorError, InputError, ObsRewardError
from .evaluation import (
    arm_report,
    best_of_n,
    one_sample_ttest,
    pearson,
    roc_auc,
    temporal_corr,
    welch_ttest,
)
from .model import Dataset, DgpConfig, Item, concat
from .reward import FitOptions, RewardModel, fit_pairwise_bt, fit_ridge, predict_many

ARMS = (
    "oracle_sentiment",
    "sentiment_plus_noise",
    "naive_observed",
    "conf_in_embedding",
    "conf_in_head",
    "deconfound_iv",
    "deconfound_dml",
)
DEFAULT_GRID = tuple(float(x) for x in np.logspace(-5, 1, 15))
MARKER_DIM = 4


@dataclass(frozen=True)
class SweepReport:
    rows: tuple
    argmin_valid_lambda: float
    argmax_auc_lambda: float

    def row_at(self, lam: float) -> dict:
        return next(r for r in self.rows if r["lambda"] == lam)


@dataclass(frozen=True)
class EvalReport:
    scenario: str
    seeds: tuple
    rows: tuple
    per_seed: tuple = ()
    tests: dict = field(default_factory=dict)


def _map_ordered(fn: Callable, args: Sequence, threads: int) -> list:
    if threads <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, args))


def _mse(model: RewardModel, items: Sequence[Item]) -> float:
    y = np.array([it.outcome for it in items])
    r = y - predict_many(model, items)
    return float(r @ r) / len(items)


def run_lambda_sweep(ds: Dataset, grid: Sequence[float] = DEFAULT_GRID, opts: FitOptions = FitOptions()) -> SweepReport:
    """Fit ridge on the train split for each lambda and score valid MSE, test-pair AUC, temporal corr."""
    grid = [float(x) for x in grid]
    if not grid:
        raise ConfigError("lambda grid is empty", "grid")
    if any(not (x >= 0) or not math.isfinite(x) for x in grid):
        raise ConfigError("lambda grid values must be finite and >= 0", "grid")
    if len(set(grid)) != len(grid):
        raise ConfigError("lambda grid contains duplicates", "grid")
    train, valid = ds.items_in("train"), ds.items_in("valid")
    test_pairs = ds.pairs_in("test")
    if not train or not valid or not test_pairs:
        raise InputError("sweep needs train and valid items and test pairs")
    lookup = ds.by_id()
    X = np.array([it.embedding for it in train])
    y = np.array([it.outcome for it in train])
    has_months = all(it.time_month is not None for it in train + valid)
    rows = []
    for lam in sorted(grid):
        try:
            model = fit_ridge(X, y, replace(opts, lam=lam))
        except ObsRewardError as e:
            raise type(e)(f"lambda={lam}: {e}") from e
        tc = math.nan
        if has_months:
            try:
                tc = temporal_corr(model, valid, train)
            except EstimatorError:
                pass
        rows.append({
            "lambda": lam,
            "train_mse": _mse(model, train),
            "valid_mse": _mse(model, valid),
            "test_pair_auc": roc_auc(test_pairs, model, lookup),
            "temporal_corr": tc,
        })
    # ties resolve to the smallest lambda
    best_valid = min(rows, key=lambda r: (r["valid_mse"], r["lambda"]))
    best_auc = min(rows, key=lambda r: (-r["test_pair_auc"], r["lambda"]))
    return SweepReport(tuple(rows), best_valid["lambda"], best_auc["lambda"])


def temporal_sweep_dataset(cfg: DgpConfig, n_valid: Optional[int] = None, n_test_pairs: Optional[int] = None) -> Dataset:
    """Observational train/valid items plus same-month test pairs (contexts of 2)."""
    if cfg.scenario != "temporal":
        raise ConfigError("temporal_sweep_dataset needs scenario 'temporal'", "scenario")
    n_valid = n_valid or max(cfg.n // 3, 12)
    n_test = 2 * (n_test_pairs or cfg.n)
    train = dgp.gen_temporal(replace(cfg, context_size=0), split="train")
    valid = dgp.gen_temporal(replace(cfg, n=n_valid, context_size=0), split="valid")
    test = dgp.gen_temporal(replace(cfg, n=n_test, context_size=2), split="test")
    return concat([train, valid, test])


def _augment(items: Sequence[Item], name: str) -> list:
    return [replace(it, embedding=it.embedding + (it.confounders[name],)) for it in items]


def _sentiments(items: Sequence[Item]) -> np.ndarray:
    return np.array([it.latent["sentiment"] for it in items])


def _group(items: Sequence[Item]) -> dict:
    out = {}
    for it in items:
        out.setdefault(it.context_id, []).append(it)
    return out


def _scenario_seed(cfg, arms, seed, lam, candidate_k, n_valid, n_candidate_sets, dml_folds):
    cfg_s = replace(cfg, seed=seed, context_size=0)
    train = dgp.generate(cfg_s, "train")
    valid = dgp.generate(replace(cfg_s, n=n_valid), "valid")
    cands = dgp.generate(replace(cfg_s, n=n_candidate_sets * candidate_k, context_size=candidate_k), "candidates")
    conf = "popularity"
    opts = FitOptions(lam=lam, seed=seed)
    X = np.array([it.embedding for it in train.items])
    y = np.array([it.outcome for it in train.items])
    s_train = _sentiments(train.items)
    s_valid = _sentiments(valid.items)
    out = {}
    for arm in arms:
        tr_items, va_items, ca_items = train.items, valid.items, cands.items
        alpha = math.nan
        try:
            if arm == "oracle_sentiment":
                model = fit_ridge(X, s_train, opts)
            elif arm == "sentiment_plus_noise":
                noisy = s_train + np.array([it.latent["target_noise"] for it in train.items])
                model = fit_ridge(X, noisy, opts)
            elif arm == "naive_observed":
                model = fit_ridge(X, y, opts)
            elif arm == "conf_in_embedding":
                tr_items, va_items, ca_items = (_augment(g, conf) for g in (train.items, valid.items, cands.items))
                model = fit_ridge(np.array([it.embedding for it in tr_items]), y, opts)
            elif arm == "conf_in_head":
                p = np.array([it.confounders[conf] for it in train.items])
                model = fit_ridge(X, y, opts, extra_cols={conf: p})
            elif arm in ("deconfound_iv", "deconfound_dml"):
                if arm == "deconfound_iv":
                    fit = fit_iv2sls(train, conf, dgp.INSTRUMENT_NAMES)
                else:
                    fit = fit_dml(train, conf, dml_folds, opts)
                alpha = fit.alpha[conf]
                y_res = np.array([it.outcome for it in residualize(train, fit).items])
                model = fit_ridge(X, y_res, opts)
            else:
                raise ConfigError(f"unknown arm {arm!r}", "arms")
        except EstimatorError as e:
            raise type(e)(f"arm={arm} seed={seed}: {e}") from e
        picks = best_of_n(model, _group(ca_items))
        chosen = [picks[c] for c in sorted(picks)]
        tagged = float(np.mean([it.latent["region"] > 0 for it in chosen]))
        out[arm] = {
            "arm": arm,
            "seed": seed,
            "corr_train": pearson(predict_many(model, tr_items), s_train),
            "corr_valid": pearson(predict_many(model, va_items), s_valid),
            "mean_sentiment": float(np.mean(_sentiments(chosen))),
            "tagged_rate": tagged,
            "alpha_hat": alpha,
            "_picks": chosen,
        }
    return out


def run_scenario(
    cfg: DgpConfig,
    arms: Sequence[str] = ARMS,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    lam: float = 1e-3,
    candidate_k: int = 8,
    n_valid: Optional[int] = None,
    n_candidate_sets: int = 300,
    dml_folds: int = 5,
    threads: int = 1,
) -> EvalReport:
    """Compare reward-training arms on one confounding scenario across seeds.

    Every arm of a given seed sees the same train / valid / candidate data.
    """
    cfg.check()
    if cfg.scenario not in ("orthogonal", "entangled"):
        raise ConfigError("run_scenario supports the orthogonal and entangled scenarios", "scenario")
    arms = list(arms)
    unknown = [a for a in arms if a not in ARMS]
    if unknown:
        raise ConfigError(f"unknown arm(s) {unknown}; choose from {ARMS}", "arms")
    if len(set(arms)) != len(arms):
        raise ConfigError("duplicate arms requested", "arms")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigError("need at least one seed", "seeds")
    n_valid = n_valid or max(cfg.n // 3, 10)
    results = _map_ordered(
        lambda s: _scenario_seed(cfg, arms, s, lam, candidate_k, n_valid, n_candidate_sets, dml_folds),
        seeds, threads,
    )
    table = arm_report({a: [r[a]["_picks"] for r in results] for a in arms})
    rows = []
    for row in table:
        a = row["arm"]
        per = [r[a] for r in results]
        for key in ("corr_train", "corr_valid", "tagged_rate", "alpha_hat"):
            vals = np.array([p[key] for p in per])
            row[key] = float(vals.mean())
            row[f"{key}_se"] = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        rows.append(row)
    per_seed = tuple(
        {k: v for k, v in r[a].items() if not k.startswith("_")} for r in results for a in arms
    )
    return EvalReport(cfg.scenario, tuple(seeds), tuple(rows), per_seed)


def _marker_pick_rates(model: RewardModel, contexts: dict) -> tuple:
    picks = best_of_n(model, contexts)
    rate = float(np.mean([picks[c].time_weekday == dgp.MONDAY for c in sorted(picks)]))
    base = float(np.mean([np.mean([it.time_weekday == dgp.MONDAY for it in contexts[c]]) for c in sorted(contexts)]))
    return rate, base


def _weekday_seed(cfg, skew, seed, lam, n_test_contexts, max_iters):
    cfg_s = replace(cfg, seed=seed)
    train = dgp.gen_weekday_pairs(cfg_s, skew, "train")
    test = dgp.gen_weekday_pairs(replace(cfg_s, n=n_test_contexts), skew, "test")
    opts = FitOptions(lam=lam, seed=seed, max_iters=max_iters, tol=1e-7)
    naive = fit_pairwise_bt(train.pairs, train, opts)
    fit = fit_ols(train, ["monday"])
    res = residualize(train, fit)
    res_pairs = dgp.build_pairs(res.items, cfg.pair_cap)
    deconf = fit_pairwise_bt(res_pairs, res, opts)
    contexts = _group(test.items)
    out = {}
    for arm, model in (("naive", naive), ("deconfounded", deconf)):
        rate, base = _marker_pick_rates(model, contexts)
        out[arm] = {
            "arm": arm,
            "seed": seed,
            "marker_weight": float(model.weights[MARKER_DIM]),
            "marker_pick_rate": rate,
            "base_marker_rate": base,
            "alpha_hat": fit.alpha["monday"] if arm == "deconfounded" else math.nan,
            "n_pairs": len(train.pairs) if arm == "naive" else len(res_pairs),
            "n_iter": model.n_iter,
        }
    return out


def run_weekday_study(
    cfg: DgpConfig,
    skew: Optional[float] = None,
    seeds: Sequence[int] = tuple(range(10)),
    lam: float = 1e-3,
    n_test_contexts: int = 1000,
    max_iters: int = 20000,
    threads: int = 1,
) -> EvalReport:
    """Bradley-Terry on raw vs weekday-residualized pairs; marker weight and pick-rate statistics."""
    if cfg.scenario != "weekday_marker":
        raise ConfigError("run_weekday_study needs scenario 'weekday_marker'", "scenario")
    cfg.check()
    skew = cfg.skew if skew is None else skew
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigError("need at least one seed", "seeds")
    results = _map_ordered(lambda s: _weekday_seed(cfg, skew, s, lam, n_test_contexts, max_iters), seeds, threads)
    rows, tests = [], {"t_test_variant": "welch", "skew": skew}
    weights, rates = {}, {}
    for arm in ("naive", "deconfounded"):
        w = np.array([r[arm]["marker_weight"] for r in results])
        pr = np.array([r[arm]["marker_pick_rate"] for r in results])
        base = np.array([r[arm]["base_marker_rate"] for r in results])
        weights[arm], rates[arm] = w, pr
        row = {
            "arm": arm,
            "marker_weight": float(w.mean()),
            "marker_weight_se": float(w.std(ddof=1) / math.sqrt(w.size)) if w.size > 1 else 0.0,
            "marker_pick_rate": float(pr.mean()),
            "marker_pick_rate_se": float(pr.std(ddof=1) / math.sqrt(pr.size)) if pr.size > 1 else 0.0,
            "base_marker_rate": float(base.mean()),
        }
        if w.size > 1:
            t = one_sample_ttest(w)
            row["marker_weight_t"], row["marker_weight_p"] = t.t, t.p
            tb = one_sample_ttest(pr - base)
            row["pick_excess_t"], row["pick_excess_p"] = tb.t, tb.p
        rows.append(row)
    if len(seeds) > 1:
        tw = welch_ttest(weights["naive"], weights["deconfounded"])
        tr = welch_ttest(rates["naive"], rates["deconfounded"])
        tests.update(weight_t=tw.t, weight_p=tw.p, rate_t=tr.t, rate_p=tr.p)
    per_seed = tuple(r[a] for r in results for a in ("naive", "deconfounded"))
    return EvalReport("weekday_marker", tuple(seeds), tuple(rows), per_seed, tests)
