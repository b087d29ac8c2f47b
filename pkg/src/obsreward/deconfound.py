"""Confounder-coefficient estimation and outcome residualization.

All estimators fit on the training split of the dataset. Residualization
subtracts only the slope terms, never the intercept: constant shifts do not
change rankings or pairwise training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import rng
from .errors import DegenerateInstrumentError, FoldSizeError, InputError, RankDeficiencyError
from .model import Dataset
from .reward import FitOptions, fit_ridge

METHODS = ("ols", "iv2sls", "dml")
WEAK_INSTRUMENT_F = 10.0
_DML_FOLD_NS = 0x7F00


@dataclass(frozen=True)
class DeconfoundFit:
    method: str
    alpha: Mapping[str, float]
    stderr: Mapping[str, float]
    n_used: int
    intercept: float = 0.0
    first_stage_F: Optional[float] = None
    weak_instrument: Optional[bool] = None
    folds: Optional[int] = None
    fold_residual_means: Optional[tuple] = None

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "alpha": dict(self.alpha),
            "stderr": dict(self.stderr),
            "n_used": self.n_used,
            "intercept": self.intercept,
        }
        if self.method == "iv2sls":
            f = self.first_stage_F
            out["first_stage_F"] = f if f is not None and math.isfinite(f) else None
            out["weak_instrument"] = self.weak_instrument
        if self.method == "dml":
            out["folds"] = self.folds
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "DeconfoundFit":
        f = d.get("first_stage_F")
        if d["method"] == "iv2sls" and f is None:
            f = math.inf
        return cls(
            d["method"], dict(d["alpha"]), dict(d["stderr"]), int(d["n_used"]),
            float(d.get("intercept", 0.0)), f, d.get("weak_instrument"), d.get("folds"),
        )


def _column(items, name: str, kind: str) -> np.ndarray:
    try:
        return np.array([getattr(it, kind)[name] for it in items], dtype=float)
    except KeyError:
        missing = [it.id for it in items if name not in getattr(it, kind)]
        raise InputError(f"{kind[:-1]} {name!r} missing on items {missing[:10]}") from None


def _lstsq(A: np.ndarray, y: np.ndarray):
    """OLS via the normal equations with an explicit rank check."""
    G = A.T @ A
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError("design matrix is rank deficient (collinear columns)") from None
    if float(np.min(np.diag(L))) ** 2 < 1e-12 * float(np.max(np.diag(G))):
        raise RankDeficiencyError("design matrix is numerically rank deficient (collinear columns)")
    Ginv = np.linalg.inv(G)
    return Ginv @ (A.T @ y), Ginv


def fit_ols(ds: Dataset, confounders: Sequence[str]) -> DeconfoundFit:
    """Regress outcome on the named confounders plus intercept (homoskedastic SEs)."""
    confounders = list(confounders)
    items = ds.items_in("train")
    n, k = len(items), len(confounders)
    if k == 0:
        raise InputError("fit_ols needs at least one confounder name")
    if n < k + 2:
        raise InputError(f"fit_ols needs >= {k + 2} training items, got {n}")
    y = np.array([it.outcome for it in items])
    A = np.column_stack([np.ones(n)] + [_column(items, c, "confounders") for c in confounders])
    beta, Ginv = _lstsq(A, y)
    resid = y - A @ beta
    sigma2 = float(resid @ resid) / (n - k - 1)
    se = np.sqrt(np.maximum(np.diag(Ginv) * sigma2, 0.0))
    return DeconfoundFit(
        "ols",
        {c: float(beta[j + 1]) for j, c in enumerate(confounders)},
        {c: float(se[j + 1]) for j, c in enumerate(confounders)},
        n,
        float(beta[0]),
    )


def fit_iv2sls(ds: Dataset, confounder: str, instruments: Sequence[str]) -> DeconfoundFit:
    """Two-stage least squares for one endogenous confounder.

    Stage 1 regresses the confounder on instruments + intercept; stage 2
    regresses outcome on the fitted values + intercept. Standard errors use
    residuals against the *observed* confounder.
    """
    instruments = list(instruments)
    if not instruments:
        raise InputError("fit_iv2sls needs at least one instrument")
    items = ds.items_in("train")
    n, q = len(items), len(instruments)
    if n < q + 2:
        raise InputError(f"fit_iv2sls needs >= {q + 2} training items, got {n}")
    y = np.array([it.outcome for it in items])
    p = _column(items, confounder, "confounders")
    Z = []
    for name in instruments:
        # an instrument may also be a confounder column (e.g. self-instrumenting)
        kind = "instruments" if all(name in it.instruments for it in items) else "confounders"
        z = _column(items, name, kind)
        if float(np.ptp(z)) == 0.0:
            raise DegenerateInstrumentError(f"instrument {name!r} has zero variance in the sample")
        Z.append(z)
    Z = np.column_stack([np.ones(n)] + Z)
    gamma, _ = _lstsq(Z, p)
    p_hat = Z @ gamma
    rss_full = float(np.sum((p - p_hat) ** 2))
    rss_restricted = float(np.sum((p - p.mean()) ** 2))
    if rss_full <= 1e-14 * max(rss_restricted, 1e-300):
        F = math.inf
    else:
        F = ((rss_restricted - rss_full) / q) / (rss_full / (n - q - 1))
    X_hat = np.column_stack([np.ones(n), p_hat])
    beta, Ginv = _lstsq(X_hat, y)
    resid = y - beta[0] - beta[1] * p
    sigma2 = float(resid @ resid) / (n - 2)
    se = math.sqrt(max(float(Ginv[1, 1]) * sigma2, 0.0))
    return DeconfoundFit(
        "iv2sls", {confounder: float(beta[1])}, {confounder: se}, n, float(beta[0]),
        first_stage_F=float(F), weak_instrument=bool(F < WEAK_INSTRUMENT_F),
    )


def fold_assignment(n: int, K: int, seed: int) -> np.ndarray:
    """Balanced fold labels 0..K-1 from a seeded permutation."""
    perm = rng.permutation(seed, _DML_FOLD_NS, n)
    folds = np.empty(n, dtype=int)
    folds[perm] = np.arange(n) % K
    return folds


def fit_dml(
    ds: Dataset,
    confounder: str,
    K: int = 5,
    opts: FitOptions = FitOptions(lam=1e-3),
    features: Optional[np.ndarray] = None,
) -> DeconfoundFit:
    """Cross-fitted partialling-out estimate of the confounder coefficient.

    On each fold's complement, ridge nuisances E[y|X] and E[p|X] are fitted on
    the embeddings (or ``features``); held-out residuals are pooled and
    alpha = sum(p~ y~) / sum(p~^2) with a heteroskedasticity-robust SE.
    """
    if K < 2:
        raise InputError(f"DML needs K >= 2 folds, got {K}")
    items = ds.items_in("train")
    n = len(items)
    if n < 2 * K:
        raise FoldSizeError(f"DML with K={K} needs >= {2 * K} training items, got {n}")
    X = np.array([it.embedding for it in items], dtype=float) if features is None else np.asarray(features, dtype=float)
    y = np.array([it.outcome for it in items])
    p = _column(items, confounder, "confounders")
    folds = fold_assignment(n, K, opts.seed)
    y_res = np.empty(n)
    p_res = np.empty(n)
    fold_means = []
    for k in range(K):
        held = folds == k
        if held.sum() < 2 or (~held).sum() < 2:
            raise FoldSizeError(f"fold {k} has {int(held.sum())} items; need >= 2")
        my = fit_ridge(X[~held], y[~held], opts)
        mp = fit_ridge(X[~held], p[~held], opts)
        y_res[held] = y[held] - (X[held] @ my.weights + my.bias)
        p_res[held] = p[held] - (X[held] @ mp.weights + mp.bias)
        fold_means.append((float(p_res[held].mean()), float(y_res[held].mean()), int(held.sum())))
    spp = float(p_res @ p_res)
    if spp <= 0:
        raise RankDeficiencyError(f"confounder {confounder!r} is fully explained by the nuisance features")
    alpha = float(p_res @ y_res) / spp
    eps = y_res - alpha * p_res
    se = math.sqrt(float(np.sum(p_res**2 * eps**2))) / spp
    return DeconfoundFit(
        "dml", {confounder: alpha}, {confounder: se}, n,
        folds=K, fold_residual_means=tuple(fold_means),
    )


def residualize(ds: Dataset, fit: DeconfoundFit) -> Dataset:
    """New dataset with ``outcome - sum_c alpha_c * c`` on every item (all splits)."""
    names = list(fit.alpha)
    missing = [it.id for it in ds.items if any(c not in it.confounders for c in names)]
    if missing:
        raise InputError(f"confounder(s) {names} missing on items: {missing}")
    items = []
    for it in ds.items:
        shift = sum(fit.alpha[c] * it.confounders[c] for c in names)
        items.append(it if shift == 0 else it.with_outcome(it.outcome - shift))
    return ds.with_items(items)
