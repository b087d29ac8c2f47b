"""Linear reward heads: closed-form ridge on outcomes, Bradley-Terry on pairs.

Penalty convention: lambda * |w|^2 is added to the *mean* loss. Bias and any
confounder head columns are unpenalized unless ``intercept_penalized``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DivergenceError, InputError, RankDeficiencyError
from .kernels import bt_loss_grad
from .model import Dataset, Item, PreferencePair

HEADS = ("regression", "pairwise")


@dataclass(frozen=True)
class FitOptions:
    lam: float = 0.0
    max_iters: int = 5000
    tol: float = 1e-8
    learning_rate: float = 1.0
    intercept_penalized: bool = False
    fit_intercept: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0 or not math.isfinite(self.lam):
            raise ConfigError(f"lambda must be finite and >= 0, got {self.lam}", "lambda")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0", "tol")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0", "learning_rate")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1", "max_iters")


@dataclass(frozen=True)
class RewardModel:
    weights: np.ndarray
    bias: float = 0.0
    confounder_coeffs: Optional[Mapping[str, float]] = None
    lam: float = 0.0
    head: str = "regression"
    n_iter: Optional[int] = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))
        if self.confounder_coeffs is not None:
            object.__setattr__(
                self, "confounder_coeffs",
                MappingProxyType({k: float(v) for k, v in self.confounder_coeffs.items()}),
            )
        if self.head not in HEADS:
            raise ConfigError(f"head must be one of {HEADS}", "head")

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    def to_dict(self) -> dict:
        return {
            "head": self.head,
            "lambda": self.lam,
            "bias": self.bias,
            "weights": [float(x) for x in self.weights],
            "confounder_coeffs": dict(self.confounder_coeffs) if self.confounder_coeffs is not None else {},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RewardModel":
        coeffs = d.get("confounder_coeffs") or None
        return cls(np.asarray(d["weights"], dtype=float), d.get("bias", 0.0), coeffs, d.get("lambda", 0.0), d.get("head", "regression"))


def zero_model(d: int) -> RewardModel:
    return RewardModel(np.zeros(d))


def _check_finite(a: np.ndarray, what: str):
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        raise InputError(f"non-finite value in {what} at index {tuple(int(i) for i in bad)}")


def fit_ridge(
    X: np.ndarray,
    y: np.ndarray,
    opts: FitOptions = FitOptions(),
    extra_cols: Optional[Mapping[str, np.ndarray]] = None,
) -> RewardModel:
    """Minimize (1/n) sum (y - Xw - b)^2 + lam |w|^2 by Cholesky on the normal equations.

    ``extra_cols`` (name -> column) join the design as unpenalized head
    features; their coefficients land in ``confounder_coeffs``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise InputError(f"shape mismatch: X {X.shape}, y {y.shape}")
    n, d = X.shape
    if n < 1:
        raise InputError("need at least one row")
    _check_finite(X, "X")
    _check_finite(y, "y")
    names = list(extra_cols) if extra_cols else []
    if names:
        E = np.column_stack([np.asarray(extra_cols[k], dtype=float) for k in names])
        if E.shape[0] != n:
            raise InputError(f"extra column length {E.shape[0]} != {n}")
        _check_finite(E, "extra_cols")
        A = np.hstack([X, E])
    else:
        A = X
    k = A.shape[1]
    penalty = np.zeros(k)
    penalty[:d] = opts.lam
    if opts.fit_intercept and opts.intercept_penalized:
        A = np.hstack([A, np.ones((n, 1))])
        penalty = np.append(penalty, opts.lam)
        mu_a, mu_y = np.zeros(A.shape[1]), 0.0
    elif opts.fit_intercept:
        mu_a, mu_y = A.mean(axis=0), float(y.mean())
    else:
        mu_a, mu_y = np.zeros(k), 0.0
    Ac = A - mu_a
    yc = y - mu_y
    G = Ac.T @ Ac / n + np.diag(penalty)
    rhs = Ac.T @ yc / n
    coef = _cholesky_solve(G, rhs, opts.lam)
    if opts.fit_intercept and opts.intercept_penalized:
        bias = float(coef[-1])
        coef = coef[:-1]
    else:
        bias = mu_y - float(mu_a @ coef)
    confounder_coeffs = {nm: float(c) for nm, c in zip(names, coef[d:])} if names else None
    return RewardModel(coef[:d], bias, confounder_coeffs, opts.lam, "regression")


def _cholesky_solve(G: np.ndarray, rhs: np.ndarray, lam: float) -> np.ndarray:
    if G.shape[0] == 0:
        return np.zeros(0)
    scale = max(float(np.max(np.abs(np.diag(G)))), 1e-300)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError(
            f"regularized Gram matrix is not positive definite (lambda={lam}); "
            "design is rank deficient"
        ) from None
    if float(np.min(np.diag(L))) ** 2 < 1e-12 * scale:
        raise RankDeficiencyError(f"design is numerically rank deficient (lambda={lam})")
    z = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, z)


def pair_differences(pairs: Sequence[PreferencePair], items: Mapping[str, Item] | Dataset) -> np.ndarray:
    """(m, d) matrix of winner minus loser embeddings."""
    lookup = items.by_id() if isinstance(items, Dataset) else items
    try:
        W = np.array([lookup[p.winner_id].embedding for p in pairs], dtype=float)
        L = np.array([lookup[p.loser_id].embedding for p in pairs], dtype=float)
    except KeyError as e:
        raise InputError(f"pair references unknown item {e.args[0]!r}") from None
    return np.ascontiguousarray(W - L)


def bt_objective(diffs: np.ndarray, w: np.ndarray, lam: float):
    """Loss and gradient of the mean BT negative log-likelihood plus lam |w|^2."""
    diffs = np.ascontiguousarray(diffs, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    if diffs.shape[0] == 0:
        return lam * float(w @ w), 2.0 * lam * w
    loss, grad = bt_loss_grad(diffs, w, float(lam))
    return float(loss), np.asarray(grad)


def fit_pairwise_bt(
    pairs: Sequence[PreferencePair],
    items: Mapping[str, Item] | Dataset,
    opts: FitOptions = FitOptions(),
) -> RewardModel:
    """Full-batch gradient descent on the BT loss from zero init.

    Stops when the gradient norm falls below ``opts.tol`` or after
    ``opts.max_iters`` steps. The bias cancels in score differences and is 0.
    """
    if len(pairs) == 0:
        raise InputError("fit_pairwise_bt needs at least one pair")
    D = pair_differences(pairs, items)
    _check_finite(D, "pair embeddings")
    w = np.zeros(D.shape[1])
    it = 0
    # overflow is detected explicitly below, so numpy's warnings are noise
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(1, opts.max_iters + 1):
            loss, grad = bt_objective(D, w, opts.lam)
            if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise DivergenceError(f"BT loss became non-finite at iteration {it}", it)
            if float(np.sqrt(grad @ grad)) < opts.tol:
                break
            w = w - opts.learning_rate * grad
    return RewardModel(w, 0.0, None, opts.lam, "pairwise", n_iter=it)


def predict(model: RewardModel, item: Item) -> float:
    e = item.embedding
    if len(e) != model.d:
        raise InputError(f"item {item.id!r}: embedding length {len(e)} != model dimension {model.d}")
    score = float(np.dot(model.weights, e)) + model.bias
    if model.confounder_coeffs:
        for name, c in model.confounder_coeffs.items():
            if name not in item.confounders:
                raise InputError(f"item {item.id!r}: missing confounder {name!r}")
            score += c * item.confounders[name]
    return score


def predict_many(model: RewardModel, items: Sequence[Item]) -> np.ndarray:
    """Vectorized ``predict`` over a list of items."""
    if not items:
        return np.zeros(0)
    X = np.array([it.embedding for it in items], dtype=float)
    if X.shape[1] != model.d:
        raise InputError(f"embedding length {X.shape[1]} != model dimension {model.d}")
    out = X @ model.weights + model.bias
    if model.confounder_coeffs:
        for name, c in model.confounder_coeffs.items():
            try:
                col = np.array([it.confounders[name] for it in items], dtype=float)
            except KeyError:
                missing = next(it.id for it in items if name not in it.confounders)
                raise InputError(f"item {missing!r}: missing confounder {name!r}") from None
            out = out + c * col
    return out


def grad_check(diffs: np.ndarray, w: np.ndarray, lam: float = 0.0, step: float = 1e-5) -> float:
    """Max relative error between the analytic BT gradient and central differences."""
    diffs = np.asarray(diffs, dtype=float).reshape(-1, len(w))
    w = np.asarray(w, dtype=float)
    if diffs.shape[0] == 0 and lam == 0:
        return 0.0
    _, g = bt_objective(diffs, w, lam)
    worst = 0.0
    for k in range(len(w)):
        e = np.zeros_like(w)
        e[k] = step
        fd = (bt_objective(diffs, w + e, lam)[0] - bt_objective(diffs, w - e, lam)[0]) / (2 * step)
        denom = max(abs(fd), abs(g[k]), 1e-8)
        worst = max(worst, abs(fd - g[k]) / denom)
    return worst
