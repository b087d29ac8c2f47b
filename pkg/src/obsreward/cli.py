"""Command-line interface.

Exit codes: 0 success, 2 usage/config error, 3 I/O error, 4 estimator error.
"""

from __future__ import annotations

import functools
import math
import os
import re
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__, dgp, fileio, harness
from .deconfound import DeconfoundFit, fit_dml, fit_iv2sls, fit_ols, residualize
from .errors import ConfigError, EstimatorError, InputError, ObsRewardError
from .evaluation import T_TEST_VARIANT, pearson, predict_many, roc_auc, temporal_corr
from .model import DgpConfig, validate
from .reward import FitOptions, RewardModel, fit_pairwise_bt, fit_ridge

EXIT_USAGE, EXIT_IO, EXIT_ESTIMATOR = 2, 3, 4

SWEEP_COLUMNS = ("lambda", "train_mse", "valid_mse", "test_pair_auc", "temporal_corr")
SCENARIO_COLUMNS = (
    "arm", "mean_sentiment", "se", "W", "W_se", "C", "C_se", "E", "E_se",
    "corr_train", "corr_train_se", "corr_valid", "corr_valid_se",
    "tagged_rate", "tagged_rate_se", "alpha_hat", "alpha_hat_se",
)
SCENARIO_SEED_COLUMNS = ("arm", "seed", "corr_train", "corr_valid", "mean_sentiment", "tagged_rate", "alpha_hat")
WEEKDAY_COLUMNS = (
    "arm", "marker_weight", "marker_weight_se", "marker_weight_t", "marker_weight_p",
    "marker_pick_rate", "marker_pick_rate_se", "base_marker_rate", "pick_excess_t", "pick_excess_p",
)
WEEKDAY_SEED_COLUMNS = ("arm", "seed", "marker_weight", "marker_pick_rate", "base_marker_rate", "alpha_hat", "n_pairs", "n_iter")


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def guarded(fn):
    """Map library exceptions onto the stable exit-code contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, InputError) as e:
            _fail(EXIT_USAGE, str(e))
        except EstimatorError as e:
            _fail(EXIT_ESTIMATOR, f"{type(e).__name__}: {e}")
        except OSError as e:
            _fail(EXIT_IO, str(e))
        except ObsRewardError as e:
            _fail(e.exit_code, str(e))

    return wrapper


_GRID_RE = re.compile(r"^\s*(logspace|linspace)\(\s*([^,]+),\s*([^,]+),\s*(\d+)\s*\)\s*$")


def parse_grid(spec: str) -> list:
    """``logspace(a,b,n)`` (base 10), ``linspace(a,b,n)``, or a comma list."""
    m = _GRID_RE.match(spec)
    try:
        if m:
            a, b, n = float(m.group(2)), float(m.group(3)), int(m.group(4))
            if n < 1:
                raise ValueError
            fn = np.logspace if m.group(1) == "logspace" else np.linspace
            return [float(x) for x in fn(a, b, n)]
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse grid spec {spec!r}", "grid") from None


def _parse_list(spec, cast=str) -> list:
    if spec is None:
        return None
    try:
        out = []
        for tok in spec.split(","):
            tok = tok.strip()
            if not tok:
                continue
            if cast is int and re.fullmatch(r"\d+-\d+", tok):
                lo, hi = map(int, tok.split("-"))
                out.extend(range(lo, hi + 1))
            else:
                out.append(cast(tok))
        return out
    except ValueError:
        raise ConfigError(f"cannot parse list {spec!r}") from None


def _seed_range(seeds) -> str:
    seeds = list(seeds)
    return f"{seeds[0]}" if len(seeds) == 1 else f"{seeds[0]}-{seeds[-1]}"


def _metadata(config, seeds, **extra) -> dict:
    meta = {"tool": "obsreward", "version": __version__, "config_hash": fileio.config_hash(config), "seeds": list(seeds)}
    meta.update(extra)
    return meta


def _threads(n):
    return n if n and n > 0 else (os.cpu_count() or 1)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="obsreward")
def main():
    """Reward modelling on confounded observational outcomes.

    \b
    Config file (JSON) top-level keys; unknown keys are rejected:
      dgp        scenario (orthogonal|entangled|temporal|weekday_marker), n, seed
                 [required]; coef_confounder=0.1, coef_entangle=-10.5,
                 region_levels=[1,2,3], noise_outcome_sd=0.1,
                 noise_confounder_sd=0.5, nuisance_dims=8,
                 region_prob=[.25,.25,.25,.25] (none,west,central,east),
                 context_size=0, pair_cap=10, month_trace=0.05,
                 month_trace_noise=0.02, skew=0.52, min_context=2, max_context=5
      fit        lambda=0.001, max_iters=5000, tol=1e-8, learning_rate=1.0,
                 intercept_penalized=false, fit_intercept=true
      deconfound method=iv, confounder=popularity, instruments=region one-hot, folds=5
      eval       arms=all, seeds=[0..4], candidate_k=8, n_valid=n/3,
                 n_candidate_sets=300, grid="logspace(-5,1,15)", skew=dgp.skew,
                 split_fractions=[0.6,0.2,0.2]
      output     dir
    """


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Dataset directory to write.")
@guarded
def simulate(config_path, out):
    """Generate a synthetic dataset (items.jsonl + pairs.jsonl)."""
    doc = _load_config(config_path)
    cfg = DgpConfig.from_dict(doc["dgp"])
    fractions = doc.get("eval", {}).get("split_fractions", (0.6, 0.2, 0.2))
    ds = dgp.generate_splits(cfg, fractions)
    fileio.write_dataset(ds, out)
    click.echo(f"wrote {len(ds.items)} items, {len(ds.pairs)} pairs (scenario={cfg.scenario}) to {out}")


def _load_config(path) -> dict:
    if not os.path.exists(path):
        raise OSError(f"config file not found: {path}")
    return fileio.load_config(path)


def _load_data(path):
    if not (Path(path) / fileio.ITEMS_FILE).exists():
        raise OSError(f"no {fileio.ITEMS_FILE} in {path}")
    ds = fileio.read_dataset(path)
    problems = validate(ds)
    if problems:
        raise InputError("dataset invalid: " + "; ".join(problems[:10]))
    return ds


@main.command()
@click.option("--data", required=True, type=click.Path(file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Model JSON to write.")
@click.option("--lambda", "lam", default=1e-3, show_default=True, type=float)
@click.option("--head", type=click.Choice(["regression", "pairwise"]), default="regression", show_default=True)
@click.option("--confounder", default=None, help="Confounder added as an unpenalized head feature (regression only).")
@click.option("--split", default="train", show_default=True)
@click.option("--max-iters", default=5000, show_default=True, type=int)
@click.option("--learning-rate", default=1.0, show_default=True, type=float)
@guarded
def train(data, out, lam, head, confounder, split, max_iters, learning_rate):
    """Fit a linear reward head on a dataset split."""
    ds = _load_data(data)
    opts = FitOptions(lam=lam, max_iters=max_iters, learning_rate=learning_rate)
    if head == "pairwise":
        model = fit_pairwise_bt(ds.pairs_in(split), ds, opts)
    else:
        items = ds.items_in(split)
        if not items:
            raise InputError(f"split {split!r} has no items")
        X = np.array([it.embedding for it in items])
        y = np.array([it.outcome for it in items])
        extra = None
        if confounder:
            extra = {confounder: np.array([it.confounders.get(confounder, math.nan) for it in items])}
        model = fit_ridge(X, y, opts, extra)
    fileio.write_json(out, model.to_dict())
    click.echo(f"wrote {head} model (d={model.d}, lambda={lam}) to {out}")


@main.command()
@click.option("--data", required=True, type=click.Path(file_okay=False))
@click.option("--method", type=click.Choice(["ols", "iv", "dml"]), default="iv", show_default=True)
@click.option("--confounder", default="popularity", show_default=True)
@click.option("--instruments", default=",".join(dgp.INSTRUMENT_NAMES), show_default=True)
@click.option("--folds", default=5, show_default=True, type=int)
@click.option("--lambda", "lam", default=1e-3, show_default=True, type=float, help="Nuisance ridge strength (dml).")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Fit JSON to write.")
@click.option("--residualized", default=None, type=click.Path(file_okay=False), help="Also write the residualized dataset here.")
@guarded
def deconfound(data, method, confounder, instruments, folds, lam, seed, out, residualized):
    """Estimate a confounder coefficient and optionally residualize outcomes."""
    ds = _load_data(data)
    if method == "ols":
        fit = fit_ols(ds, _parse_list(confounder))
    elif method == "iv":
        fit = fit_iv2sls(ds, confounder, _parse_list(instruments))
        if fit.weak_instrument:
            click.echo(f"warning: weak instruments (first-stage F={fit.first_stage_F:.2f} < 10)", err=True)
    else:
        fit = fit_dml(ds, confounder, folds, FitOptions(lam=lam, seed=seed))
    fileio.write_json(out, fit.to_dict())
    if residualized:
        fileio.write_dataset(residualize(ds, fit), residualized)
    for name in fit.alpha:
        click.echo(f"{fit.method}: alpha[{name}] = {fit.alpha[name]:.6g} (se {fit.stderr[name]:.3g})")


@main.command(name="eval")
@click.option("--data", required=True, type=click.Path(file_okay=False))
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Report directory.")
@click.option("--tag", default="data", show_default=True, help="Scenario tag used in report file names.")
@guarded
def eval_cmd(data, model_path, out, tag):
    """Score a model: test-pair AUC, reward-sentiment correlation, temporal correlation."""
    ds = _load_data(data)
    model = RewardModel.from_dict(fileio.read_json(model_path))
    lookup = ds.by_id()
    row = {"n_items": len(ds.items)}
    test_pairs = ds.pairs_in("test")
    row["test_pair_auc"] = roc_auc(test_pairs, model, lookup) if test_pairs else math.nan
    for split in ("train", "valid", "test"):
        items = [it for it in ds.items_in(split) if it.latent and "sentiment" in it.latent]
        val = math.nan
        if len(items) >= 2:
            try:
                val = pearson(predict_many(model, items), [it.latent["sentiment"] for it in items])
            except EstimatorError:
                pass
        row[f"reward_sentiment_corr_{split}"] = val
    train, valid = ds.items_in("train"), ds.items_in("valid")
    row["temporal_corr"] = math.nan
    if train and valid and all(it.time_month is not None for it in train + valid):
        try:
            row["temporal_corr"] = temporal_corr(model, valid, train)
        except (EstimatorError, InputError):
            pass
    meta = _metadata(model.to_dict(), [0], t_test_variant=T_TEST_VARIANT)
    columns = list(row)
    fileio.write_csv(Path(out) / f"{tag}_eval_0.csv", [row], columns, meta)
    fileio.write_json(Path(out) / f"{tag}_eval_0.json", {"metadata": meta, "rows": [row]})
    click.echo(", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))


@main.command()
@click.option("--data", required=True, type=click.Path(file_okay=False))
@click.option("--grid", default="logspace(-5,1,15)", show_default=True, help="logspace(a,b,n), linspace(a,b,n) or a,b,c")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Report directory.")
@click.option("--tag", default="data", show_default=True)
@guarded
def sweep(data, grid, out, tag):
    """Ridge lambda sweep: train/valid MSE, test-pair AUC, temporal correlation."""
    ds = _load_data(data)
    rep = harness.run_lambda_sweep(ds, parse_grid(grid))
    meta = _metadata({"grid": grid}, [0], argmin_valid_lambda=rep.argmin_valid_lambda, argmax_auc_lambda=rep.argmax_auc_lambda)
    _write_sweep(rep, Path(out), tag, "0", meta)
    click.echo(f"{len(rep.rows)} lambdas; argmin valid MSE at {rep.argmin_valid_lambda:g}, argmax AUC at {rep.argmax_auc_lambda:g}")


def _write_sweep(rep, out: Path, tag: str, seeds: str, meta) -> None:
    fileio.write_csv(out / f"{tag}_sweep_{seeds}.csv", rep.rows, SWEEP_COLUMNS, meta)
    fileio.write_json(out / f"{tag}_sweep_{seeds}.json", {"metadata": meta, "rows": list(rep.rows)})
    for col in SWEEP_COLUMNS[1:]:
        pts = [{"x": r["lambda"], "y": r[col]} for r in rep.rows]
        fileio.write_csv(out / f"{tag}_plot-{col}_{seeds}.csv", pts, ("x", "y"))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", default=None, type=click.Path(file_okay=False), help="Report directory (default: output.dir).")
@click.option("--arms", default=None, help=f"Comma list from {','.join(harness.ARMS)}")
@click.option("--seeds", default=None, help="Comma list or range, e.g. 0-4")
@click.option("--lambda", "lam", default=None, type=float)
@click.option("--threads", default=0, type=int, help="Worker threads (default: all cores); never changes output bytes.")
@guarded
def scenario(config_path, out, arms, seeds, lam, threads):
    """Run a scenario study from a config: arm comparison, weekday study, or temporal sweep."""
    doc = _load_config(config_path)
    cfg = DgpConfig.from_dict(doc["dgp"])
    ev = doc.get("eval", {})
    fit = doc.get("fit", {})
    out = out or doc.get("output", {}).get("dir")
    if not out:
        raise ConfigError("no output directory (--out or output.dir)", "output")
    out = Path(out)
    seed_list = _parse_list(seeds, int) or ev.get("seeds") or [0, 1, 2, 3, 4]
    lam = lam if lam is not None else fit.get("lambda", 1e-3)
    nthreads = _threads(threads)
    rng_tag = _seed_range(seed_list)
    if cfg.scenario in ("orthogonal", "entangled"):
        arm_list = _parse_list(arms) or ev.get("arms") or list(harness.ARMS)
        rep = harness.run_scenario(
            cfg, arm_list, seed_list, lam,
            candidate_k=ev.get("candidate_k", 8), n_valid=ev.get("n_valid"),
            n_candidate_sets=ev.get("n_candidate_sets", 300),
            dml_folds=doc.get("deconfound", {}).get("folds", 5), threads=nthreads,
        )
        meta = _metadata(doc, seed_list, scenario=cfg.scenario, arms=arm_list)
        fileio.write_csv(out / f"{cfg.scenario}_arms_{rng_tag}.csv", rep.rows, SCENARIO_COLUMNS, meta)
        fileio.write_csv(out / f"{cfg.scenario}_seeds_{rng_tag}.csv", rep.per_seed, SCENARIO_SEED_COLUMNS, meta)
        fileio.write_json(out / f"{cfg.scenario}_arms_{rng_tag}.json", {"metadata": meta, "rows": list(rep.rows), "per_seed": list(rep.per_seed)})
    elif cfg.scenario == "weekday_marker":
        rep = harness.run_weekday_study(cfg, ev.get("skew"), seed_list, lam, threads=nthreads)
        meta = _metadata(doc, seed_list, scenario=cfg.scenario, t_test_variant=T_TEST_VARIANT)
        fileio.write_csv(out / f"{cfg.scenario}_arms_{rng_tag}.csv", rep.rows, WEEKDAY_COLUMNS, meta)
        fileio.write_csv(out / f"{cfg.scenario}_seeds_{rng_tag}.csv", rep.per_seed, WEEKDAY_SEED_COLUMNS, meta)
        fileio.write_json(out / f"{cfg.scenario}_arms_{rng_tag}.json", {"metadata": meta, "rows": list(rep.rows), "per_seed": list(rep.per_seed), "tests": rep.tests})
    else:
        grid = parse_grid(ev.get("grid", "logspace(-5,1,15)"))

        def one(seed):
            return harness.run_lambda_sweep(harness.temporal_sweep_dataset(replace(cfg, seed=seed)), grid)

        reps = harness._map_ordered(one, seed_list, nthreads)
        for seed, rep in zip(seed_list, reps):
            meta = _metadata(doc, [seed], scenario=cfg.scenario, argmin_valid_lambda=rep.argmin_valid_lambda, argmax_auc_lambda=rep.argmax_auc_lambda)
            _write_sweep(rep, out, cfg.scenario, str(seed), meta)
        rows = [{"seed": s, "argmin_valid_lambda": r.argmin_valid_lambda, "argmax_auc_lambda": r.argmax_auc_lambda} for s, r in zip(seed_list, reps)]
        fileio.write_csv(out / f"{cfg.scenario}_summary_{rng_tag}.csv", rows, ("seed", "argmin_valid_lambda", "argmax_auc_lambda"), _metadata(doc, seed_list))
    click.echo(f"wrote {cfg.scenario} reports for seeds {rng_tag} to {out}")


@main.command(name="ingest")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), required=True)
@click.option("--mapping", required=True, help="Column mapping as a JSON object or a path to a JSON file.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@guarded
def ingest_cmd(input_path, fmt, mapping, out):
    """Convert CSV/JSONL rows into a dataset directory."""
    import json

    if os.path.exists(mapping):
        mapping = fileio.read_json(mapping)
    else:
        try:
            mapping = json.loads(mapping)
        except json.JSONDecodeError as e:
            raise ConfigError(f"--mapping is neither a file nor JSON ({e.msg})", "mapping") from None
    if not os.path.exists(input_path):
        raise OSError(f"input not found: {input_path}")
    ds = fileio.ingest(input_path, fmt, mapping)
    fileio.write_dataset(ds, out)
    click.echo(f"ingested {len(ds.items)} items to {out}")


if __name__ == "__main__":
    main()
