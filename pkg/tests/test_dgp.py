import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from obsreward import dgp
from obsreward.errors import ConfigError
from obsreward.model import DgpConfig, Item, validate

# analytic moments of the entangled generator with default settings:
# Var(s) = 1/12, Var(level) = 1.25, Var(eps) = 0.25, Cov(s, p) = -10.5 / 12
VAR_P = 1.25 + 10.5**2 / 12 + 0.25
CORR_SP_ANALYTIC = (-10.5 / 12) / math.sqrt(VAR_P / 12)


def _col(ds, kind, name):
    return np.array([getattr(it, kind)[name] for it in ds.items])


def test_outcome_decomposition_is_exact(entangled_10k):
    # y = s + coef * p + nu, recomputed in generation order
    for it in entangled_10k.items:
        lat = it.latent
        assert it.outcome - (lat["sentiment"] + 0.1 * it.confounders["popularity"] + lat["nu"]) == 0.0


def test_east_item_without_noise():
    cfg = DgpConfig("orthogonal", n=200, seed=1, region_prob=(0, 0, 0, 1), noise_outcome_sd=0, noise_confounder_sd=0)
    for it in dgp.generate(cfg).items:
        assert it.confounders["popularity"] == 3.0
        assert it.outcome == pytest.approx(it.latent["sentiment"] + 0.3, abs=1e-15)
        assert it.instruments == {"region_central": 0.0, "region_east": 1.0, "region_west": 0.0}


def test_untagged_item_has_zero_popularity():
    cfg = DgpConfig("orthogonal", n=50, seed=1, region_prob=(1, 0, 0, 0), noise_confounder_sd=0)
    assert all(it.confounders["popularity"] == 0.0 for it in dgp.generate(cfg).items)


def test_entangled_west_item_without_noise():
    cfg = DgpConfig("entangled", n=200, seed=1, region_prob=(0, 1, 0, 0), noise_confounder_sd=0)
    for it in dgp.generate(cfg).items:
        assert it.confounders["popularity"] == pytest.approx(1 - 10.5 * it.latent["sentiment"], abs=1e-14)
    # the worked case s = 0.4
    assert 1.0 + (-10.5) * 0.4 == pytest.approx(-3.2)


def test_zero_entanglement_reduces_to_orthogonal():
    a = dgp.generate(DgpConfig("entangled", n=300, seed=5, coef_entangle=0.0))
    b = dgp.generate(DgpConfig("orthogonal", n=300, seed=5))
    assert a == b


def test_orthogonal_sentiment_independent_of_popularity(orthogonal_10k):
    s = _col(orthogonal_10k, "latent", "sentiment")
    p = _col(orthogonal_10k, "confounders", "popularity")
    assert -0.05 <= np.corrcoef(s, p)[0, 1] <= 0.05
    region = _col(orthogonal_10k, "latent", "region")
    assert abs(np.corrcoef(s, region)[0, 1]) < 0.05


def test_entangled_correlation_pinned(entangled_10k):
    s = _col(entangled_10k, "latent", "sentiment")
    p = _col(entangled_10k, "confounders", "popularity")
    r = np.corrcoef(s, p)[0, 1]
    assert r == pytest.approx(-0.92824, abs=5e-5)
    # Monte Carlo error at n = 10000 is well under 0.01
    assert r == pytest.approx(CORR_SP_ANALYTIC, abs=0.01)


def test_month_effects_zero_means_no_confounding():
    cfg = DgpConfig("temporal", n=300, seed=2, month_effects=(0.0,) * 12)
    for it in dgp.generate(cfg).items:
        assert it.outcome == it.latent["sentiment"] + it.latent["nu"]
        assert it.confounders["month_effect"] == 0.0


def test_temporal_additive_arithmetic():
    effects = tuple(0.05 if m == 2 else 0.0 for m in range(12))  # month 3
    cfg = DgpConfig("temporal", n=500, seed=2, month_effects=effects, noise_outcome_sd=0.0)
    ds = dgp.generate(cfg)
    march = [it for it in ds.items if it.time_month == 3]
    assert march
    for it in march:
        assert it.outcome == pytest.approx(it.latent["sentiment"] + 0.05, abs=1e-15)
        assert it.instruments["month_3"] == 1.0 and sum(it.instruments.values()) == 1.0


def test_monthly_means_track_effects():
    ds = dgp.generate(DgpConfig("temporal", n=20000, seed=11))
    months = np.array([it.time_month for it in ds.items])
    y = np.array([it.outcome for it in ds.items])
    means = [y[months == m].mean() for m in range(1, 13)]
    assert np.corrcoef(means, dgp.DEFAULT_MONTH_EFFECTS)[0, 1] > 0.9


def test_month_effects_length_checked():
    with pytest.raises(ConfigError):
        dgp.gen_temporal(DgpConfig("temporal", n=10), month_effects=[0.0] * 11)


def _monday_win_fraction(ds):
    lookup = ds.by_id()
    wins = mixed = 0
    for p in ds.pairs:
        w, l = lookup[p.winner_id], lookup[p.loser_id]
        if (w.time_weekday == dgp.MONDAY) != (l.time_weekday == dgp.MONDAY):
            mixed += 1
            wins += w.time_weekday == dgp.MONDAY
    return wins, mixed


def test_weekday_symmetric_skew():
    ds = dgp.gen_weekday_pairs(DgpConfig("weekday_marker", n=5000, seed=3), 0.5)
    wins, mixed = _monday_win_fraction(ds)
    half_width = 3 * math.sqrt(0.25 / mixed)
    assert abs(wins / mixed - 0.5) < half_width


def test_weekday_degenerate_skew():
    ds = dgp.gen_weekday_pairs(DgpConfig("weekday_marker", n=500, seed=3), 1.0)
    wins, mixed = _monday_win_fraction(ds)
    assert mixed > 0 and wins == mixed


def test_weekday_structure():
    cfg = DgpConfig("weekday_marker", n=300, seed=4)
    ds = dgp.gen_weekday_pairs(cfg, 0.6)
    assert validate(ds) == []
    sizes = {}
    for it in ds.items:
        sizes[it.context_id] = sizes.get(it.context_id, 0) + 1
        assert it.embedding[4] == (1.0 if it.time_weekday == dgp.MONDAY else 0.0)
    assert len(sizes) == 300 and set(sizes.values()) <= {2, 3, 4, 5}
    assert len(ds.pairs) <= cfg.pair_cap * len(sizes)
    with pytest.raises(ConfigError):
        dgp.gen_weekday_pairs(cfg, 1.2)


@given(st.floats(0.0, 1.0))
def test_monday_bump_gives_requested_skew(skew):
    # P(s1 + b > s2) for independent uniforms, by direct integration of the triangle
    b = dgp.monday_bump(skew)
    prob = 1 - (1 - b) ** 2 / 2 if b >= 0 else (1 + b) ** 2 / 2
    assert prob == pytest.approx(skew, abs=1e-12)


def test_default_skew_matches_observed_pair_counts():
    assert DgpConfig().skew == pytest.approx(958 / (958 + 887), abs=0.001)


def _ctx(scores):
    return [Item(f"i{k}", (0.0,), s, context_id="q") for k, s in enumerate(scores)]


def test_build_pairs_all_valid():
    assert len(dgp.build_pairs(_ctx([5, 3, 1]), 10)) == 3


def test_build_pairs_cap_prefers_margin_then_ids():
    pairs = dgp.build_pairs(_ctx([5, 3, 1]), 2)
    assert [(p.winner_id, p.loser_id, p.margin) for p in pairs] == [("i0", "i2", 4.0), ("i0", "i1", 2.0)]


def test_build_pairs_ties_produce_nothing():
    assert dgp.build_pairs(_ctx([2, 2]), 10) == []


@settings(max_examples=50)
@given(st.lists(st.lists(st.integers(0, 5), min_size=1, max_size=6), min_size=1, max_size=5), st.integers(1, 8))
def test_build_pairs_properties(groups, cap):
    items = [
        Item(f"c{g}-{k}", (0.0,), float(v), context_id=f"c{g}")
        for g, vals in enumerate(groups) for k, v in enumerate(vals)
    ]
    pairs = dgp.build_pairs(items, cap)
    assert len(pairs) <= cap * len(groups)
    assert all(p.margin > 0 for p in pairs)
    assert pairs == dgp.build_pairs(list(reversed(items)), cap)


def test_embed_layout_example():
    cfg = DgpConfig("orthogonal", n=1, seed=0, nuisance_dims=0)
    assert list(dgp.embed({"sentiment": 0.7, "region": "none"}, cfg)) == [0.7, 0.0, 0.0, 0.0]
    padded = dgp.embed({"sentiment": 0.7, "region": "east"}, replace(cfg, d=6))
    assert list(padded) == [0.7, 0.0, 0.0, 1.0, 0.0, 0.0]


def test_embed_is_deterministic_and_sized():
    cfg = DgpConfig("weekday_marker", n=1, seed=9, nuisance_dims=5)
    a = dgp.embed({"sentiment": 0.2, "region": 2, "weekday": 0}, cfg, stream=17)
    b = dgp.embed({"sentiment": 0.2, "region": 2, "weekday": 0}, cfg, stream=17)
    assert np.array_equal(a, b) and a.size == 1 + 3 + 1 + 5
    assert a[4] == 1.0 and a[2] == 1.0
    with pytest.raises(ConfigError):
        dgp.embed({"sentiment": 0.2}, replace(cfg, d=4))


def test_embedding_matches_generated_item():
    cfg = DgpConfig("orthogonal", n=20, seed=3)
    ds = dgp.generate(cfg)
    it = ds.items[13]
    attrs = {"sentiment": it.latent["sentiment"], "region": int(it.latent["region"])}
    stream = int(dgp.rng.stream_ids(dgp.NAMESPACES["train"], 13, 1)[0])
    assert tuple(dgp.embed(attrs, cfg, stream)) == it.embedding


@pytest.mark.parametrize("scenario", ["orthogonal", "entangled", "temporal", "weekday_marker"])
def test_generation_is_deterministic(scenario):
    cfg = DgpConfig(scenario, n=150, seed=21, context_size=3 if scenario == "temporal" else 0)
    a, b = dgp.generate_splits(cfg), dgp.generate_splits(cfg)
    assert a == b
    assert validate(a) == []
    assert dgp.generate_splits(replace(cfg, seed=22)) != a


def test_splits_draw_from_separate_streams():
    ds = dgp.generate_splits(DgpConfig("orthogonal", n=100, seed=1))
    assert [len(ds.items_in(s)) for s in ("train", "valid", "test")] == [60, 20, 20]
    train_s = {it.latent["sentiment"] for it in ds.items_in("train")}
    assert not train_s & {it.latent["sentiment"] for it in ds.items_in("test")}


def test_invalid_config_rejected():
    with pytest.raises(ConfigError):
        dgp.generate(DgpConfig("orthogonal", noise_confounder_sd=-0.1))
    with pytest.raises(ConfigError):
        dgp.gen_entangled(DgpConfig("orthogonal"))
