import math

import numpy as np
import pytest

from oodforecast import harness
from oodforecast.dataio import SynthConfig, synth_generate
from oodforecast.harness import DataRef, Dim, RunConfig
from oodforecast.timebase import InsufficientDataError, TimeFrame

TINY_NET = {"channels": 4, "blocks": 2, "epochs": 1, "batch_size": 128}


def synth(length=3100, boundaries=(2700,), seed=0, **kw):
    return SynthConfig(length=length, regime_boundaries=boundaries, regime_level_factors=(1.0, 0.5),
                       regime_amp_factors=(1.0, 0.5), seed=seed, **kw)


def config(method, cfg=None, **kw):
    cfg = cfg or synth()
    params = dict(TINY_NET) if method.startswith("net") else {}
    params.update(kw.pop("params", {}))
    base = dict(window=24, schedule="regimes", params=params)
    base.update(kw)
    return RunConfig(DataRef(synth=cfg), method, **base)


# ------------------------------------------------------------------- split


def test_split_arithmetic():
    sp = harness.split(8784)
    assert (sp.warmup_end, sp.validation_end - sp.warmup_end, sp.stream_hours) == (2160, 720, 6624)
    assert harness.split(2880).stream_hours == 720
    with pytest.raises(InsufficientDataError):
        harness.split(1440)


def test_clamp_examples():
    assert harness.clamp(np.array([-5.0]), 0, 100).tolist() == [0]
    assert harness.clamp(np.array([42.0]), 0, 100).tolist() == [42]
    assert harness.clamp(np.array([1.0, 9.0]), 3, 3).tolist() == [3, 3]
    with pytest.raises(ValueError):
        harness.clamp(np.array([1.0]), 2, 1)


# ---------------------------------------------------------------- streaming


def test_copy_last_on_constant_series_is_exact():
    cfg = SynthConfig(
        length=3000,
        regime_boundaries=(2900,),
        regime_level_factors=(1.0, 1.0),
        regime_amp_factors=(1.0, 1.0),
        daily_amp=0.0,
        weekly_amp=0.0,
        noise_std=0.0,
    )
    for method in ("copy_last_hour", "copy_last_day", "copy_last_week"):
        result = harness.run(config(method, cfg))
        assert [p.mae for p in result.periods] == [0.0, 0.0]


def test_es_with_alpha_one_matches_persistence_exactly():
    walk = np.cumsum(0.5 + np.random.default_rng(0).standard_normal(3200)) + 100
    frame = TimeFrame("2019-01-01T00:00:00Z", {"E": walk})
    es = harness.run(config("es", schedule="whole"), frame)
    last = harness.run(config("copy_last_hour", schedule="whole"), frame)
    assert es.params["alpha"] == 1.0
    assert es.maes() == last.maes()


def test_partition_counts_follow_schedule():
    result = harness.run(config("copy_last_day"))
    assert [p.n_samples for p in result.periods] == [2700 - 2160, 3100 - 2700]
    assert sum(p.n_samples for p in result.periods) == 3100 - 2160


def test_horizon_reduces_last_sample():
    result = harness.run(config("copy_last_day", horizon=3))
    assert sum(p.n_samples for p in result.periods) == 3100 - 2160 - 2


def running_bounds(target, start, stop, edges):
    """Independent replay of the clamp bounds for hours start..stop-1."""
    lo, hi = [], []
    hist = list(target[:start])
    seen = []
    for t in range(start, stop):
        if t in edges:
            seen = []
        pool = seen if seen else hist
        lo.append(min(pool))
        hi.append(max(pool))
        seen.append(target[t])
        hist.append(target[t])
    return np.array(lo), np.array(hi)


@pytest.mark.parametrize("method", ["var", "net_ol"])
def test_clamped_predictions_lie_within_running_bounds(method):
    cfg = config(method)
    frame = harness.load_frame(cfg.data)
    result = harness.run(cfg, frame, record_predictions=True)
    preds = result.predictions[:, 0]
    lo, hi = running_bounds(frame["E"], 2160, 2160 + preds.size, {2700})
    assert np.all(preds >= lo) and np.all(preds <= hi)


@pytest.mark.parametrize("method", ["var_ol", "net_ol", "net_cl", "es"])
def test_no_leakage_prefix_replay(method):
    cfg = config(method, schedule="whole")
    frame = harness.load_frame(cfg.data)
    full = harness.run(cfg, frame, record_predictions=True).predictions
    cut = 2950
    short = harness.run(cfg, frame.slice(0, cut), record_predictions=True).predictions
    np.testing.assert_array_equal(short, full[: short.shape[0]])


@pytest.mark.parametrize("frozen, online", [("net", "net_ol"), ("var", "var_ol")])
def test_frozen_and_online_share_warmup(frozen, online):
    a = harness.run(config(frozen), record_predictions=True).predictions
    b = harness.run(config(online), record_predictions=True).predictions
    assert a[0] == b[0]
    assert not np.array_equal(a[1:50], b[1:50])


def test_net_with_zero_lr_is_deterministic_untrained_net():
    cfg = config("net", params={"lr": 0.0})
    a, b = harness.run(cfg), harness.run(cfg)
    assert a.maes() == b.maes()
    assert a.params["lr"] == 0.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_forecast_aborts():
    cfg = config("net_ol", params={"lr": 1e200})
    with pytest.raises(harness.RunError, match="non-finite"):
        harness.run(cfg)


def test_schedule_must_cover_stream(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("A,2019-04-01T00:00:00Z,2019-04-02T00:00:00Z\n")
    with pytest.raises(Exception, match="cover"):
        harness.run(config("copy_last_hour", schedule=str(p)))


# ------------------------------------------------------------------ search


def test_random_search_single_draw_and_point_space():
    space = (Dim("a", "uniform", 0.0, 1.0),)
    r = harness.random_search(space, 1, 3, lambda p: p["a"])
    assert r.best == r.trials[0][0]
    point = (Dim("lr", "log-uniform", 1e-3, 1e-3), Dim("c", "int", 16, 16))
    assert harness.random_search(point, 5, 0, lambda p: 1.0).best == {"lr": 1e-3, "c": 16}


def test_random_search_returns_argmin_of_replayed_draws():
    hidden = np.array([0.3, 0.7])
    space = (Dim("x", "uniform", 0.0, 1.0), Dim("y", "uniform", 0.0, 1.0))

    def dist(p):
        return float(np.hypot(p["x"] - hidden[0], p["y"] - hidden[1]))

    r = harness.random_search(space, 20, 11, dist)
    rng = np.random.default_rng(11)
    draws = [harness.sample_space(space, rng) for _ in range(20)]
    values = [dist(d) for d in draws]
    assert r.best == draws[int(np.argmin(values))]
    assert r.best_value == min(values)


def test_random_search_ties_keep_earliest_and_failures_are_skipped():
    space = (Dim("x", "uniform", 0.0, 1.0),)
    r = harness.random_search(space, 4, 0, lambda p: 1.0)
    assert r.best == r.trials[0][0]

    calls = []

    def flaky(p):
        calls.append(p)
        if len(calls) % 2:
            raise RuntimeError("boom")
        return p["x"]

    assert math.isfinite(harness.random_search(space, 4, 0, flaky).best_value)
    with pytest.raises(harness.SearchError):
        harness.random_search(space, 3, 0, lambda p: math.nan)


def test_search_space_bounds_are_checked():
    with pytest.raises(ValueError):
        Dim("x", "uniform", 1.0, 0.0)
    with pytest.raises(ValueError):
        Dim("x", "log-uniform", 0.0, 1.0)


def test_tune_merges_best_params():
    cfg = config("var_ol", schedule="whole")
    tuned, result = harness.tune(cfg, budget=3)
    assert tuned.params["lr"] == result.best["lr"]
    assert len(result.trials) == 3


# ------------------------------------------------------------- replication


def test_replicate_statistics():
    one = harness.replicate(config("net_ol"), n_seeds=1)
    assert all(p.mae_std == 0.0 for p in one.periods)
    det = harness.replicate(config("copy_last_hour"), n_seeds=3)
    assert all(p.mae_std == 0.0 for p in det.periods)
    a = harness.replicate(config("net"), n_seeds=2)
    b = harness.replicate(config("net"), n_seeds=2)
    assert [r.seed for r in a.runs] == [0, 1]
    assert [(p.mae_mean, p.mae_std) for p in a.periods] == [(p.mae_mean, p.mae_std) for p in b.periods]
    assert a.periods[0].mae_std > 0


def test_run_many_pool_matches_serial():
    cfgs = [config("var_ol", seed=s) for s in range(2)]
    serial = harness.run_many(cfgs)
    pooled = harness.run_many(cfgs, workers=2)
    assert [r.maes() for r in serial] == [r.maes() for r in pooled]


# ------------------------------------------------------------------ config


def test_read_config_with_overrides(tmp_path):
    (tmp_path / "energy.csv").write_text("timestamp,kwh\n")
    p = tmp_path / "run.toml"
    p.write_text(
        'method = "var"\nwindow = 168\n[data]\nenergy = "energy.csv"\n[params]\nridge = 0.1\n[hpo]\nbudget = 4\n'
    )
    cfg, raw = harness.read_config(p, ["window=24", "params.ridge=0.5", "method=var_ol"])
    assert cfg.window == 24 and cfg.method == "var_ol"
    assert cfg.params == {"ridge": 0.5}
    assert cfg.hpo_budget == 4
    assert cfg.data.energy == str(tmp_path / "energy.csv")
    with pytest.raises(ValueError, match="unknown config keys"):
        harness.config_from_dict({"data": {"energy": "x"}, "method": "var", "colour": 1})


def test_univariate_methods_reject_exogenous_features():
    with pytest.raises(ValueError):
        config("es", features="EM")
    with pytest.raises(ValueError):
        config("bogus")


def test_mobility_features_run():
    result = harness.run(config("var", features="ETM"))
    assert all(np.isfinite(p.mae) for p in result.periods)


def test_synth_frame_is_pure(tmp_path):
    assert synth_generate(synth()).equals(harness.load_frame(DataRef(synth=synth())))
