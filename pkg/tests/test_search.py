import numpy as np
import pytest

from awmm.controller import tie_break
from awmm.data import MODALITIES, SynthConfig, generate
from awmm.errors import DataError, NumericError
from awmm.model import MultimodalModel, WeightVector
from awmm import search
from awmm.search import MANUAL_FIXED, MANUAL_UNIFORM, SearchConfig, run_search


def tiny_dataset(seed=0, **kw):
    base = dict(n_samples=240, dims={m: 3 for m in MODALITIES}, seed=seed)
    base.update(kw)
    return generate(SynthConfig(**base))


def tiny_config(**kw):
    base = dict(k=3, outer_iterations=3, hidden=(8,), batch_size=16, model_lr=1e-2, seed=1)
    base.update(kw)
    return SearchConfig(**base)


def params_bytes(model):
    return {k: v.tobytes() for k, v in model.named_params().items()}


def test_manual_uniform_logs_equal_weights():
    res = run_search(tiny_config(weighting=MANUAL_UNIFORM), tiny_dataset())
    for rec in res.history:
        assert list(rec["alpha"].values()) == [0.2] * 5
    for ep in res.episodes:
        assert np.all(ep.alphas == 0.2)


def test_single_replica_frozen_policy_keeps_uniform_weights():
    res = run_search(tiny_config(k=1, freeze_policy=True), tiny_dataset())
    for ep in res.episodes:
        assert np.all(ep.actions == 1)
    np.testing.assert_allclose(res.weights.as_array(), 0.2, atol=1e-15)


def test_frozen_auto_matches_manual_uniform_bit_for_bit():
    ds = tiny_dataset()
    frozen = run_search(tiny_config(freeze_policy=True), ds)
    manual = run_search(tiny_config(weighting=MANUAL_FIXED,
                                    fixed_weights=WeightVector.uniform()), ds)
    assert params_bytes(frozen.model) == params_bytes(manual.model)
    assert [h["selected"] for h in frozen.history] == [h["selected"] for h in manual.history]


def test_epoch_budget():
    res = run_search(tiny_config(k=4, outer_iterations=5), tiny_dataset())
    assert res.epochs_run == 20
    assert len(res.episodes) == 5


def test_selected_replica_has_max_reward():
    res = run_search(tiny_config(k=4), tiny_dataset())
    for ep, rec in zip(res.episodes, res.history):
        assert ep.selected == tie_break(ep.rewards)
        assert rec["val_acc"] == ep.rewards.max()


def test_run_is_reproducible():
    ds = tiny_dataset()
    a, b = run_search(tiny_config(), ds), run_search(tiny_config(), ds)
    assert params_bytes(a.model) == params_bytes(b.model)
    assert [e.to_dict() for e in a.episodes] == [e.to_dict() for e in b.episodes]


def test_seed_changes_the_run():
    ds = tiny_dataset()
    a, b = run_search(tiny_config(seed=1), ds), run_search(tiny_config(seed=2), ds)
    assert params_bytes(a.model) != params_bytes(b.model)


def test_committed_beta_is_one_step_from_previous():
    res = run_search(tiny_config(outer_iterations=4), tiny_dataset())
    prev = np.ones(5)
    for ep in res.episodes:
        step = np.round(np.asarray(ep.committed_beta) - prev, 12)
        assert np.all(np.isin(step, [-0.2, 0.0, 0.2]))
        prev = np.asarray(ep.committed_beta)


def test_failed_replica_gets_zero_reward(monkeypatch):
    real = search.train_epoch
    calls = {"n": 0}

    def flaky(model, *a, **kw):
        calls["n"] += 1
        if calls["n"] % 3 == 1:  # first replica of every iteration diverges
            raise NumericError("gradient for head.fusion.W is not finite")
        return real(model, *a, **kw)

    monkeypatch.setattr(search, "train_epoch", flaky)
    res = run_search(tiny_config(), tiny_dataset())
    for ep in res.episodes:
        assert ep.failed == [0]
        assert ep.rewards[0] == 0.0
        assert ep.selected != 0


def test_all_replicas_failing_keeps_previous_model(monkeypatch):
    def broken(*a, **kw):
        raise NumericError("diverged")

    ds = tiny_dataset()
    monkeypatch.setattr(search, "train_epoch", broken)
    cfg = tiny_config(outer_iterations=2)
    res = run_search(cfg, ds)
    fresh = MultimodalModel(ds.dims, cfg.hidden, cfg.sharing, cfg.seed)
    assert params_bytes(res.model) == params_bytes(fresh)


def test_missing_modality_is_rejected():
    ds = tiny_dataset()
    ds.present[:, MODALITIES.index("se")] = False
    with pytest.raises(DataError, match="se"):
        run_search(tiny_config(), ds)


def test_unsplit_dataset_is_rejected():
    ds = tiny_dataset()
    ds.splits = None
    with pytest.raises(DataError):
        run_search(tiny_config(), ds)


@pytest.mark.parametrize("bad", [dict(k=0), dict(outer_iterations=0), dict(weighting="x"),
                                 dict(weighting=MANUAL_FIXED), dict(reward_mode="branch")])
def test_invalid_config(bad):
    with pytest.raises(ValueError):
        run_search(tiny_config(**bad), tiny_dataset())


def test_config_round_trips_through_dict():
    cfg = tiny_config(weighting=MANUAL_FIXED, fixed_weights=WeightVector.one_hot("swe"))
    d = cfg.to_dict()
    assert d["fixed_weights"]["swe"] == 1.0 and d["hidden"] == [8]
