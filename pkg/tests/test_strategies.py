"""Update-strategy semantics: pools, buffers, projections, and the shared
first-update behavior."""

import numpy as np
import pytest

from thermadapt.dataset import WindowedDataset, concat_datasets
from thermadapt.network import PARAM_BLOCKS, RecurrentForecaster, TrainOptions
from thermadapt.strategies import (
    STRATEGIES,
    ElasticWeightConsolidation,
    GradientEpisodicMemory,
    SeasonalMemoryFineTune,
    UpdateContext,
    estimate_fisher,
    flatten_blocks,
    gem_project,
    make_strategy,
    unflatten_blocks,
)

FD_STEP = 1e-5

_clock = [0]


def period_ds(n_windows, level, seed):
    """Windows with targets pinned at a distinct level, so pool membership
    can be read back off the data itself."""
    rng = np.random.default_rng(seed)
    inputs = rng.normal(size=(n_windows, 16, 5))
    targets = np.full((n_windows, 4), float(level))
    _clock[0] += n_windows
    times = (np.arange(n_windows) + _clock[0]).astype("datetime64[h]")
    return WindowedDataset(inputs, targets, np.full(n_windows, float(level)),
                           times.astype("datetime64[ns]"))


def make_ctx(n, data, general, previous, seed=100, **kw):
    kw.setdefault("epochs", 2)
    kw.setdefault("batch_size", 8)
    return UpdateContext(n=n, period_months=1, data=data, general=general,
                         previous=previous, seed=seed + n, **kw)


@pytest.fixture(scope="module")
def general():
    return RecurrentForecaster(seed=0, hidden=8)


def params_equal(a, b):
    return all(np.array_equal(a.params[k], b.params[k]) for k in PARAM_BLOCKS)


def test_context_validation(general):
    ds = period_ds(12, 0.1, 0)
    with pytest.raises(ValueError, match="1-based"):
        UpdateContext(0, 1, ds, general, None, 0)
    with pytest.raises(ValueError, match="months"):
        UpdateContext(1, 4, ds, general, None, 0)
    with pytest.raises(ValueError, match="no windows"):
        UpdateContext(1, 1, ds.take(slice(0, 0)), general, None, 0)


def test_registry_rejects_unknown_name():
    with pytest.raises(ValueError, match="ealg"):
        make_strategy("bogus")
    assert sorted(STRATEGIES) == [
        "alg", "ealg", "ewc", "gem", "gil", "ift", "il", "scratch", "sml",
    ]


def test_first_update_identical_across_non_scratch_strategies(general):
    ds = period_ds(20, 0.2, 1)
    reference = None
    for name in ("il", "ift", "gil", "alg", "ealg", "sml", "gem", "ewc"):
        strat = make_strategy(name) if name != "ewc" else make_strategy(
            "ewc", buffer_size=10, refresh_size=4)
        net = strat.update(make_ctx(1, ds, general, None))
        if reference is None:
            reference = net
        else:
            assert params_equal(net, reference), name
    scratch = make_strategy("scratch").update(
        make_ctx(1, ds, general, None, initial_epochs=2))
    assert not params_equal(scratch, reference)


def test_strategies_are_deterministic(general):
    d1, d2 = period_ds(16, 0.1, 2), period_ds(16, -0.1, 3)
    for name in ("il", "gem", "ewc"):
        nets = []
        for _ in range(2):
            strat = make_strategy(name) if name != "ewc" else make_strategy(
                "ewc", buffer_size=12, refresh_size=4)
            f1 = strat.update(make_ctx(1, d1, general, None))
            f2 = strat.update(make_ctx(2, d2, general, f1))
            nets.append(f2)
        assert params_equal(*nets), name


def test_ift_freezes_after_first_update(general):
    strat = make_strategy("ift")
    prev = general.clone()
    prev.params["head_b"][:] = 0.25
    out = strat.update(make_ctx(5, period_ds(12, 0.0, 4), general, prev))
    assert params_equal(out, prev)
    assert out is not prev
    assert strat.stored_examples() == 0


def test_gil_ignores_previous_model(general):
    ds = period_ds(14, 0.3, 5)
    prev_a = general.clone()
    prev_b = general.clone()
    prev_b.params["head_W"][:] += 5.0
    a = make_strategy("gil").update(make_ctx(3, ds, general, prev_a))
    b = make_strategy("gil").update(make_ctx(3, ds, general, prev_b))
    assert params_equal(a, b)


def test_scratch_ignores_both_handles(general):
    ds = period_ds(14, 0.3, 6)
    warped = general.clone()
    warped.params["lstm1_W"][:] *= -1
    kw = dict(initial_epochs=2)
    a = make_strategy("scratch").update(make_ctx(2, ds, general, general, **kw))
    b = make_strategy("scratch").update(make_ctx(2, ds, warped, warped, **kw))
    assert params_equal(a, b)


def test_accumulating_pools_grow_one_period_per_update(general):
    strat = make_strategy("alg")
    prev = None
    sizes = []
    for n in range(1, 4):
        prev = strat.update(make_ctx(n, period_ds(12, 0.1 * n, 10 + n),
                                     general, prev))
        sizes.append(strat.stored_examples())
    assert sizes == [12, 24, 36]


def test_ealg_matches_alg_without_events_and_resets_on_event(general):
    periods = [period_ds(12, 0.05 * n, 20 + n) for n in range(1, 4)]
    alg, ealg = make_strategy("alg"), make_strategy("ealg")
    pa = pe = None
    for n, ds in enumerate(periods, start=1):
        pa = alg.update(make_ctx(n, ds, general, pa))
        pe = ealg.update(make_ctx(n, ds, general, pe))
        assert params_equal(pa, pe)

    fresh = make_strategy("ealg")
    prev = fresh.update(make_ctx(1, periods[0], general, None))
    prev = fresh.update(make_ctx(2, periods[1], general, prev, event=True))
    assert fresh.stored_examples() == len(periods[1])
    fresh.update(make_ctx(3, periods[2], general, prev))
    assert fresh.stored_examples() == len(periods[1]) + len(periods[2])
    levels = {ds.anchors[0] for ds in fresh.pool}
    assert levels == {periods[1].anchors[0], periods[2].anchors[0]}


class TestSeasonalPools:
    def run_at(self, n, months, general):
        strat = SeasonalMemoryFineTune()
        for k in range(1, n):
            strat.archive[k] = period_ds(10, float(k), 30 + k)
        ctx = make_ctx(n, period_ds(10, float(n), 30 + n), general, general,
                       epochs=1)
        object.__setattr__(ctx, "period_months", months)
        strat.update(ctx)
        return strat

    def test_monthly_pool_reaches_back_one_year(self, general):
        strat = self.run_at(15, 1, general)
        assert strat.last_pool_updates == (2, 3, 4, 15)

    def test_bimonthly_pool_indices(self, general):
        strat = self.run_at(8, 2, general)
        assert strat.last_pool_updates == (1, 2, 3, 8)

    def test_first_year_falls_back_to_new_data_only(self, general):
        strat = self.run_at(6, 1, general)
        assert strat.last_pool_updates == (6,)

    def test_archive_evicts_beyond_season_reach(self, general):
        strat = self.run_at(15, 1, general)
        assert set(strat.archive) == set(range(3, 16))
        assert strat.stored_examples() == 13 * 10


def test_fisher_matches_finite_difference_oracle():
    net = RecurrentForecaster(seed=3, hidden=4)
    buffer = period_ds(3, 0.2, 40)
    buffer.targets[:] = np.random.default_rng(41).normal(size=buffer.targets.shape)
    fisher = estimate_fisher(net, buffer)

    rng = np.random.default_rng(42)
    for name in ("lstm2_W", "head_W", "head_b"):
        for k in rng.choice(net.params[name].size, size=2, replace=False):
            pos = np.unravel_index(k, net.params[name].shape)
            acc = 0.0
            for i in range(len(buffer)):
                grads_fd = []
                for sign in (+1, -1):
                    probe = net.clone()
                    probe.params[name][pos] += sign * FD_STEP
                    pred = probe.predict(buffer.inputs[i:i + 1])
                    grads_fd.append(
                        np.mean((pred - buffer.targets[i:i + 1]) ** 2))
                acc += ((grads_fd[0] - grads_fd[1]) / (2 * FD_STEP)) ** 2
            want = acc / len(buffer)
            got = fisher[name][pos]
            assert abs(want - got) <= 1e-3 * max(want, got, 1e-8), (name, pos)


def test_fisher_invariant_under_duplication():
    net = RecurrentForecaster(seed=4, hidden=4)
    ds = period_ds(4, 0.1, 43)
    once = estimate_fisher(net, ds)
    twice = estimate_fisher(net, concat_datasets([ds, ds]))
    for name in PARAM_BLOCKS:
        assert np.allclose(once[name], twice[name], atol=1e-12)
        assert np.all(once[name] >= 0.0)


def test_ewc_with_zero_penalty_matches_plain_incremental(general):
    d1, d2 = period_ds(16, 0.15, 50), period_ds(16, -0.2, 51)
    ewc = make_strategy("ewc", penalty_scale=0.0, buffer_size=12, refresh_size=4)
    il = make_strategy("il")
    f1e = ewc.update(make_ctx(1, d1, general, None))
    f1i = il.update(make_ctx(1, d1, general, None))
    assert params_equal(f1e, f1i)
    f2e = ewc.update(make_ctx(2, d2, general, f1e))
    f2i = il.update(make_ctx(2, d2, general, f1i))
    assert params_equal(f2e, f2i)


def test_ewc_penalty_gradient_zero_at_anchors(general):
    ewc = ElasticWeightConsolidation(buffer_size=10, refresh_size=4)
    ewc.update(make_ctx(1, period_ds(14, 0.1, 52), general, None))
    grad = ewc.penalty_gradient(ewc.anchors)
    assert all(np.all(grad[k] == 0.0) for k in PARAM_BLOCKS)
    nudged = {k: v + 0.01 for k, v in ewc.anchors.items()}
    moved = ewc.penalty_gradient(nudged)
    assert any(np.any(moved[k] != 0.0) for k in PARAM_BLOCKS)


def test_ewc_dominant_penalty_pins_parameters_to_anchors(general):
    ewc = ElasticWeightConsolidation(penalty_scale=1e9, buffer_size=10,
                                     refresh_size=4)
    base = general.clone()
    ewc.anchors = base.get_params()
    ewc.fisher = {k: np.ones_like(v) for k, v in base.params.items()}
    ewc.buffer = period_ds(10, 0.0, 53)
    ctx = make_ctx(2, period_ds(16, -0.4, 54), general, base, epochs=4)
    out = ewc.update(ctx)
    drift = max(np.max(np.abs(out.params[k] - ewc.anchors[k]))
                for k in PARAM_BLOCKS)
    assert drift <= 2e-3


def test_ewc_buffer_is_fifo_with_bounded_size(general):
    ewc = make_strategy("ewc", buffer_size=10, refresh_size=4)
    prev = None
    for n, level in enumerate((1.0, 2.0, 3.0), start=1):
        prev = ewc.update(make_ctx(n, period_ds(12, level, 60 + n),
                                   general, prev))
    assert len(ewc.buffer) == 10
    counts = {lvl: int(np.sum(ewc.buffer.anchors == lvl))
              for lvl in (1.0, 2.0, 3.0)}
    assert counts == {1.0: 2, 2.0: 4, 3.0: 4}
    assert ewc.stored_examples() == 10


def test_gem_project_identity_when_agreeing():
    rng = np.random.default_rng(70)
    g = rng.normal(size=30)
    mems = np.stack([g + 0.1 * rng.normal(size=30) for _ in range(3)])
    assert np.all(mems @ g >= 0)
    assert gem_project(g, mems) is g


def test_gem_project_antiparallel_memory_zeroes_gradient():
    g = np.array([1.0, -2.0, 3.0])
    out = gem_project(g, -g[None, :])
    assert np.max(np.abs(out)) < 1e-9


def test_gem_project_feasible_and_minimal():
    rng = np.random.default_rng(71)
    g = rng.normal(size=40)
    mems = rng.normal(size=(3, 40))
    assert np.any(mems @ g < 0)  # seed chosen to create a conflict
    out = gem_project(g, mems)
    assert np.all(mems @ out >= -1e-6)
    dist = np.linalg.norm(out - g)
    for _ in range(1000):
        probe = rng.normal(size=40)
        if np.all(mems @ probe >= 0):
            assert np.linalg.norm(probe - g) >= dist - 1e-9


def test_gem_project_nonconvergence_falls_back(caplog):
    g = np.array([1.0, 0.0])
    mems = np.array([[-1.0, 0.0]])
    with caplog.at_level("WARNING"):
        out = gem_project(g, mems, max_iters=0)
    assert np.array_equal(out, g)
    assert "did not converge" in caplog.text


def test_gem_memory_count_tracks_updates(general):
    gem = GradientEpisodicMemory(samples_per_update=5)
    prev = None
    for n in range(1, 4):
        prev = gem.update(make_ctx(n, period_ds(12, 0.1 * n, 80 + n),
                                   general, prev))
        assert len(gem.memories) == n
        assert all(len(m) == 5 for m in gem.memories)
    assert gem.stored_examples() == 15


def test_gem_protects_memory_loss_under_conflict(general):
    rng = np.random.default_rng(90)
    inputs = rng.normal(size=(24, 16, 5))
    memory = WindowedDataset(inputs, np.full((24, 4), 0.5),
                             np.full(24, 0.5),
                             np.arange(24).astype("datetime64[s]").astype("datetime64[ns]"))
    conflict = WindowedDataset(inputs.copy(), np.full((24, 4), -0.5),
                               np.full(24, -0.5),
                               (np.arange(24) + 50).astype("datetime64[s]").astype("datetime64[ns]"))
    base = general.clone()
    base.fit(memory.take(slice(0, 16)), memory.take(slice(16, 24)),
             TrainOptions(epochs=30, batch_size=8, seed=0))

    gem = GradientEpisodicMemory(samples_per_update=24)
    gem.memories = [memory]
    guarded = gem.update(make_ctx(2, conflict, general, base, epochs=4))
    plain = make_strategy("il").update(make_ctx(2, conflict, general, base,
                                                epochs=4))
    assert guarded.evaluate(memory) < plain.evaluate(memory)

    # batch granularity: no single projected step may ratchet memory loss
    net = base.clone()

    def project(grads, params):
        probe = base.clone()
        probe.params = params
        mem = flatten_blocks(probe.batch_gradients(memory.inputs,
                                                   memory.targets)[1])
        flat = gem_project(flatten_blocks(grads), mem[None, :])
        return unflatten_blocks(flat, grads)

    ctrain, cval = conflict.take(slice(0, 16)), conflict.take(slice(16, 24))
    for step in range(8):
        before_step = net.evaluate(memory)
        net.fit(ctrain, cval, TrainOptions(epochs=1, batch_size=16, seed=step,
                                           grad_post_fn=project))
        assert net.evaluate(memory) <= before_step * 1.05 + 1e-4
