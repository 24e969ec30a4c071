import numpy as np
import pytest

from conftest import finite_difference_check, make_toy_dataset
from wglasdi import latentdi as di
from wglasdi import net, rom
from wglasdi.data import assemble, load_dataset, load_model, save_dataset, save_model
from wglasdi.errors import ConfigError, TrainingError
from wglasdi.trainer import TrainConfig, Trainer, greedy_loop

ENC = net.NetSpec((6, 8, 2))


def _cfg(**kw):
    base = dict(beta1=0.7, beta2=1.3, beta3=0.1, support_steps=10, stride=5, seed=3, epochs=10)
    base.update(kw)
    return TrainConfig(**base)


@pytest.mark.parametrize("mode", di.MODES)
@pytest.mark.parametrize("degree", [1, 2])
def test_gradient_matches_finite_differences(mode, degree):
    tr = Trainer(make_toy_dataset(), _cfg(mode=mode), ENC, di.LibrarySpec(degree))
    assert finite_difference_check(tr, np.random.default_rng(5)) < 1e-5


def test_loss_breakdown():
    ds = make_toy_dataset()
    for mode in di.MODES:
        tr = Trainer(ds, _cfg(mode=mode), ENC, di.LibrarySpec(1))
        for c in tr.state.coeffs:
            c[:] = 1.0
        total, terms, _ = tr.loss()
        reg = 0.0 if mode == di.STRONG else 2 * 3 * 2  # two 3x2 matrices of ones
        assert terms["reg"] == reg
        want = terms["ae"] + 0.7 * terms["zdot"] + 1.3 * terms["udot"] + 0.1 * reg
        assert total == pytest.approx(want, rel=1e-14)


def test_coefficient_gradient_ignores_other_trajectories():
    ds = make_toy_dataset()
    for mode in di.MODES:
        tr = Trainer(ds, _cfg(mode=mode), ENC, di.LibrarySpec(1))
        g0 = tr.loss()[2][-2].copy()
        ds2 = make_toy_dataset()
        ds2.entries[1].noisy = ds2.entries[1].noisy + 1.0
        tr2 = Trainer(ds2, _cfg(mode=mode), ENC, di.LibrarySpec(1))
        assert np.array_equal(tr2.loss()[2][-2], g0)
        assert not np.array_equal(tr2.loss()[2][-1], tr.loss()[2][-1])


def test_training_decreases_loss_and_is_deterministic():
    ds = make_toy_dataset()
    runs = []
    for _ in range(2):
        tr = Trainer(ds, _cfg(epochs=200, lr=3e-3), ENC, di.LibrarySpec(1))
        tr.run()
        runs.append(tr.state.loss_history)
    assert runs[0] == runs[1]
    assert runs[0][-1][1] < 0.5 * runs[0][0][1]
    assert [r[0] for r in runs[0]] == list(range(1, 201))


def test_zero_epochs_returns_initial_model():
    tr = Trainer(make_toy_dataset(), _cfg(epochs=0), ENC)
    model = tr.run()
    assert tr.state.epoch == 0 and tr.state.loss_history == []
    assert all(not np.any(c) for c in model.coeffs)


def test_non_finite_data_raises():
    ds = make_toy_dataset()
    ds.entries[0].noisy[3, 2] = np.nan
    tr = Trainer(ds, _cfg(), ENC)
    with pytest.raises(TrainingError):
        tr.step()


@pytest.mark.parametrize("kw", [dict(mode="bogus"), dict(beta1=-1), dict(epochs=-1),
                                dict(n_up=0), dict(lr=0), dict(k=0)])
def test_bad_config_rejected(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_encoder_width_checked():
    with pytest.raises(ConfigError):
        Trainer(make_toy_dataset(), _cfg(), net.NetSpec((5, 8, 2)))


def test_add_entry_interpolates_and_registers_moments():
    ds = make_toy_dataset(n_traj=2)
    tr = Trainer(ds, _cfg(), ENC)
    tr.state.coeffs[0][:] = 1.0
    tr.state.coeffs[1][:] = 3.0
    tr.run(epochs=2)
    before = [c.copy() for c in tr.state.coeffs]
    extra = make_toy_dataset(n_traj=3).entries[2]
    tr.add_entry(extra)
    want = rom.interp_coeffs(extra.mu, ds.mus[:2], before, 4, ds.space.scales)
    assert np.array_equal(tr.state.coeffs[2], want)
    assert len(tr.state.adam.m) == len(tr.state.trainable())
    assert not np.any(tr.state.adam.m[-1]) and not np.any(tr.state.adam.v[-1])
    tr.step()  # shapes line up after growth


def test_greedy_adds_worst_candidate(small_source):
    cfg = TrainConfig(epochs=30, n_up=10, budget=6, support_steps=8, stride=4, seed=0)
    enc = net.NetSpec((41, 10, 3))
    ds = assemble(small_source, small_source.space.corners())
    tr = Trainer(ds, cfg, enc, di.LibrarySpec(1))
    tr.run(epochs=10)
    model = tr.model()
    cand = tr.candidates()
    values = [rom.error_indicator(model, small_source.space.point(i), cfg.n_ts) for i in cand]
    ev = tr.sample(small_source)
    assert ev.index == cand[int(np.argmax(values))]
    assert ev.indicator == max(values)
    tr.run(source=small_source)
    trace = tr.state.trace
    assert len(tr.dataset) == 6
    assert len({e.index for e in trace}) == len(trace) == 2
    assert len(set(tr.dataset.indices)) == 6
    assert [e.epoch for e in trace] == [10, 20]


def test_greedy_threshold_stops_sampling(small_source):
    cfg = TrainConfig(epochs=20, n_up=5, budget=10, support_steps=8, stride=4,
                      indicator_threshold=1e9)
    model, trace, tr = greedy_loop(small_source, small_source.space.corners(), cfg,
                                   net.NetSpec((41, 6, 2)))
    assert trace == [] and tr.state.sampling_done and len(model.coeffs) == 4


def test_candidate_subsample_is_reproducible(small_source):
    cfg = TrainConfig(epochs=0, candidate_subsample=5, seed=4, support_steps=8, stride=4)
    ds = assemble(small_source, [0, 24])
    a = Trainer(ds, cfg, net.NetSpec((41, 6, 2))).candidates()
    b = Trainer(ds, cfg, net.NetSpec((41, 6, 2))).candidates()
    assert a == b and len(a) == 5 and not {0, 24} & set(a)


def test_resume_reproduces_uninterrupted_run(small_source, tmp_path):
    cfg = TrainConfig(epochs=24, n_up=8, budget=6, support_steps=8, stride=4, seed=2)
    enc = net.NetSpec((41, 8, 3))
    _, _, full = greedy_loop(small_source, small_source.space.corners(), cfg, enc)

    ds = assemble(small_source, small_source.space.corners())
    first = Trainer(ds, cfg, enc)
    first.run(small_source, epochs=12)
    save_model(tmp_path / "c.wglm", first.model(), first.state)
    save_dataset(first.dataset, tmp_path / "c.wgld")
    _, state = load_model(tmp_path / "c.wglm")
    resumed = Trainer(load_dataset(tmp_path / "c.wgld"), cfg, enc, state=state)
    resumed.run(small_source)

    assert resumed.state.loss_history == full.state.loss_history
    assert [(e.index, e.epoch) for e in resumed.state.trace] == \
        [(e.index, e.epoch) for e in full.state.trace]
    for a, b in zip(resumed.state.trainable(), full.state.trainable()):
        assert np.array_equal(a, b)
