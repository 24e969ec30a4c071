import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from wglasdi import fom
from wglasdi.data import (DATASET_MAGIC, ParamSpace, add_noise, assemble, entry_seed,
                          load_dataset, load_model, noise_sigma, save_dataset, save_model,
                          sidecar_path)
from wglasdi.errors import DomainError, FormatError


def test_noise_statistics(b1d):
    grid = fom.Grid.default(fom.BURGERS1D, 201)
    traj = fom.solve(b1d, (0.8, 1.0), grid, fom.TimeGrid(1.0, 500))
    assert traj.values.size >= 100_000
    noisy = add_noise(traj, 0.1, seed=11)
    rms = np.sqrt(np.mean(traj.values ** 2))
    eps = (noisy.values - traj.values).ravel()
    ratio = eps.std() / rms
    assert 0.099 <= ratio <= 0.101
    sigma = noise_sigma(traj.values, 0.1)
    assert stats.kstest(eps / sigma, "norm").pvalue > 0.01


def test_noise_level_zero_and_negative(b1d):
    grid = fom.Grid.default(fom.BURGERS1D, 21)
    traj = fom.solve(b1d, (0.8, 1.0), grid, fom.TimeGrid(0.2, 5))
    assert np.array_equal(add_noise(traj, 0.0, 1).values, traj.values)
    with pytest.raises(DomainError):
        add_noise(traj, -0.1, 1)


def test_entry_seeds_are_distinct_and_stable():
    seeds = [entry_seed(7, i) for i in range(200)]
    assert len(set(seeds)) == 200
    assert seeds == [entry_seed(7, i) for i in range(200)]
    assert entry_seed(8, 0) != entry_seed(7, 0)


def test_assemble_corners(small_source):
    space = small_source.space
    ds = assemble(small_source, space.corners())
    assert np.allclose(ds.mus, [[0.7, 0.9], [0.7, 1.1], [0.9, 0.9], [0.9, 1.1]], atol=1e-15)
    assert ds.indices == [0, 4, 20, 24]
    # the noisy copy of an entry does not depend on which other entries were generated
    again = assemble(small_source, [20])
    assert np.array_equal(again.entries[0].noisy, ds.entries[2].noisy)
    with pytest.raises(ValueError):
        assemble(small_source, [1, 1])


def test_param_space_layout():
    sp = ParamSpace((0.7, 0.9), (0.9, 1.1), (9, 9))
    assert sp.size == 81
    assert np.allclose(sp.point(10), [0.725, 0.925])
    assert sp.uniform_indices(3) == [0, 4, 8, 36, 40, 44, 72, 76, 80]
    assert sp.corners() == sp.uniform_indices(2)
    with pytest.raises(IndexError):
        sp.point(81)


@given(st.integers(2, 12), st.integers(2, 12), st.data())
def test_param_space_index_roundtrip(r0, r1, data):
    sp = ParamSpace((0.0, -1.0), (1.0, 1.0), (r0, r1))
    i = data.draw(st.integers(0, sp.size - 1))
    a, w = sp.point(i)
    ia = int(np.argmin(np.abs(sp.axis_values(0) - a)))
    iw = int(np.argmin(np.abs(sp.axis_values(1) - w)))
    assert ia * r1 + iw == i
    assert ParamSpace.from_dict(sp.to_dict()) == sp


def test_dataset_roundtrip(small_source, tmp_path):
    ds = assemble(small_source, [0, 12])
    path = tmp_path / "d.wgld"
    save_dataset(ds, path)
    assert path.read_bytes()[:4] == DATASET_MAGIC
    back = load_dataset(path)
    assert back.indices == ds.indices and back.space == ds.space
    assert back.problem == ds.problem and back.grid == ds.grid and back.time == ds.time
    for a, b in zip(ds.entries, back.entries):
        assert np.array_equal(a.clean, b.clean) and np.array_equal(a.noisy, b.noisy)
        assert a.seed == b.seed


def test_dataset_rejects_corruption(small_source, tmp_path):
    path = tmp_path / "d.wgld"
    save_dataset(assemble(small_source, [3]), path)
    raw = path.read_bytes()
    bad = tmp_path / "bad.wgld"
    bad.write_bytes(b"XXXX" + raw[4:])
    sidecar_path(bad).write_text(sidecar_path(path).read_text())
    with pytest.raises(FormatError, match="magic"):
        load_dataset(bad)
    bad.write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        load_dataset(bad)
    sidecar_path(bad).unlink()
    bad.write_bytes(raw)
    with pytest.raises(FormatError, match="sidecar"):
        load_dataset(bad)


def test_model_roundtrip_and_bad_magic(small_source, tmp_path):
    from wglasdi import latentdi as di, net
    from wglasdi.trainer import TrainConfig, Trainer

    ds = assemble(small_source, small_source.space.corners())
    cfg = TrainConfig(epochs=3, support_steps=8, stride=4)
    tr = Trainer(ds, cfg, net.NetSpec((41, 6, 2)), di.LibrarySpec(1))
    tr.run()
    path = tmp_path / "m.wglm"
    save_model(path, tr.model(), tr.state)
    model, state = load_model(path)
    for p, q in zip(model.encoder.arrays() + model.decoder.arrays(),
                    tr.state.encoder.arrays() + tr.state.decoder.arrays()):
        assert np.array_equal(p, q)
    assert all(np.array_equal(a, b) for a, b in zip(model.coeffs, tr.state.coeffs))
    assert state.epoch == 3 and state.loss_history == tr.state.loss_history
    assert state.adam.step == tr.state.adam.step
    assert all(np.array_equal(a, b) for a, b in zip(state.adam.v, tr.state.adam.v))
    assert model.indices == ds.indices
    raw = path.read_bytes()
    path.write_bytes(b"WGLD" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        load_model(path)
