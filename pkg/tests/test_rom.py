import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wglasdi import fom, net, rom
from wglasdi import latentdi as di
from wglasdi.data import ParamSpace
from wglasdi.errors import InstabilityError


def _linear(W, b):
    return net.NetParams([np.atleast_2d(np.array(W, dtype=float))], [np.array(b, dtype=float)])


def _model(coeffs, mus, n_t=20, encoder=None, decoder=None, library=di.LibrarySpec(1)):
    problem = fom.FomProblem(fom.BURGERS1D)
    grid = fom.Grid.default(fom.BURGERS1D, 21)
    if encoder is None:
        rng = np.random.default_rng(0)
        encoder = net.init_params(net.NetSpec((21, 6, 2)), rng, final_scale=1.0)
        decoder = net.init_params(net.NetSpec((2, 6, 21)), rng, final_scale=1.0)
    return rom.RomModel(encoder, decoder, np.array(mus), list(coeffs), library, problem, grid,
                        fom.TimeGrid(1.0, n_t), k=4, scales=np.array([0.2, 0.2]))


@pytest.mark.parametrize("U,P,want", [
    (np.ones((3, 4)), np.ones((3, 4)), 0.0),
    (np.arange(1.0, 13).reshape(3, 4), 2 * np.arange(1.0, 13).reshape(3, 4), 1.0),
    (np.array([[3.0, 4.0]]), np.array([[3.0, 0.0]]), 0.8),
])
def test_max_relative_error_examples(U, P, want):
    assert rom.max_relative_error(U, P) == pytest.approx(want, abs=1e-15)


@given(arrays(float, (5, 3), elements=st.floats(0.1, 10)), st.floats(0.01, 10))
def test_max_relative_error_scale_aware(U, alpha):
    assert rom.max_relative_error(U, alpha * U) == pytest.approx(abs(alpha - 1), abs=1e-12)


def test_max_relative_error_rejects_zero_snapshot():
    with pytest.raises(ZeroDivisionError):
        rom.max_relative_error(np.zeros((2, 3)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        rom.max_relative_error(np.ones((2, 3)), np.ones((3, 3)))


def test_zero_coefficients_give_constant_prediction():
    m = _model([np.zeros((3, 2))], [[0.8, 1.0]])
    traj = rom.predict(m, (0.8, 1.0))
    z0 = m.encode(fom.initial_condition(m.problem, (0.8, 1.0), m.grid))
    assert np.allclose(traj.values, m.decode(z0)[None, :])


def test_rk4_latent_order():
    xi = np.array([[0.0], [-1.0]])  # dz/dt = -z
    errs = []
    for n_t in (10, 20, 40):
        Z = rom.rk4_latent(np.array([1.0]), xi, di.LibrarySpec(1), 1.0 / n_t, n_t)
        errs.append(np.abs(Z[:, 0] - np.exp(-np.linspace(0, 1, n_t + 1))).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.9), orders


def test_latent_blowup_names_parameter():
    with pytest.raises(InstabilityError, match=r"0\.8"):
        m = _model([np.array([[0.0, 0.0], [50.0, 0.0], [0.0, 50.0]])], [[0.8, 1.0]], n_t=200)
        rom.predict(m, (0.8, 1.0), u0=np.ones(21))


def test_prediction_at_training_point_uses_its_coefficients():
    r = np.random.default_rng(1)
    coeffs = [0.1 * r.standard_normal((3, 2)) for _ in range(4)]
    mus = [[0.7, 0.9], [0.7, 1.1], [0.9, 0.9], [0.9, 1.1]]
    m = _model(coeffs, mus)
    for mu, xi in zip(mus, coeffs):
        u0 = fom.initial_condition(m.problem, mu, m.grid)
        direct = rom.rk4_latent(m.encode(u0), xi, m.library, m.time.dt, m.time.n_t)
        assert np.array_equal(rom.predict_latent(m, mu), direct)
    # prediction is deterministic
    assert np.array_equal(rom.predict(m, (0.8, 1.0)).values, rom.predict(m, (0.8, 1.0)).values)


def test_indicator_steps():
    assert list(rom.indicator_steps(100, 4)) == [25, 50, 75, 100]
    assert list(rom.indicator_steps(10, 10)) == list(range(1, 11))
    assert list(rom.indicator_steps(100, 50)) == list(range(2, 101, 2))
    with pytest.raises(ValueError):
        rom.indicator_steps(10, 11)


def test_residual_indicator_of_fom_trajectory_below_newton_tolerance():
    p = fom.FomProblem(fom.BURGERS1D)
    g = fom.Grid.default(fom.BURGERS1D, 101)
    t = fom.TimeGrid(1.0, 50)
    U = fom.solve(p, (0.85, 1.0), g, t).values
    assert rom.residual_indicator(p, g, t, U, 50) <= p.newton_tol
    assert rom.residual_indicator(p, g, t, np.zeros_like(U), 25) == 0.0


def test_error_indicator_zero_for_zero_decoder():
    dec = net.NetParams([np.zeros((21, 2))], [np.zeros(21)])
    enc = _linear(np.zeros((2, 21)), np.zeros(2))
    m = _model([np.zeros((3, 2))], [[0.8, 1.0]], encoder=enc, decoder=dec)
    assert rom.error_indicator(m, (0.8, 1.0)) == 0.0


def test_error_indicator_matches_full_decode():
    r = np.random.default_rng(2)
    m = _model([0.1 * r.standard_normal((3, 2))], [[0.8, 1.0]], n_t=40)
    U = rom.predict(m, (0.8, 1.0)).values
    want = rom.residual_indicator(m.problem, m.grid, m.time, U, 10)
    assert rom.error_indicator(m, (0.8, 1.0), n_ts=10) == pytest.approx(want, rel=1e-14)


def test_model_shape_invariants():
    with pytest.raises(ValueError):
        _model([np.zeros((4, 2))], [[0.8, 1.0]])
    with pytest.raises(ValueError):
        _model([np.zeros((3, 2))] * 2, [[0.8, 1.0]])


def test_heatmap_and_csv_roundtrip(tmp_path):
    r = np.random.default_rng(3)
    m = _model([0.05 * r.standard_normal((3, 2)) for _ in range(4)],
               [[0.7, 0.9], [0.7, 1.1], [0.9, 0.9], [0.9, 1.1]])
    space = ParamSpace((0.75, 0.95), (0.85, 1.05), (3, 2))
    refs = [fom.solve(m.problem, space.point(i), m.grid, m.time).values for i in range(space.size)]
    H = rom.heatmap(m, space, refs)
    assert H.shape == (3, 2) and np.all(np.isfinite(H))
    assert H[2, 1] == rom.max_relative_error(refs[5], rom.predict(m, space.point(5)).values)
    assert np.array_equal(rom.heatmap(m, space, lambda i: refs[i]), H)
    path = tmp_path / "h.csv"
    rom.write_heatmap_csv(path, H, space)
    rows, cols, cells = rom.read_heatmap_csv(path)
    assert np.array_equal(cells, H)
    assert np.allclose(rows, space.axis_values(0)) and np.allclose(cols, space.axis_values(1))
    assert path.read_text().splitlines()[0].startswith("a\\w,")


def test_time_predictions_reports_speedup():
    m = _model([np.zeros((3, 2))], [[0.8, 1.0]])
    rows = rom.time_predictions(m, m.problem, [(0.8, 1.0)], repeats=1)
    (mu, t_fom, t_rom, speedup), = rows
    assert mu == (0.8, 1.0) and t_fom > 0 and t_rom > 0
    assert speedup == pytest.approx(t_fom / t_rom)
