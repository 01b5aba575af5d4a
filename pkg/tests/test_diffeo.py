import numpy as np
import pytest

from grflab import Grid, MetricField, ScalarField, TensorField, flat_metric, pullback
from grflab.diffeo import diffeo_flow, displacement_jacobian
from grflab.errors import FieldError, JacobianError


@pytest.fixture
def grid():
    return Grid((12, 12, 12))


def constant_vector(grid, c):
    vals = np.broadcast_to(np.asarray(c, dtype=float), grid.shape + (3,))
    return TensorField(grid, np.array(vals), "vector")


def trig_scalar(grid, offset=(0.0, 0.0, 0.0)):
    x, y, z = grid.coordinate_arrays()
    return np.sin(x - offset[0]) * np.cos(y - offset[1]) + np.cos(z - offset[2])


def test_empty_series_gives_identity(grid):
    maps = diffeo_flow([], grid)
    assert len(maps) == 1
    t, disp = maps[0]
    assert t == 0.0
    assert np.all(disp.values == 0.0)


def test_identity_pullback_is_exact(grid):
    disp = constant_vector(grid, (0.0, 0.0, 0.0))
    f = ScalarField(grid, trig_scalar(grid))
    out = pullback(disp, f)
    assert np.max(np.abs(out.values - f.values)) < 1e-12
    g = flat_metric(grid)
    g_out = pullback(disp, g)
    assert isinstance(g_out, MetricField)
    assert np.max(np.abs(g_out.values - g.values)) < 1e-12


def test_constant_field_integrates_to_translation(grid):
    c = np.array([0.3, -0.1, 0.2])
    x = constant_vector(grid, c)
    series = [(0.1 * k, 0.1, [x, x, x, x]) for k in range(3)]
    maps = diffeo_flow(series, grid)
    t_end, disp = maps[-1]
    assert t_end == pytest.approx(0.3)
    # d(psi)/dt = -c integrates exactly under Runge-Kutta
    expected = -0.3 * c
    assert np.max(np.abs(disp.values - expected)) < 1e-14

    f = ScalarField(grid, trig_scalar(grid))
    moved = pullback(disp, f)
    exact = trig_scalar(grid, offset=0.3 * c)
    # cubic spline interpolation error at this resolution
    assert np.max(np.abs(moved.values - exact)) < 1e-3


def test_time_dependent_series_keeps_integrator_order(grid):
    # X(t) = cos(t) e_x is constant in space, so the map equation reduces to
    # du/dt = -cos(t) and the exact endpoint is u = -sin(t)
    dt, n_steps = 0.1, 5

    def x_at(t):
        return constant_vector(grid, (np.cos(t), 0.0, 0.0))

    series = []
    for k in range(n_steps):
        t = k * dt
        stages = [x_at(t), x_at(t + 0.5 * dt), x_at(t + 0.5 * dt), x_at(t + dt)]
        series.append((t, dt, stages))
    _, disp = diffeo_flow(series, grid)[-1]
    expected = -np.sin(n_steps * dt)
    assert np.max(np.abs(disp.values[..., 0] - expected)) < 1e-6
    assert np.max(np.abs(disp.values[..., 1:])) < 1e-15


def test_record_every_samples_intermediate_maps(grid):
    x = constant_vector(grid, (0.1, 0.0, 0.0))
    series = [(0.1 * k, 0.1, [x, x, x, x]) for k in range(4)]
    maps = diffeo_flow(series, grid, record_every=2)
    assert [t for t, _ in maps] == pytest.approx([0.0, 0.2, 0.4])
    assert len(diffeo_flow(series, grid)) == 2   # identity + final only


def test_jacobian_guard_trips_on_folding(grid):
    x1 = grid.coordinate_arrays()[0]
    u = np.zeros(grid.shape + (3,))
    u[..., 0] = -0.95 * np.sin(x1) * np.ones(grid.shape)
    disp = TensorField(grid, u, "vector")
    f = ScalarField(grid, trig_scalar(grid))
    with pytest.raises(JacobianError):
        pullback(disp, f)
    # the same shape at moderate amplitude passes
    mild = TensorField(grid, 0.5 * u, "vector")
    pullback(mild, f)


def test_jacobian_of_translation_is_identity(grid):
    u = constant_vector(grid, (0.4, 0.1, -0.2)).values
    jac = displacement_jacobian(grid, u)
    assert np.max(np.abs(jac - np.eye(3))) < 1e-15


def test_pullback_rejects_contravariant_and_untged_input(grid):
    f = ScalarField(grid, trig_scalar(grid))
    vec = constant_vector(grid, (0.1, 0.0, 0.0))
    with pytest.raises(FieldError):
        pullback(vec, vec)   # vectors push forward, not back
    not_a_vector = TensorField(grid, np.zeros(grid.shape + (3,)))
    with pytest.raises(FieldError):
        pullback(not_a_vector, f)


def test_covector_pullback_matches_chain_rule(grid):
    # along a translation the Jacobian is the identity, so covariant
    # components just get resampled at the shifted points
    c = np.array([0.25, 0.0, 0.0])
    disp = constant_vector(grid, -c)
    x, y, z = grid.coordinate_arrays()
    df = np.zeros(grid.shape + (3,))
    df[..., 0] = np.cos(x) * np.ones(grid.shape)
    field = TensorField(grid, df)
    out = pullback(disp, field)
    expected = np.cos(x - c[0]) * np.ones(grid.shape)
    assert np.max(np.abs(out.values[..., 0] - expected)) < 1e-3
    assert np.max(np.abs(out.values[..., 1:])) < 1e-12
