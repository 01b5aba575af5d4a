"""Diffeomorphism recovery for the gauge-fixed flow.

The gauge-fixed and plain flows differ by the flow of the gauge vector field:
integrating d(psi)/dt = -X o psi from the identity and pulling the gauged
solution back along psi reproduces the ungauged one. Maps are stored as
periodic displacements u with psi(x) = x + u(x); off-grid values of X come
from periodic cubic spline interpolation, and the Jacobian of psi is the
lattice derivative of the displacement.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import FieldError, JacobianError
from .lattice import ScalarField, TensorField, diff_values
from .geometry import MetricField

_MIN_JACOBIAN = 0.1


def _dense_coordinates(grid):
    axes = [grid.axis_coordinates(a) for a in range(grid.n_dims)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=0)


def _interpolate(values, coords_index):
    return map_coordinates(values, coords_index, order=3, mode="grid-wrap",
                           prefilter=True)


def _sample_vector(x_field, points, grid):
    """Periodic cubic interpolation of a vector field at arbitrary points."""
    coords_index = np.stack(
        [points[a] / grid.spacings[a] for a in range(grid.n_dims)], axis=0)
    out = np.empty(grid.shape + (grid.n_dims,))
    for a in range(grid.n_dims):
        out[..., a] = _interpolate(x_field.values[..., a], coords_index)
    return out


def displacement_jacobian(grid, u_values):
    """J[..., a, i] = d(psi^a)/dx^i for psi = id + u, by the lattice stencil."""
    n = grid.n_dims
    jac = np.zeros(grid.shape + (n, n))
    for a in range(n):
        for i in range(n):
            jac[..., a, i] = diff_values(u_values[..., a], i, grid.spacings[i])
        jac[..., a, a] += 1.0
    return jac


def _check_jacobian(grid, u_values):
    det = np.linalg.det(displacement_jacobian(grid, u_values))
    det_min = float(np.min(det))
    if det_min <= _MIN_JACOBIAN:
        raise JacobianError(
            f"map degenerates: min det J = {det_min:.3e} <= {_MIN_JACOBIAN}")


def diffeo_flow(x_series, grid, record_every=0):
    """Integrate d(psi)/dt = -X o psi through a recorded gauge-field series.

    x_series is the gauge_series of a Trajectory: one (t, dt, stages) entry
    per accepted step, stages holding the gauge vector at the four
    Runge-Kutta stage states. Reusing the stages keeps the map integration at
    the integrator's order instead of degrading through time interpolation.

    Returns a list of (t, displacement) samples: always the initial identity
    and the final map, plus every record_every-th intermediate map when
    record_every > 0. Raises JacobianError if any accepted map leaves the
    diffeomorphism guard det J > 0.1.
    """
    n = grid.n_dims
    base = _dense_coordinates(grid)
    u = np.zeros(grid.shape + (n,))
    maps = [(x_series[0][0] if x_series else 0.0,
             TensorField(grid, u.copy(), "vector"))]

    def stage_velocity(x_field, u_now):
        points = [base[a] + u_now[..., a] for a in range(n)]
        return -_sample_vector(x_field, points, grid)

    for index, (t, dt, stages) in enumerate(x_series):
        x1, x2, x3, x4 = stages
        l1 = stage_velocity(x1, u)
        l2 = stage_velocity(x2, u + 0.5 * dt * l1)
        l3 = stage_velocity(x3, u + 0.5 * dt * l2)
        l4 = stage_velocity(x4, u + dt * l3)
        u = u + (dt / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
        _check_jacobian(grid, u)
        is_last = index == len(x_series) - 1
        if is_last or (record_every > 0 and (index + 1) % record_every == 0):
            maps.append((t + dt, TensorField(grid, u.copy(), "vector")))
    return maps


def pullback(displacement, fld):
    """Pull a covariant field back along psi = id + displacement.

    (psi* T)_{i...}(x) = J^a_i(x) ... T_{a...}(psi(x)) with J the lattice
    Jacobian of psi and field values at psi(x) interpolated by periodic cubic
    splines. Accepts scalar fields, covariant TensorFields, and MetricFields
    (returned as a MetricField); contravariant fields are rejected since they
    push forward, not back.
    """
    grid = displacement.grid
    if displacement.symmetry != "vector" or displacement.rank != 1:
        raise FieldError("displacement must be a vector field")
    u = displacement.values
    _check_jacobian(grid, u)
    jac = displacement_jacobian(grid, u)

    base = _dense_coordinates(grid)
    coords_index = np.stack(
        [(base[a] + u[..., a]) / grid.spacings[a] for a in range(grid.n_dims)],
        axis=0)

    is_metric = isinstance(fld, MetricField)
    source = fld.field if is_metric else fld
    if isinstance(source, ScalarField):
        return ScalarField(grid, _interpolate(source.values, coords_index))
    if source.symmetry == "vector":
        raise FieldError("cannot pull back a contravariant field")

    rank = source.rank
    moved = np.empty_like(source.values)
    for comp in np.ndindex(*source.values.shape[grid.n_dims:]):
        moved[(Ellipsis,) + comp] = _interpolate(
            source.values[(Ellipsis,) + comp], coords_index)

    out = moved
    n = grid.n_dims
    for slot in range(rank):
        # contract slot's index with J^a_i, one slot at a time; the Jacobian
        # gains singleton axes so it broadcasts over the untouched slots
        out = np.moveaxis(out, n + slot, -1)
        extra = out.ndim - n - 1
        jac_view = jac.reshape(grid.shape + (1,) * extra + (n, n))
        out = np.einsum("...a,...ai->...i", out, jac_view)
        out = np.moveaxis(out, -1, n + slot)
    if source.symmetry == "symmetric2":
        out = 0.5 * (out + np.swapaxes(out, -1, -2))
    if is_metric:
        return MetricField(grid, out)
    return TensorField(grid, out, source.symmetry)
