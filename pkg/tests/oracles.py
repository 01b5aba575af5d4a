"""Closed-form reference data shared across test modules.

The conformal family g = e^{2 phi} delta on the 3-torus is the workhorse: its
Christoffel symbols, Ricci tensor, scalar curvature and Laplacian have short
analytic expressions, and phi below is a low-frequency trigonometric
polynomial whose derivatives are written out by hand. Nothing here calls the
package's stencils, so agreement is evidence rather than tautology.
"""

import numpy as np

from grflab import Grid, MetricField


class ConformalOracle:
    """g = e^{2 phi} delta with phi = a1 sin(x)cos(y) + a2 cos(z)."""

    def __init__(self, n, a1=0.1, a2=0.05):
        self.grid = Grid((n, n, n))
        x, y, z = self.grid.coordinate_arrays()
        self.a1, self.a2 = a1, a2
        self.phi = a1 * np.sin(x) * np.cos(y) + a2 * np.cos(z) + 0.0 * z
        e2 = np.exp(2.0 * self.phi)
        vals = np.zeros(self.grid.shape + (3, 3))
        for i in range(3):
            vals[..., i, i] = e2
        self.metric = MetricField(self.grid, vals)

        shape = self.grid.shape
        dphi = np.zeros(shape + (3,))
        dphi[..., 0] = a1 * np.cos(x) * np.cos(y)
        dphi[..., 1] = -a1 * np.sin(x) * np.sin(y)
        dphi[..., 2] = -a2 * np.sin(z)
        self.dphi = dphi

        hess = np.zeros(shape + (3, 3))
        hess[..., 0, 0] = -a1 * np.sin(x) * np.cos(y)
        hess[..., 0, 1] = -a1 * np.cos(x) * np.sin(y)
        hess[..., 1, 0] = hess[..., 0, 1]
        hess[..., 1, 1] = -a1 * np.sin(x) * np.cos(y)
        hess[..., 2, 2] = -a2 * np.cos(z)
        self.hess_phi = hess

        self.lap_phi = hess[..., 0, 0] + hess[..., 1, 1] + hess[..., 2, 2]
        self.dphi_sq = np.einsum("...a,...a->...", dphi, dphi)

    def christoffel(self):
        """Gamma^k_ij = d^k_i phi_j + d^k_j phi_i - delta_ij phi^k."""
        n = 3
        out = np.zeros(self.grid.shape + (n, n, n))
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    term = 0.0
                    if k == i:
                        term = term + self.dphi[..., j]
                    if k == j:
                        term = term + self.dphi[..., i]
                    if i == j:
                        term = term - self.dphi[..., k]
                    out[..., k, i, j] = term
        return out

    def ricci(self):
        """Ric = -(Hess phi - dphi x dphi) - (lap phi + |dphi|^2) delta."""
        out = -(self.hess_phi
                - np.einsum("...a,...b->...ab", self.dphi, self.dphi))
        trace_part = self.lap_phi + self.dphi_sq
        for i in range(3):
            out[..., i, i] -= trace_part
        return out

    def scalar_curvature(self):
        return np.exp(-2.0 * self.phi) * (-4.0 * self.lap_phi
                                          - 2.0 * self.dphi_sq)

    def laplacian_of(self, f_values, df_values, lap_f_values):
        """Conformal Laplace-Beltrami from flat analytic pieces of f."""
        cross = np.einsum("...a,...a->...", self.dphi, df_values)
        return np.exp(-2.0 * self.phi) * (lap_f_values + cross)


def reference_scalar(grid):
    """A fixed scalar with hand-written flat derivatives, for operator tests."""
    x, y, z = grid.coordinate_arrays()
    f = np.cos(x) * np.sin(y) + 0.5 * np.sin(2.0 * z) + 0.0 * (x + y + z)
    df = np.zeros(grid.shape + (3,))
    df[..., 0] = -np.sin(x) * np.sin(y)
    df[..., 1] = np.cos(x) * np.cos(y)
    df[..., 2] = np.cos(2.0 * z) + 0.0 * (x + y)
    lap = -2.0 * np.cos(x) * np.sin(y) - 2.0 * np.sin(2.0 * z)
    return f, df, lap


def stencil_wavenumber(k, n, period=2.0 * np.pi):
    """Exact symbol of the 4th-order stencil at integer frequency k."""
    h = period / n
    theta = 2.0 * np.pi * k / n
    return (8.0 * np.sin(theta) - np.sin(2.0 * theta)) / (6.0 * h)
