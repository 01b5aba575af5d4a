"""Exact reduction of the coupled flow to left-invariant data on 3D groups.

A left-invariant metric on a 3-dimensional Lie group is a single SPD matrix
in a fixed frame, and every invariant 3-form is a multiple h3 of e1^e2^e3,
closed for dimension reasons. Curvature comes from the structure constants
through the Koszul formula, with no discretization error, so this module
supplies exact stationary points (Ric = H^2/4 with nonzero H) that flat
torus grids cannot host, plus an independent right-hand side the lattice
code must reproduce on constant data.

Structure constants are stored as c[k, i, j] = c^k_{ij} with [e_i, e_j] =
c^k_{ij} e_k, antisymmetric in (i, j).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, FieldError, PositivityError

_JACOBI_TOL = 1e-12
_EPSILON = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _EPSILON[_i, _j, _k] = 1.0
    _EPSILON[_i, _k, _j] = -1.0
_EPSILON.setflags(write=False)


def su2_algebra():
    """Structure constants c^k_{ij} = epsilon_{ijk} of su(2)."""
    return _EPSILON.copy()


def heisenberg_algebra():
    """Heisenberg algebra: [e1, e2] = e3, all else zero."""
    c = np.zeros((3, 3, 3))
    c[2, 0, 1] = 1.0
    c[2, 1, 0] = -1.0
    return c


def abelian_algebra():
    """The abelian algebra: all brackets vanish (the torus case)."""
    return np.zeros((3, 3, 3))


def _jacobi_residual(c):
    cyc = (
        np.einsum("aij,bak->bijk", c, c)
        + np.einsum("ajk,bai->bijk", c, c)
        + np.einsum("aki,baj->bijk", c, c)
    )
    return float(np.max(np.abs(cyc)))


@dataclass(frozen=True)
class LieData:
    """Left-invariant state: structure constants, metric matrix, 3-form size.

    Validated on construction: c antisymmetric in its lower pair and
    satisfying the Jacobi identity to 1e-12, g SPD. The unimodular property
    (traceless brackets) decides whether the invariant 3-form is harmonic,
    hence whether the reduction of the coupled flow is exact.
    """

    c: np.ndarray
    g: np.ndarray
    h3: float

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        g = np.array(self.g, dtype=float)
        if c.shape != (3, 3, 3) or g.shape != (3, 3):
            raise FieldError("expected c of shape (3,3,3) and g of shape (3,3)")
        if not np.all(np.isfinite(c)) or not np.all(np.isfinite(g)):
            raise FieldError("non-finite entries in Lie data")
        if np.max(np.abs(c + np.swapaxes(c, 1, 2))) > 1e-12:
            raise FieldError("structure constants not antisymmetric in (i, j)")
        jacobi = _jacobi_residual(c)
        if jacobi > _JACOBI_TOL:
            raise FieldError(f"Jacobi identity fails: residual {jacobi:.3e}")
        if np.max(np.abs(g - g.T)) > 1e-12:
            raise FieldError("metric matrix not symmetric")
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            raise PositivityError("metric matrix is not positive definite")
        c.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "h3", float(self.h3))

    @property
    def unimodular(self):
        return float(np.max(np.abs(np.einsum("kik->i", self.c)))) <= 1e-12

    @property
    def inv(self):
        return np.linalg.inv(self.g)

    def full_form(self):
        """Component array H_{ijk} = h3 * epsilon_{ijk}."""
        return self.h3 * _EPSILON


def _koszul(data):
    """Connection coefficients: nabla_{e_i} e_j = gamma^l_{ij} e_l."""
    c, g = data.c, data.g
    a = np.einsum("aij,ak->kij", c, g)
    b = np.einsum("ajk,ai->kij", c, g)
    d = np.einsum("aki,aj->kij", c, g)
    return 0.5 * np.einsum("lk,kij->lij", data.inv, a - b + d)


def invariant_ricci(data):
    """Ricci matrix of the left-invariant metric.

    Ric_{jk} = gamma^m_{jk} gamma^i_{im} - gamma^m_{ik} gamma^i_{jm}
               - c^a_{ij} gamma^i_{ak},
    the frame trace of the curvature operator written through the Koszul
    coefficients.
    """
    gamma = _koszul(data)
    trace = np.einsum("iim->m", gamma)
    ric = (
        np.einsum("mjk,m->jk", gamma, trace)
        - np.einsum("mik,ijm->jk", gamma, gamma)
        - np.einsum("aij,iak->jk", data.c, gamma)
    )
    return 0.5 * (ric + ric.T)


def invariant_scalar_curvature(data):
    """Scalar curvature, the g-trace of the Ricci matrix."""
    return float(np.einsum("jk,jk->", data.inv, invariant_ricci(data)))


def invariant_h_squared(data):
    """(H^2)_{ij} = H_{iab} H_{jcd} g^{ac} g^{bd}; equals
    2 h3^2 det(g^{-1}) g in closed form."""
    h = data.full_form()
    inv = data.inv
    return np.einsum("iab,jcd,ac,bd->ij", h, h, inv, inv)


def invariant_norm_sq(data):
    """|H|^2 = H_{ijk} H^{ijk}, full contraction (6 h3^2 / det g)."""
    h = data.full_form()
    inv = data.inv
    return float(np.einsum("ijk,abc,ia,jb,kc->", h, h, inv, inv, inv))


def invariant_codifferential(data):
    """d* H as an invariant 2-form (antisymmetric matrix).

    Computed as the adjoint of the Chevalley-Eilenberg differential against
    the normalized form inner products: solve <s, beta>_2 = <H, d beta>_3
    over the 3-dimensional space of invariant 2-forms. Vanishes exactly on
    unimodular algebras, which is what makes the h3 component of the flow
    constant there.
    """
    c, g, inv = data.c, data.g, data.inv
    h = data.full_form()

    def d_two_form(beta):
        # (d beta)_{ijk} = -c^a_{ij} beta_{ak} + c^a_{ik} beta_{aj}
        #                  - c^a_{jk} beta_{ai}
        t1 = np.einsum("aij,ak->ijk", c, beta)
        t2 = np.einsum("aik,aj->ijk", c, beta)
        t3 = np.einsum("ajk,ai->ijk", c, beta)
        return -t1 + t2 - t3

    basis = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        beta = np.zeros((3, 3))
        beta[i, j], beta[j, i] = 1.0, -1.0
        basis.append(beta)

    def inner2(a, b):
        return 0.5 * np.einsum("ij,kl,ik,jl->", a, b, inv, inv)

    def inner3(a, b):
        return np.einsum("ijk,abc,ia,jb,kc->", a, b, inv, inv, inv) / 6.0

    gram = np.array([[inner2(bi, bj) for bj in basis] for bi in basis])
    rhs = np.array([inner3(h, d_two_form(bi)) for bi in basis])
    coeffs = np.linalg.solve(gram, rhs)
    return sum(co * bi for co, bi in zip(coeffs, basis))


def invariant_grf_rhs(data):
    """Matrix ODE right-hand side: (dg, dh3) = (-2 Ric + H^2/2, 0).

    dh3 = 0 expresses that the invariant volume-proportional 3-form is
    harmonic; that holds exactly when the algebra is unimodular, and is
    verified here (through the assembled codifferential) rather than assumed.
    """
    delta_h = float(np.max(np.abs(invariant_codifferential(data))))
    scale = max(abs(data.h3), 1.0)
    if delta_h > 1e-10 * scale:
        raise FieldError(
            f"invariant 3-form is not harmonic (|d*H| = {delta_h:.3e}); "
            "the scalar reduction of the form equation needs a unimodular "
            "algebra")
    dg = -2.0 * invariant_ricci(data) + 0.5 * invariant_h_squared(data)
    return dg, 0.0


def stationarity_residual(data):
    """sup |Ric - H^2/4|, the stationary system's metric block."""
    return float(np.max(np.abs(
        invariant_ricci(data) - 0.25 * invariant_h_squared(data))))


def _pack(g, h3):
    iu = np.triu_indices(3)
    return np.concatenate([g[iu], [h3]])


def _unpack(x):
    g = np.zeros((3, 3))
    iu = np.triu_indices(3)
    g[iu] = x[:6]
    g = g + np.triu(g, 1).T
    return g, float(x[6])


def find_stationary(data0, tol=1e-12, max_iter=100):
    """Newton iteration onto the stationary set Ric = H^2/4.

    The system has 6 equations in the 7 unknowns (g, h3); the least-squares
    Newton step handles the underdetermined Jacobian and lands on the nearby
    point of the stationary family. Steps start at damping 0.5 and backtrack
    on the residual norm; metric trial steps that leave the SPD cone are
    rejected by the same backtracking.
    """

    def residual(x):
        g, h3 = _unpack(x)
        trial = LieData(data0.c, g, h3)
        return (invariant_ricci(trial)
                - 0.25 * invariant_h_squared(trial))[np.triu_indices(3)]

    def norm_or_inf(x):
        try:
            return float(np.linalg.norm(residual(x)))
        except PositivityError:
            return float("inf")

    x = _pack(np.array(data0.g), data0.h3)
    res = residual(x)
    for _ in range(max_iter):
        if float(np.max(np.abs(res))) < tol:
            g, h3 = _unpack(x)
            return LieData(data0.c, g, h3)
        jac = np.zeros((6, 7))
        for col in range(7):
            h = 1e-7 * max(abs(x[col]), 1.0)
            bumped = x.copy()
            bumped[col] += h
            jac[:, col] = (residual(bumped) - res) / h
        delta = np.linalg.lstsq(jac, -res, rcond=None)[0]
        base_norm = float(np.linalg.norm(res))
        step = 0.5
        for _ in range(40):
            if norm_or_inf(x + step * delta) < base_norm:
                break
            step *= 0.5
        else:
            raise ConvergenceError(
                "stationary-point search stalled: no descent step found")
        x = x + step * delta
        res = residual(x)
    raise ConvergenceError(
        f"stationary-point search did not reach {tol:.1e}; "
        f"residual {float(np.max(np.abs(res))):.3e}")


def invariant_flow(data0, t_max, dt=0.002, stop_tol=None, record_every=1):
    """Fixed-step RK4 integration of the matrix ODE.

    Returns (records, final LieData). Each record holds t, the six upper
    metric entries, h3, the stationarity residual, and dt. stop_tol, when
    given, ends the run once the stationarity residual drops below it.
    """
    if t_max <= 0 or dt <= 0:
        raise FieldError("t_max and dt must be positive")

    def rhs(data):
        dg, _ = invariant_grf_rhs(data)
        return dg

    def advance(data, h, dg):
        return LieData(data.c, data.g + h * dg, data.h3)

    def make_row(t, data, res, h):
        iu = np.triu_indices(3)
        row = {"t": t, "h3": data.h3, "stat_residual": res, "dt": h}
        for (i, j), val in zip(zip(*iu), data.g[iu]):
            row[f"g{i + 1}{j + 1}"] = float(val)
        return row

    records = []
    data = data0
    t = 0.0
    step_index = 0
    while t < t_max - 1e-15:
        res = stationarity_residual(data)
        if step_index % record_every == 0:
            records.append(make_row(t, data, res, dt))
        if stop_tol is not None and res < stop_tol:
            break
        h = min(dt, t_max - t)
        attempts = 0
        while True:
            try:
                k1 = rhs(data)
                k2 = rhs(advance(data, 0.5 * h, k1))
                k3 = rhs(advance(data, 0.5 * h, k2))
                k4 = rhs(advance(data, h, k3))
                data = advance(data, h / 6.0, k1 + 2 * k2 + 2 * k3 + k4)
                break
            except PositivityError:
                attempts += 1
                h *= 0.5
                if attempts > 10:
                    raise
        t += h
        step_index += 1
    if not records or records[-1]["t"] < t:
        records.append(make_row(t, data, stationarity_residual(data), dt))
    return records, data


INVARIANT_CSV_COLUMNS = ("t", "g11", "g12", "g13", "g22", "g23", "g33",
                         "h3", "stat_residual", "dt")


def write_invariant_csv(records, path):
    """Matrix-ODE trajectory export, same conventions as the lattice flows:
    headers, comma separation, 17 significant digits."""
    lines = [",".join(INVARIANT_CSV_COLUMNS)]
    for row in records:
        lines.append(",".join("%.17g" % row[c] for c in INVARIANT_CSV_COLUMNS))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
