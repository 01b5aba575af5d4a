"""Riemannian operators and exterior calculus over the lattice layer.

Index conventions: metrics, 2-forms and 3-forms are covariant with full
component storage; "vector" fields are contravariant. Form norms use full
index contraction (|H|^2 = H_ijk H^ijk with all index triples counted), which
is the normalization under which tr_g(H^2) = |H|^2 pointwise.

The codifferential is the exact adjoint of the discrete exterior derivative
for the inner product that counts each increasing index tuple once (the
classical normalization), so it reduces to minus the contracted covariant
divergence, discrete d(d(.)) and d*(d*(.)) vanish identically, and the Hodge
Laplacian -(dd* + d*d) is exactly self-adjoint and nonpositive. Against the
full-contraction pairing of weighted_inner the same adjointness reads
<d a, b> = (k+1) <a, d* b> on (k+1)-forms.
"""

from __future__ import annotations

import numpy as np

from .errors import FieldError, PositivityError
from .lattice import (
    Grid,
    ScalarField,
    TensorField,
    diff_values,
    gradient_values,
    pointwise_inner_values,
)

EPS_SPD = 1e-8
_INVERSE_TOL = 1e-12


class MetricField:
    """Symmetric positive definite 2-tensor with cached inverse and volume density.

    Positivity means every pointwise eigenvalue is at least EPS_SPD; data
    violating the floor is rejected outright rather than regularized, so a
    flow that drifts out of the metric cone fails loudly at the offending
    step. Curvature quantities are computed lazily and cached per instance.
    """

    def __init__(self, grid, values):
        self.grid = grid
        field = TensorField(grid, values, "symmetric2")
        self.values = field.values
        n = grid.n_dims
        eye = np.eye(n)
        try:
            np.linalg.cholesky(self.values - EPS_SPD * eye)
        except np.linalg.LinAlgError as exc:
            raise PositivityError(
                f"metric has a pointwise eigenvalue below {EPS_SPD:g}"
            ) from exc
        inv = np.linalg.inv(self.values)
        gap = float(np.max(np.abs(
            np.einsum("...ij,...jk->...ik", self.values, inv) - eye
        )))
        if gap > _INVERSE_TOL:
            raise PositivityError(f"metric inverse residual {gap:.3e} exceeds 1e-12")
        inv.setflags(write=False)
        self.inv_values = inv
        det = np.linalg.det(self.values)
        sq = np.sqrt(det)
        sq.setflags(write=False)
        self.sqrt_det_values = sq
        self._cache = {}

    @property
    def field(self):
        return TensorField(self.grid, self.values, "symmetric2")

    @property
    def n_dims(self):
        return self.grid.n_dims

    def min_eigenvalue(self):
        return float(np.min(np.linalg.eigvalsh(self.values)))

    def max_inverse_eigenvalue(self):
        return float(np.max(np.linalg.eigvalsh(self.inv_values)))

    def _cached(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]


def flat_metric(grid, diagonal=None):
    """Constant metric, identity by default or with a given diagonal."""
    n = grid.n_dims
    diag = np.ones(n) if diagonal is None else np.asarray(diagonal, dtype=float)
    values = np.zeros(grid.shape + (n, n))
    values[...] = np.diag(diag)
    return MetricField(grid, values)


def christoffel_values(g):
    """Raw Christoffel symbols, layout Gamma[..., k, i, j] with upper index first."""
    def build():
        dg = gradient_values(g.grid, g.values)  # [..., c, i, j] = D_c g_ij
        di_gjl = np.einsum("...ijl->...lij", dg)
        dj_gil = np.einsum("...jil->...lij", dg)
        dl_gij = dg
        combo = di_gjl + dj_gil - dl_gij
        return np.einsum("...kl,...lij->...kij", g.inv_values, combo,
                         optimize=True) * 0.5
    return g._cached("christoffel", build)


def christoffel(g):
    """Levi-Civita connection coefficients Gamma^k_ij of the metric.

    Exactly symmetric in the lower index pair by construction.
    """
    return TensorField(g.grid, christoffel_values(g), "general")


def ricci_values(g):
    def build():
        grid = g.grid
        gam = christoffel_values(g)
        n = grid.n_dims
        dgam = np.stack(
            [diff_values(gam, a, grid.spacings[a]) for a in range(n)],
            axis=grid.n_dims,
        )  # [..., c, k, i, j]
        term1 = np.einsum("...ccij->...ij", dgam)
        # Gamma^k_kj contracted once; its coordinate gradient is symmetrized
        # explicitly because the discrete product rule leaves an O(h^4)
        # antisymmetric remainder that would otherwise leak into Ric.
        phi = np.einsum("...kkj->...j", gam)
        dphi = gradient_values(grid, phi)  # [..., i, j] = D_i phi_j
        term2 = 0.5 * (dphi + np.swapaxes(dphi, -1, -2))
        term3 = np.einsum("...l,...lij->...ij", phi, gam, optimize=True)
        term4 = np.einsum("...kil,...lkj->...ij", gam, gam, optimize=True)
        return term1 - term2 + term3 - term4
    return g._cached("ricci", build)


def ricci(g):
    """Ricci tensor from the curvature of the Levi-Civita connection."""
    return TensorField(g.grid, ricci_values(g), "symmetric2")


def scalar_curvature(g):
    """Scalar curvature R = g^ij Ric_ij."""
    def build():
        return np.einsum("...ij,...ij->...", g.inv_values, ricci_values(g),
                         optimize=True)
    return ScalarField(g.grid, g._cached("scalar_curvature", build))


def riemann_values(g):
    """Curvature tensor R^m_jkl of the connection, R(e_k,e_l)e_j = R^m_jkl e_m."""
    def build():
        grid = g.grid
        gam = christoffel_values(g)
        n = grid.n_dims
        dgam = np.stack(
            [diff_values(gam, a, grid.spacings[a]) for a in range(n)],
            axis=grid.n_dims,
        )  # [..., c, m, i, j] = D_c Gamma^m_ij
        dk_glj = np.einsum("...kmlj->...mjkl", dgam)
        dl_gkj = np.einsum("...lmkj->...mjkl", dgam)
        gamgam1 = np.einsum("...mka,...alj->...mjkl", gam, gam, optimize=True)
        gamgam2 = np.einsum("...mla,...akj->...mjkl", gam, gam, optimize=True)
        return dk_glj - dl_gkj + gamgam1 - gamgam2
    return g._cached("riemann", build)


def hessian(g, f):
    """Covariant Hessian of a scalar, Hess f = D_i D_j f - Gamma^k_ij D_k f."""
    grid = g.grid
    df = gradient_values(grid, f.values)
    ddf = np.stack(
        [diff_values(df, a, grid.spacings[a]) for a in range(grid.n_dims)],
        axis=grid.n_dims,
    )
    gam_term = np.einsum("...kij,...k->...ij", christoffel_values(g), df,
                         optimize=True)
    return TensorField(grid, ddf - gam_term, "symmetric2")


def gradient_vector(g, f):
    """Metric gradient of a scalar as a contravariant field."""
    df = gradient_values(g.grid, f.values)
    up = np.einsum("...ab,...b->...a", g.inv_values, df)
    return TensorField(g.grid, up, "vector")


def laplace_beltrami(g, f):
    """Scalar Laplacian with the sign convention Delta = -(d*d), nonpositive.

    Equals (1/sqrt g) D_a(sqrt g g^ab D_b f) exactly, so it is self-adjoint
    against the volume-weighted quadrature by the skew-adjointness of the
    stencil, not merely to truncation order.
    """
    grid = g.grid
    df = gradient_values(grid, f.values)
    flux = g.sqrt_det_values[..., None] * np.einsum(
        "...ab,...b->...a", g.inv_values, df
    )
    div = np.zeros(grid.shape)
    for a in range(grid.n_dims):
        div = div + diff_values(flux[..., a], a, grid.spacings[a])
    return ScalarField(grid, div / g.sqrt_det_values)


def divergence(g, h):
    """Covariant divergence of a symmetric 2-tensor, (div h)_j = g^ik D_i h_kj."""
    grid = g.grid
    dh = np.stack(
        [diff_values(h.values, a, grid.spacings[a]) for a in range(grid.n_dims)],
        axis=grid.n_dims,
    )  # [..., c, k, j]
    gam = christoffel_values(g)
    inv = g.inv_values
    t1 = np.einsum("...ik,...ikj->...j", inv, dh, optimize=True)
    t2 = np.einsum("...ik,...lik,...lj->...j", inv, gam, h.values, optimize=True)
    t3 = np.einsum("...ik,...lij,...kl->...j", inv, gam, h.values, optimize=True)
    return TensorField(grid, t1 - t2 - t3, "covector")


def lie_derivative_metric(g, x):
    """Lie derivative of the metric along a vector field, symmetrized covariant
    derivative of the lowered field."""
    if x.symmetry != "vector":
        raise FieldError("lie_derivative_metric expects a contravariant field")
    grid = g.grid
    xl = np.einsum("...ja,...a->...j", g.values, x.values)
    dxl = gradient_values(grid, xl)  # [..., i, j] = D_i X_j
    gam_term = np.einsum("...kij,...k->...ij", christoffel_values(g), xl,
                         optimize=True)
    sym = dxl + np.swapaxes(dxl, -1, -2) - 2.0 * gam_term
    return TensorField(grid, sym, "symmetric2")


# ---------------------------------------------------------------------------
# Exterior calculus
# ---------------------------------------------------------------------------


def _form_rank(fld):
    if isinstance(fld, ScalarField):
        return 0
    if fld.rank == 1:
        if fld.symmetry == "vector":
            raise FieldError("forms are covariant; got a vector field")
        return 1
    if fld.symmetry != "antisymmetric":
        raise FieldError(f"expected an antisymmetric field, got {fld.symmetry!r}")
    return fld.rank


def exterior_derivative(fld):
    """Discrete exterior derivative on full-component antisymmetric fields.

    (d w)_{a0..ak} = sum_m (-1)^m D_{a_m} w_{a0..^a_m..ak}. Antisymmetry of
    the output is an algebraic identity in the stencil, and d(d w) = 0 holds
    exactly because coordinate stencils commute.
    """
    grid = fld.grid
    k = _form_rank(fld)
    if k >= grid.n_dims:
        # top-degree forms are closed; the would-be (k+1)-form has no slots
        raise FieldError("exterior derivative of a top-degree form is zero")
    grad = gradient_values(grid, fld.values)  # derivative axis first
    base = grid.n_dims
    out = grad.copy()
    for m in range(1, k + 1):
        term = np.moveaxis(grad, base, base + m)
        if m % 2 == 1:
            out -= term
        else:
            out += term
    symmetry = "covector" if k == 0 else "antisymmetric"
    return TensorField(grid, out, symmetry)


def _metric_map_all(values, pairing, grid_ndims, rank):
    """Apply a pointwise index map (raise or lower) to every component slot."""
    letters = "abcdefgh"
    src = letters[:rank]
    dst = letters[rank:2 * rank]
    pair_terms = ",".join(f"...{d}{s}" for d, s in zip(dst, src))
    expr = f"{pair_terms},...{src}->...{dst}"
    return np.einsum(expr, *([pairing] * rank), values, optimize=True)


def codifferential(g, fld):
    """Exact discrete adjoint of the exterior derivative (k-forms to (k-1)-forms).

    Computed as the musical conjugation of the negative stencil divergence:
    d* w = lower((-1/sqrt g) D_c (sqrt g raise(w)^{c...})). On a flat metric
    this is (d* w)_J = -D_c w_{cJ}, the classical codifferential; composed
    twice it vanishes identically.
    """
    grid = g.grid
    k = _form_rank(fld)
    if k == 0:
        raise FieldError("codifferential of a scalar is zero by degree")
    raised = _metric_map_all(fld.values, g.inv_values, grid.n_dims, k)
    weighted = g.sqrt_det_values[(...,) + (None,) * k] * raised
    acc = np.zeros(grid.shape + (grid.n_dims,) * (k - 1))
    tail = (slice(None),) * (k - 1)
    for c in range(grid.n_dims):
        acc = acc - diff_values(weighted[(Ellipsis, c) + tail], c,
                                grid.spacings[c])
    acc = acc / g.sqrt_det_values[(...,) + (None,) * (k - 1)]
    if k == 1:
        return ScalarField(grid, acc)
    lowered = _metric_map_all(acc, g.values, grid.n_dims, k - 1)
    symmetry = "covector" if k == 2 else "antisymmetric"
    return TensorField(grid, lowered, symmetry)


def hodge_laplacian(g, fld):
    """Hodge Laplacian Delta = -(d d* + d* d), exactly self-adjoint, <= 0.

    On a flat metric it acts componentwise as the flat scalar Laplacian.
    """
    grid = g.grid
    k = _form_rank(fld)
    pieces = []
    if k > 0:
        pieces.append(exterior_derivative(codifferential(g, fld)))
    if k < grid.n_dims:
        pieces.append(codifferential(g, exterior_derivative(fld)))
    total = sum(p.values for p in pieces)
    if k == 0:
        return ScalarField(grid, -total)
    symmetry = "covector" if k == 1 else "antisymmetric"
    return TensorField(grid, -total, symmetry)


def interior_product(x, fld):
    """Contraction of a vector field into the first slot of a form."""
    if x.symmetry != "vector":
        raise FieldError("interior product expects a contravariant field")
    k = _form_rank(fld)
    if k == 0:
        raise FieldError("interior product with a scalar is zero by degree")
    rest = "bcdefg"[:k - 1]
    out = np.einsum(f"...a,...a{rest}->...{rest}", x.values, fld.values)
    if k == 1:
        return ScalarField(fld.grid, out)
    symmetry = "covector" if k == 2 else "antisymmetric"
    return TensorField(fld.grid, out, symmetry)


def h_squared(g, H):
    """Pointwise square of a 3-form as a symmetric 2-tensor.

    (H^2)_ij = H_iab H_jcd g^ac g^bd; with the full-contraction norm this
    satisfies tr_g H^2 = |H|^2 identically.
    """
    if _form_rank(H) != 3:
        raise FieldError("h_squared expects a 3-form")
    out = np.einsum(
        "...iab,...ac,...bd,...jcd->...ij",
        H.values, g.inv_values, g.inv_values, H.values, optimize=True,
    )
    return TensorField(g.grid, out, "symmetric2")


def form_norm_sq(g, fld):
    """Pointwise squared norm with full index contraction."""
    rank = 0 if isinstance(fld, ScalarField) else fld.rank
    sym = "scalar" if rank == 0 else fld.symmetry
    vals = pointwise_inner_values(fld.values, fld.values, rank, sym,
                                  g.inv_values, g.values)
    return ScalarField(g.grid, vals)


def lichnerowicz(g, h):
    """Lichnerowicz Laplacian on symmetric 2-tensors.

    Delta^L h = Delta_c h + 2 Riem(h) - Ric.h - h.Ric with the rough Laplacian
    Delta_c = g^ab D_a D_b (negative spectrum: on a flat metric the whole
    operator is the componentwise flat Laplacian). The curvature term is
    assembled from the Riemann tensor and symmetrized, which costs nothing at
    the discretization order and keeps the symmetric-2 tag exact. For h = g
    the curvature terms cancel against each other and Delta_c g = 0.
    """
    if h.symmetry != "symmetric2":
        raise FieldError("lichnerowicz expects a symmetric 2-tensor")
    grid = g.grid
    n = grid.n_dims
    gam = christoffel_values(g)
    inv = g.inv_values

    dh = np.stack(
        [diff_values(h.values, a, grid.spacings[a]) for a in range(n)],
        axis=grid.n_dims,
    )
    cov1 = dh \
        - np.einsum("...lbi,...lj->...bij", gam, h.values, optimize=True) \
        - np.einsum("...lbj,...il->...bij", gam, h.values, optimize=True)
    dcov1 = np.stack(
        [diff_values(cov1, a, grid.spacings[a]) for a in range(n)],
        axis=grid.n_dims,
    )
    cov2 = dcov1 \
        - np.einsum("...lab,...lij->...abij", gam, cov1, optimize=True) \
        - np.einsum("...lai,...blj->...abij", gam, cov1, optimize=True) \
        - np.einsum("...laj,...bil->...abij", gam, cov1, optimize=True)
    rough = np.einsum("...ab,...abij->...ij", inv, cov2, optimize=True)

    riem = riemann_values(g)
    h_up = np.einsum("...ia,...jb,...ab->...ij", inv, inv, h.values,
                     optimize=True)
    curv = np.einsum("...im,...mjkl,...ik->...jl", g.values, riem, h_up,
                     optimize=True)
    curv = 0.5 * (curv + np.swapaxes(curv, -1, -2))

    ric = ricci_values(g)
    mixed = np.einsum("...ik,...kl,...lj->...ij", ric, inv, h.values,
                      optimize=True)
    ric_h = mixed + np.swapaxes(mixed, -1, -2)

    return TensorField(grid, rough + 2.0 * curv - ric_h, "symmetric2")


def deturck_vector(g, g_ref):
    """Gauge vector X^k = g^ij (Gamma(g)^k_ij - Gamma(g_ref)^k_ij).

    Measures the failure of the identity map (M, g) -> (M, g_ref) to be
    harmonic; vanishes identically when both metrics are constant.
    """
    diff = christoffel_values(g) - christoffel_values(g_ref)
    out = np.einsum("...ij,...kij->...k", g.inv_values, diff, optimize=True)
    return TensorField(g.grid, out, "vector")
