"""Assembly of the primal-dual optimality system.

Builds the sparse symmetric saddle-point matrix coupling the primal
fields (u_h, p_h) to the dual fields (z_h, y_h):

    [ S_h + M (+ gP Mass_p) ,  C^T ] [U]   [ M u_M + GLS data (+ p data) ]
    [ C                     , -S*  ] [Z] = [ l                           ]

plus one Lagrange multiplier row/column enforcing zero mean of p_h.
C realizes the PDE coupling a(u,w) - b(p,w) + b(x,u), S_h the primal
stabilizers (least-squares residual, gradient-jump penalty, divergence
penalty, high-order Tikhonov term) and S* the dual stabilizers.

All element loops are vectorized over the whole mesh with einsum; the
only Python-level loops are over COO chunks.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .cases import ProblemCase
from .fem import FeSystem, edge_rule, reference_element, triangle_rule
from .mesh import Mesh, Region


@dataclass(frozen=True)
class StabilizationParams:
    """Dimensionless weights of the stabilization and data terms."""

    alpha: float = 0.1
    gamma_u: float = 0.1
    gamma_div: float = 0.1
    gamma_gls: float = 0.1
    gamma_u_star: float = 0.1
    gamma_p_star: float = 0.1
    gamma_m: float = 1000.0
    gamma_p_data: float = 1.0

    def validate(self) -> None:
        for name in (
            "alpha",
            "gamma_u",
            "gamma_div",
            "gamma_gls",
            "gamma_u_star",
            "gamma_p_star",
            "gamma_m",
        ):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be > 0, got {v}")


@dataclass(frozen=True, eq=False)
class SaddleSystem:
    """Assembled global system plus its building blocks.

    ``matrix`` is the full symmetric operator; ``primal_matrix`` holds
    S_h + M (+ pressure-data mass), ``dual_matrix`` holds S* (positive
    semidefinite, entered with a negative sign in ``matrix``) and
    ``coupling`` the (dual x primal) PDE block.
    """

    fe: FeSystem
    matrix: sp.csr_matrix
    rhs: np.ndarray
    primal_matrix: sp.csr_matrix
    dual_matrix: sp.csr_matrix
    coupling: sp.csr_matrix
    xi: float
    # True when the pressure-data mass term is active; the leading block
    # is then nonsingular (no constant-pressure kernel).
    has_pressure_data: bool = False

    def dump(self, path) -> None:
        """Coordinate text dump `i j value` for external inspection."""
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {v!r}\n")


# ---------------------------------------------------------------------------
# Cached geometry and basis tables
# ---------------------------------------------------------------------------


def clear_caches() -> None:
    """Drop the per-mesh geometry and basis tables.

    The caches share work between assembly and error evaluation on one
    mesh; across many meshes (convergence sweeps) they pin retired
    meshes and their tables, so drivers clear them per mesh.
    """
    for fn in (_geometry, _volume_points, _volume_tables, _face_tables):
        fn.cache_clear()


@lru_cache(maxsize=64)
def _geometry(mesh: Mesh):
    v = mesh.vertices[mesh.elements]
    v0 = v[:, 0]
    J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    invJ = np.empty_like(J)
    invJ[:, 0, 0] = J[:, 1, 1] / detJ
    invJ[:, 0, 1] = -J[:, 0, 1] / detJ
    invJ[:, 1, 0] = -J[:, 1, 0] / detJ
    invJ[:, 1, 1] = J[:, 0, 0] / detJ
    hT = mesh.element_sizes()
    return v0, J, invJ, detJ, hT


@lru_cache(maxsize=64)
def _volume_points(mesh: Mesh, degree: int):
    """Physical quadrature points and weights: xq (nt,nq,2), wdet (nt,nq)."""
    rule = triangle_rule(degree)
    v0, J, _, detJ, _ = _geometry(mesh)
    xq = v0[:, None, :] + np.einsum("tdm,qm->tqd", J, rule.points)
    wdet = rule.weights[None, :] * detJ[:, None]
    return xq, wdet


@lru_cache(maxsize=64)
def _volume_tables(mesh: Mesh, order: int, degree: int):
    """Reference values plus physical gradients/Laplacians per element.

    vals : (nq, nb)           (affine map: values are mesh independent)
    grad : (nt, nq, nb, 2)
    lap  : (nt, nq, nb)
    """
    ref = reference_element(order)
    rule = triangle_rule(degree)
    _, _, invJ, _, _ = _geometry(mesh)
    vals = ref.eval(rule.points, 0)
    ref_grad = ref.eval(rule.points, 1)
    grad = np.einsum("qbm,tmd->tqbd", ref_grad, invJ)
    ref_hess = ref.eval(rule.points, 2)
    hess = np.einsum("tmc,qbmn,tnd->tqbcd", invJ, ref_hess, invJ)
    lap = hess[..., 0, 0] + hess[..., 1, 1]
    return vals, grad, lap


@lru_cache(maxsize=64)
def _face_tables(mesh: Mesh, order: int, degree: int):
    """Normal-derivative tables on interior faces for both neighbors.

    Returns (face_ids, elems_minus, elems_plus, gn_minus, gn_plus,
    weights, hF) where gn_* has shape (nf, nq, nb) and holds the normal
    derivative of each scalar basis function of the given neighbor at
    the face quadrature points; weights include the face length.
    """
    rule = edge_rule(degree)
    v0, _, invJ, _, _ = _geometry(mesh)
    faces = mesh.interior_faces
    fdata = mesh.faces[faces]
    normals = mesh.normals[faces]
    p0 = mesh.vertices[fdata[:, 0]]
    p1 = mesh.vertices[fdata[:, 1]]
    hF = np.linalg.norm(p1 - p0, axis=1)
    s = rule.points[:, 0]
    # physical points along each face: (nf, nq, 2)
    phys = p0[:, None, :] + s[None, :, None] * (p1 - p0)[:, None, :]
    ref = reference_element(order)

    def side_tables(elems):
        rel = phys - v0[elems][:, None, :]
        refpts = np.einsum("fmd,fqd->fqm", invJ[elems], rel)
        nf, nq = refpts.shape[:2]
        ref_grad = ref.eval(refpts.reshape(-1, 2), 1).reshape(nf, nq, -1, 2)
        grad = np.einsum("fqbm,fmd->fqbd", ref_grad, invJ[elems])
        return np.einsum("fqbd,fd->fqb", grad, normals)

    tm = fdata[:, 2]
    tp = fdata[:, 3]
    gn_minus = side_tables(tm)
    gn_plus = side_tables(tp)
    weights = rule.weights[None, :] * hF[:, None]  # ds = |F| dw
    return faces, tm, tp, gn_minus, gn_plus, weights, hF


def volume_degree(fe: FeSystem) -> int:
    k = max(fe.orders.k, fe.orders.k1, fe.orders.k2, fe.orders.k3)
    return min(2 * k + 2, 10)


def face_degree(fe: FeSystem) -> int:
    k = max(fe.orders.k, fe.orders.k1)
    return max(2 * k, 1)


# ---------------------------------------------------------------------------
# Coefficient scaling
# ---------------------------------------------------------------------------


def sup_norm_base_flow(mesh: Mesh, case: ProblemCase, degree: int) -> float:
    """Max Euclidean norm of the base flow over all volume quadrature points."""
    xq, _ = _volume_points(mesh, degree)
    U = case.base_flow(xq[..., 0], xq[..., 1])
    return float(np.sqrt((U**2).sum(axis=-1)).max())


def xi_weights(mesh: Mesh, case: ProblemCase, degree: int):
    """Global, elementwise and facewise convection/diffusion weights."""
    Umax = sup_norm_base_flow(mesh, case, degree)
    _, _, _, _, hT = _geometry(mesh)
    xi = max(case.nu, Umax * mesh.h)
    xi_T = np.maximum(case.nu, Umax * hT)
    if xi <= 0.0 or xi_T.min() <= 0.0:
        raise ValueError("degenerate scaling: nu = 0 and vanishing base flow")
    return xi, xi_T, Umax


# ---------------------------------------------------------------------------
# Small dense/sparse helpers
# ---------------------------------------------------------------------------


def _expand_identity(s: np.ndarray) -> np.ndarray:
    """(t,ni,nj) scalar blocks -> (t,2ni,2nj) vector blocks, delta_cd."""
    t, ni, nj = s.shape
    out = np.zeros((t, 2 * ni, 2 * nj))
    out[:, 0::2, 0::2] = s
    out[:, 1::2, 1::2] = s
    return out


def _expand_components(s: np.ndarray) -> np.ndarray:
    """(t,ni,nj,2,2) component blocks (row comp c, col comp d) -> interleaved."""
    t, ni, nj = s.shape[:3]
    out = np.empty((t, 2 * ni, 2 * nj))
    for c in range(2):
        for d in range(2):
            out[:, c::2, d::2] = s[..., c, d]
    return out


class _Coo:
    """COO triplet accumulator with constrained-dof filtering."""

    def __init__(self, shape):
        self.shape = shape
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add_blocks(self, row_dofs: np.ndarray, col_dofs: np.ndarray, local: np.ndarray):
        """row_dofs (t,ni), col_dofs (t,nj), local (t,ni,nj); -1 dofs dropped."""
        t, ni = row_dofs.shape
        nj = col_dofs.shape[1]
        r = np.repeat(row_dofs[:, :, None], nj, axis=2).ravel()
        c = np.repeat(col_dofs[:, None, :], ni, axis=1).ravel()
        v = local.ravel()
        keep = (r >= 0) & (c >= 0)
        self.rows.append(r[keep])
        self.cols.append(c[keep])
        self.vals.append(v[keep])

    def add_entries(self, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        keep = (rows >= 0) & (cols >= 0)
        self.rows.append(rows[keep])
        self.cols.append(cols[keep])
        self.vals.append(vals[keep])

    def tocsr(self) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix(self.shape)
        r = np.concatenate(self.rows)
        c = np.concatenate(self.cols)
        v = np.concatenate(self.vals)
        return sp.coo_matrix((v, (r, c)), shape=self.shape).tocsr()


def _rhs_scatter(size: int, dofs: np.ndarray, local: np.ndarray) -> np.ndarray:
    """dofs (t,ni), local (t,ni) -> dense vector with -1 dofs dropped."""
    out = np.zeros(size)
    d = dofs.ravel()
    v = local.ravel()
    keep = d >= 0
    np.add.at(out, d[keep], v[keep])
    return out


# ---------------------------------------------------------------------------
# Individual forms
# ---------------------------------------------------------------------------


def _strong_tables(mesh, fe, case, degree):
    """Strong-residual values L(phi)_c of every primal basis function.

    Returns (L, dofs) with L of shape (nt, nq, nloc, 2) over the
    concatenated local primal basis (velocity dofs first, then pressure)
    and dofs the matching global indices (pressure offset applied).
    """
    xq, _ = _volume_points(mesh, degree)
    valu, gradu, lapu = _volume_tables(mesh, fe.orders.k, degree)
    valp, gradp, _ = _volume_tables(mesh, fe.orders.k2, degree)
    U = case.base_flow(xq[..., 0], xq[..., 1])
    gU = case.base_flow_grad(xq[..., 0], xq[..., 1])
    nt, nq = xq.shape[:2]
    nb_u = valu.shape[1]
    nb_p = valp.shape[1]
    L = np.zeros((nt, nq, 2 * nb_u + nb_p, 2))
    # velocity basis phi_b e_c0: L_c = delta(c,c0) [U.grad phi_b - nu lap phi_b]
    #                                  + phi_b dU_c/dx_c0
    scal = np.einsum("tqd,tqbd->tqb", U, gradu) - case.nu * lapu
    for c0 in range(2):
        L[:, :, 2 * np.arange(nb_u) + c0, c0] += scal
        for c in range(2):
            L[:, :, 2 * np.arange(nb_u) + c0, c] += gU[:, :, None, c, c0] * valu[None]
    # pressure basis psi_j: L_c = d psi_j / dx_c
    L[:, :, 2 * nb_u:, :] = gradp

    o_u, o_p = fe.offsets[0], fe.offsets[1]
    dofs = np.concatenate(
        [fe.u_map.element_dofs() + o_u, fe.p_map.element_dofs() + o_p], axis=1
    )
    return L, dofs


def assemble_gls(mesh, fe, case, params, xi_T, coo: _Coo) -> np.ndarray:
    """Least-squares residual stabilizer; returns its data-term RHS."""
    degree = volume_degree(fe)
    xq, wdet = _volume_points(mesh, degree)
    _, _, _, _, hT = _geometry(mesh)
    L, dofs = _strong_tables(mesh, fe, case, degree)
    scale = params.gamma_gls * hT**2 / xi_T
    local = np.einsum("t,tq,tqic,tqjc->tij", scale, wdet, L, L)
    local = 0.5 * (local + local.transpose(0, 2, 1))
    coo.add_blocks(dofs, dofs, local)

    f = case.source(xq[..., 0], xq[..., 1])
    rhs_loc = np.einsum("t,tq,tqc,tqic->ti", scale, wdet, f, L)
    return _rhs_scatter(fe.n_dofs, dofs, rhs_loc)


def assemble_tikhonov_and_div(mesh, fe, params, xi_T, coo: _Coo) -> None:
    """alpha h^2k gradient term and divergence penalty on the velocity."""
    degree = volume_degree(fe)
    _, wdet = _volume_points(mesh, degree)
    _, gradu, _ = _volume_tables(mesh, fe.orders.k, degree)
    dofs = fe.u_map.element_dofs() + fe.offsets[0]

    stiff = np.einsum("tq,tqid,tqjd->tij", wdet, gradu, gradu)
    local = params.alpha * mesh.h ** (2 * fe.orders.k) * _expand_identity(stiff)

    div = np.einsum("t,tq,tqic,tqjd->tijcd", params.gamma_div * xi_T, wdet, gradu, gradu)
    local += _expand_components(div)
    local = 0.5 * (local + local.transpose(0, 2, 1))
    coo.add_blocks(dofs, dofs, local)


def assemble_jump(mesh, fe, params, case, coo: _Coo) -> None:
    """Interior-penalty term on the jump of the velocity normal gradient."""
    degree = face_degree(fe)
    _, tm, tp, gm, gp, w, hF = _face_tables(mesh, fe.orders.k, degree)
    _, _, Umax = xi_weights(mesh, case, volume_degree(fe))
    xi_F = np.maximum(case.nu, Umax * hF)
    scale = params.gamma_u * hF * xi_F
    g = np.concatenate([gm, -gp], axis=2)  # (nf, nq, 2nb): jump values
    local = np.einsum("f,fq,fqi,fqj->fij", scale, w, g, g)
    local = 0.5 * (local + local.transpose(0, 2, 1))
    edofs = fe.u_map.element_dofs() + fe.offsets[0]
    dofs = np.concatenate([edofs[tm], edofs[tp]], axis=1)
    coo.add_blocks(dofs, dofs, _expand_identity(local))


def assemble_dual_stabilizer(mesh, fe, params, coo: _Coo) -> None:
    """S*: H1 seminorm on the dual velocity, L2 mass on the dual pressure."""
    degree = volume_degree(fe)
    _, wdet = _volume_points(mesh, degree)
    _, gradz, _ = _volume_tables(mesh, fe.orders.k1, degree)
    valy, _, _ = _volume_tables(mesh, fe.orders.k3, degree)

    stiff = np.einsum("tq,tqid,tqjd->tij", params.gamma_u_star * wdet, gradz, gradz)
    stiff = 0.5 * (stiff + stiff.transpose(0, 2, 1))
    zdofs = fe.z_map.element_dofs()  # offsets applied by caller convention below
    coo.add_blocks(zdofs, zdofs, _expand_identity(stiff))

    mass = np.einsum("tq,qi,qj->tij", params.gamma_p_star * wdet, valy, valy)
    ydofs = fe.y_map.element_dofs() + fe.z_map.n_dofs
    coo.add_blocks(ydofs, ydofs, mass)


def assemble_coupling(mesh, fe, case, coo: _Coo) -> None:
    """PDE block C[dual test, primal trial] = a(u,z) - b(p,z) + b(y,u).

    Row indices are dual-local (z first, then y), column indices
    primal-local (u first, then p).
    """
    degree = volume_degree(fe)
    xq, wdet = _volume_points(mesh, degree)
    valu, gradu, _ = _volume_tables(mesh, fe.orders.k, degree)
    valz, gradz, _ = _volume_tables(mesh, fe.orders.k1, degree)
    valp, _, _ = _volume_tables(mesh, fe.orders.k2, degree)
    valy, _, _ = _volume_tables(mesh, fe.orders.k3, degree)
    U = case.base_flow(xq[..., 0], xq[..., 1])
    gU = case.base_flow_grad(xq[..., 0], xq[..., 1])

    udofs = fe.u_map.element_dofs()
    pdofs = fe.p_map.element_dofs() + fe.u_map.n_dofs
    zdofs = fe.z_map.element_dofs()
    ydofs = fe.y_map.element_dofs() + fe.z_map.n_dofs

    # a(u, z): convection + reaction + viscous terms
    Ugrad = np.einsum("tqd,tqbd->tqb", U, gradu)
    conv = np.einsum("tq,tqj,qi->tij", wdet, Ugrad, valz)
    visc = case.nu * np.einsum("tq,tqjd,tqid->tij", wdet, gradu, gradz)
    Czu = _expand_identity(conv + visc)
    react = np.einsum("tq,tqcd,qj,qi->tijcd", wdet, gU, valu, valz)
    Czu += _expand_components(react)
    coo.add_blocks(zdofs, udofs, Czu)

    # -b(p, z) = -int p div z
    bpz = np.einsum("tq,qj,tqic->tijc", wdet, valp, gradz)
    nt, nbz, nbp = bpz.shape[0], bpz.shape[1], bpz.shape[2]
    Czp = np.empty((nt, 2 * nbz, nbp))
    for c in range(2):
        Czp[:, c::2, :] = -bpz[..., c].transpose(0, 1, 2)
    coo.add_blocks(zdofs, pdofs, Czp)

    # b(y, u) = int y div u
    byu = np.einsum("tq,qi,tqjd->tijd", wdet, valy, gradu)
    nby, nbu = byu.shape[1], byu.shape[2]
    Cyu = np.empty((nt, nby, 2 * nbu))
    for d in range(2):
        Cyu[:, :, d::2] = byu[..., d]
    coo.add_blocks(ydofs, udofs, Cyu)


def assemble_measurement(
    mesh, fe, case, params, xi, noise: np.ndarray | None
):
    """Measurement mass on omega_M plus the measured-data functional.

    Region membership is decided pointwise at the quadrature points.
    Returns (coo accumulator over primal dofs, rhs over the full system).
    """
    degree = volume_degree(fe)
    xq, wdet = _volume_points(mesh, degree)
    valu, _, _ = _volume_tables(mesh, fe.orders.k, degree)
    mask = case.omega_m.contains(xq[..., 0], xq[..., 1])
    if not mask.any():
        import warnings

        warnings.warn("no quadrature point falls inside omega_M", stacklevel=2)
    wmask = wdet * mask
    # The data term weights the measurement inner product
    # (u, v)_M = gamma_M xi^-1 (u, v)_{omega_M} once more by gamma_M,
    # as in the compact primal-dual form; effective factor gamma_M^2/xi.
    factor = params.gamma_m**2 / xi

    coo = _Coo((fe.n_primal, fe.n_primal))
    mass = factor * np.einsum("tq,qi,qj->tij", wmask, valu, valu)
    mass = 0.5 * (mass + mass.transpose(0, 2, 1))
    udofs = fe.u_map.element_dofs()
    coo.add_blocks(udofs, udofs, _expand_identity(mass))

    u_meas = case.velocity(xq[..., 0], xq[..., 1])
    if noise is not None:
        coeff = noise[udofs.reshape(udofs.shape[0], -1, 2)]
        u_meas = u_meas + np.einsum("qb,tbc->tqc", valu, coeff)
    rhs_loc = factor * np.einsum("tq,tqc,qi->tic", wmask, u_meas, valu)
    # interleave components into the local dof ordering (node-major)
    nt, nbu = udofs.shape[0], valu.shape[1]
    loc = np.empty((nt, 2 * nbu))
    loc[:, 0::2] = rhs_loc[..., 0]
    loc[:, 1::2] = rhs_loc[..., 1]
    rhs = _rhs_scatter(fe.n_dofs, fe.u_map.element_dofs() + fe.offsets[0], loc)
    return coo, rhs


def assemble_pressure_data(mesh, fe, case, params, coo: _Coo) -> np.ndarray:
    """Pressure-augmentation mass on p plus its data functional."""
    degree = volume_degree(fe)
    xq, wdet = _volume_points(mesh, degree)
    valp, _, _ = _volume_tables(mesh, fe.orders.k2, degree)
    gP = params.gamma_p_data
    mass = gP * np.einsum("tq,qi,qj->tij", wdet, valp, valp)
    pdofs_local = fe.p_map.element_dofs() + fe.u_map.n_dofs
    coo.add_blocks(pdofs_local, pdofs_local, mass)

    p = case.pressure(xq[..., 0], xq[..., 1])
    rhs_loc = gP * np.einsum("tq,tq,qi->ti", wdet, p, valp)
    return _rhs_scatter(fe.n_dofs, fe.p_map.element_dofs() + fe.offsets[1], rhs_loc)


def assemble_load(mesh, fe, case) -> np.ndarray:
    """l(w) = int f.w over the dual velocity test space."""
    degree = volume_degree(fe)
    xq, wdet = _volume_points(mesh, degree)
    valz, _, _ = _volume_tables(mesh, fe.orders.k1, degree)
    f = case.source(xq[..., 0], xq[..., 1])
    loc_c = np.einsum("tq,tqc,qi->tic", wdet, f, valz)
    nt, nbz = loc_c.shape[0], loc_c.shape[1]
    loc = np.empty((nt, 2 * nbz))
    loc[:, 0::2] = loc_c[..., 0]
    loc[:, 1::2] = loc_c[..., 1]
    return _rhs_scatter(fe.n_dofs, fe.z_map.element_dofs() + fe.offsets[2], loc)


def pressure_mean_vector(mesh, fe) -> np.ndarray:
    """Vector of int psi_j over the primal pressure dofs."""
    degree = volume_degree(fe)
    _, wdet = _volume_points(mesh, degree)
    valp, _, _ = _volume_tables(mesh, fe.orders.k2, degree)
    loc = np.einsum("tq,qj->tj", wdet, valp)
    return _rhs_scatter(fe.p_map.n_dofs, fe.p_map.element_dofs(), loc)


# ---------------------------------------------------------------------------
# Full system
# ---------------------------------------------------------------------------


def assemble_full(
    mesh: Mesh,
    fe: FeSystem,
    case: ProblemCase,
    params: StabilizationParams | None = None,
    *,
    pressure_data: bool = False,
    noise: np.ndarray | None = None,
) -> SaddleSystem:
    """Assemble the complete optimality system for one configuration."""
    params = params or StabilizationParams()
    params.validate()
    xi, xi_T, _ = xi_weights(mesh, case, volume_degree(fe))

    n_primal, n_dual, n = fe.n_primal, fe.n_dual, fe.n_dofs
    o_u, o_p, o_z, o_y, o_mu = fe.offsets

    # --- primal block S_h + M; note o_u = 0 and o_p = n_u, so full-system
    # indices of the primal dofs coincide with primal-block indices ---
    primal_coo, rhs = assemble_measurement(mesh, fe, case, params, xi, noise)
    rhs += assemble_gls(mesh, fe, case, params, xi_T, primal_coo)
    assemble_tikhonov_and_div(mesh, fe, params, xi_T, primal_coo)
    assemble_jump(mesh, fe, params, case, primal_coo)
    if pressure_data:
        rhs += assemble_pressure_data(mesh, fe, case, params, primal_coo)
    primal_matrix = primal_coo.tocsr()

    # --- dual block S* ---
    dual_coo = _Coo((n_dual, n_dual))
    assemble_dual_stabilizer(mesh, fe, params, dual_coo)
    dual_matrix = dual_coo.tocsr()

    # --- coupling C (dual rows, primal cols) ---
    coup_coo = _Coo((n_dual, n_primal))
    assemble_coupling(mesh, fe, case, coup_coo)
    coupling = coup_coo.tocsr()

    rhs += assemble_load(mesh, fe, case)

    # --- global matrix ---
    mean_vec = pressure_mean_vector(mesh, fe)
    glob = _Coo((n, n))
    pm = primal_matrix.tocoo()
    glob.add_entries(pm.row, pm.col, pm.data)
    dm = dual_matrix.tocoo()
    glob.add_entries(dm.row + n_primal, dm.col + n_primal, -dm.data)
    cm = coupling.tocoo()
    glob.add_entries(cm.row + n_primal, cm.col, cm.data)
    glob.add_entries(cm.col, cm.row + n_primal, cm.data)
    pidx = np.arange(fe.p_map.n_dofs) + o_p
    glob.add_entries(np.full_like(pidx, o_mu), pidx, mean_vec)
    glob.add_entries(pidx, np.full_like(pidx, o_mu), mean_vec)

    return SaddleSystem(
        fe=fe,
        matrix=glob.tocsr(),
        rhs=rhs,
        primal_matrix=primal_matrix,
        dual_matrix=dual_matrix,
        coupling=coupling,
        xi=xi,
        has_pressure_data=bool(pressure_data and params.gamma_p_data > 0),
    )


# ---------------------------------------------------------------------------
# Field evaluation / norms (shared by noise scaling and error analysis)
# ---------------------------------------------------------------------------


def field_values(mesh, fe, dofmap, coeffs, degree):
    """Evaluate a discrete field at the volume quadrature points.

    Returns (nt, nq) for scalar maps and (nt, nq, 2) for vector maps;
    constrained dofs contribute zero.
    """
    vals, _, _ = _volume_tables(mesh, dofmap.order, degree)
    edofs = dofmap.element_dofs()
    if dofmap.n_comp == 1:
        c = np.where(edofs >= 0, coeffs[np.maximum(edofs, 0)], 0.0)
        return np.einsum("qb,tb->tq", vals, c)
    ed = edofs.reshape(edofs.shape[0], -1, 2)
    c = np.where(ed >= 0, coeffs[np.maximum(ed, 0)], 0.0)
    return np.einsum("qb,tbc->tqc", vals, c)


def field_norm_l2(
    mesh: Mesh,
    fe: FeSystem,
    dofmap,
    coeffs: np.ndarray | None,
    region: Region | None = None,
    exact=None,
    degree: int | None = None,
) -> float:
    """L2 norm over a region of exact - discrete (either may be absent)."""
    if degree is None:
        degree = min(2 * dofmap.order + 4, 10)
    xq, wdet = _volume_points(mesh, degree)
    if exact is not None:
        vals = np.asarray(exact(xq[..., 0], xq[..., 1]), dtype=float)
    else:
        vals = 0.0
    if coeffs is not None:
        vals = vals - field_values(mesh, fe, dofmap, coeffs, degree)
    sq = vals**2
    if sq.ndim == 3:
        sq = sq.sum(axis=-1)
    if region is not None:
        sq = sq * region.contains(xq[..., 0], xq[..., 1])
    return float(np.sqrt((wdet * sq).sum()))


def jump_seminorm(
    mesh: Mesh,
    fe: FeSystem,
    coeffs: np.ndarray,
    gamma: float,
    case: ProblemCase | None = None,
    include_xi: bool = False,
) -> float:
    """(gamma sum_F int h_F [xi_F] |jump(grad w . n)|^2)^(1/2) for a
    velocity field w given by primal-velocity coefficients."""
    degree = face_degree(fe)
    _, tm, tp, gm, gp, w, hF = _face_tables(mesh, fe.orders.k, degree)
    edofs = fe.u_map.element_dofs().reshape(mesh.n_elements, -1, 2)
    cm = coeffs[edofs[tm]]
    cp = coeffs[edofs[tp]]
    jump = np.einsum("fqb,fbc->fqc", gm, cm) - np.einsum("fqb,fbc->fqc", gp, cp)
    scale = gamma * hF
    if include_xi:
        _, _, Umax = xi_weights(mesh, case, volume_degree(fe))
        scale = scale * np.maximum(case.nu, Umax * hF)
    total = np.einsum("f,fq,fqc,fqc->", scale, w, jump, jump)
    return float(np.sqrt(total))


def continuous_residual(mesh: Mesh, fe: FeSystem, case: ProblemCase) -> np.ndarray:
    """A((u,p),(w,x)) - l(w) for the exact fields against every dual
    basis function; vanishes up to quadrature error (weak consistency)."""
    degree = volume_degree(fe)
    xq, wdet = _volume_points(mesh, degree)
    valz, gradz, _ = _volume_tables(mesh, fe.orders.k1, degree)
    valy, _, _ = _volume_tables(mesh, fe.orders.k3, degree)

    u = case.velocity(xq[..., 0], xq[..., 1])
    gu = case.velocity_grad(xq[..., 0], xq[..., 1])
    U = case.base_flow(xq[..., 0], xq[..., 1])
    gU = case.base_flow_grad(xq[..., 0], xq[..., 1])
    p = case.pressure(xq[..., 0], xq[..., 1])
    f = case.source(xq[..., 0], xq[..., 1])
    conv = np.einsum("tqcd,tqd->tqc", gu, U) + np.einsum("tqcd,tqd->tqc", gU, u)

    # a(u, z) - b(p, z) - l(z) rows
    loc_c = np.einsum("tq,tqc,qi->tic", wdet, conv - f, valz)
    loc_c += case.nu * np.einsum("tq,tqcd,tqid->tic", wdet, gu, gradz)
    loc_c -= np.einsum("tq,tq,tqic->tic", wdet, p, gradz)
    nt, nbz = loc_c.shape[0], loc_c.shape[1]
    loc = np.empty((nt, 2 * nbz))
    loc[:, 0::2] = loc_c[..., 0]
    loc[:, 1::2] = loc_c[..., 1]
    res = np.zeros(fe.n_dual)
    res[: fe.z_map.n_dofs] = _rhs_scatter(
        fe.z_map.n_dofs, fe.z_map.element_dofs(), loc
    )

    # b(y, u) rows
    div = gu[..., 0, 0] + gu[..., 1, 1]
    loc_y = np.einsum("tq,tq,qi->ti", wdet, div, valy)
    res[fe.z_map.n_dofs:] = _rhs_scatter(
        fe.y_map.n_dofs, fe.y_map.element_dofs(), loc_y
    )
    return res
