"""Lagrange reference elements, quadrature rules and DOF maps.

Supports continuous P_k on triangles for 1 <= k <= 4, with values,
gradients and Hessians of the nodal basis (Hessians are needed by the
least-squares residual terms).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .mesh import Mesh

MAX_ORDER = 4


# ---------------------------------------------------------------------------
# Reference element
# ---------------------------------------------------------------------------


def _monomial_exponents(k: int) -> np.ndarray:
    return np.array([(a, b) for b in range(k + 1) for a in range(k + 1 - b)])


def _lattice_nodes(k: int) -> np.ndarray:
    return np.array([(i / k, j / k) for j in range(k + 1) for i in range(k + 1 - j)])


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    """Nodal P_k basis on the reference triangle {x,y >= 0, x+y <= 1}."""

    order: int
    nodes: np.ndarray  # (nb, 2) lattice points
    coeffs: np.ndarray  # (n_mono, nb) monomial coefficients per basis fn
    exponents: np.ndarray  # (n_mono, 2)

    @property
    def n_basis(self) -> int:
        return self.nodes.shape[0]

    def eval(self, points: np.ndarray, derivative_order: int = 0) -> np.ndarray:
        """Evaluate all basis functions at reference points.

        Returns shape (npts, nb) for values, (npts, nb, 2) for gradients
        and (npts, nb, 2, 2) for Hessians.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = points[:, 0], points[:, 1]
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        if derivative_order == 0:
            M = _pow(x, a) * _pow(y, b)  # (npts, n_mono)
            return M @ self.coeffs
        if derivative_order == 1:
            Mx = a * _pow(x, a - 1) * _pow(y, b)
            My = b * _pow(x, a) * _pow(y, b - 1)
            return np.stack([Mx @ self.coeffs, My @ self.coeffs], axis=-1)
        if derivative_order == 2:
            Mxx = a * (a - 1) * _pow(x, a - 2) * _pow(y, b)
            Mxy = a * b * _pow(x, a - 1) * _pow(y, b - 1)
            Myy = b * (b - 1) * _pow(x, a) * _pow(y, b - 2)
            H = np.empty(points.shape[:1] + (self.n_basis, 2, 2))
            H[:, :, 0, 0] = Mxx @ self.coeffs
            H[:, :, 0, 1] = H[:, :, 1, 0] = Mxy @ self.coeffs
            H[:, :, 1, 1] = Myy @ self.coeffs
            return H
        raise ValueError(f"unsupported derivative_order {derivative_order}")


def _pow(x: np.ndarray, e: np.ndarray) -> np.ndarray:
    """x[:,None] ** e[None,:] with the convention x**e = 0 for e < 0."""
    out = np.zeros((x.shape[0], e.shape[0]))
    valid = e >= 0
    out[:, valid] = x[:, None] ** e[valid][None, :]
    return out


@lru_cache(maxsize=None)
def reference_element(order: int) -> ReferenceElement:
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in [1, {MAX_ORDER}], got {order}")
    nodes = _lattice_nodes(order)
    expo = _monomial_exponents(order)
    V = _pow(nodes[:, 0], expo[:, 0]) * _pow(nodes[:, 1], expo[:, 1])
    coeffs = np.linalg.inv(V)  # coeffs[:, j] = monomial coeffs of basis j
    return ReferenceElement(order=order, nodes=nodes, coeffs=coeffs, exponents=expo)


def eval_basis(element: ReferenceElement, point, derivative_order: int = 0):
    """Single-point convenience wrapper around ReferenceElement.eval."""
    out = element.eval(np.asarray(point, dtype=float)[None, :], derivative_order)
    return out[0]


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray  # (nq, dim)
    weights: np.ndarray  # (nq,)
    degree: int


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0,1], exact for polynomials up to `degree`."""
    if degree < 1:
        raise ValueError(f"degree must be >= 1, got {degree}")
    n = (degree + 2) // 2
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(
        points=(0.5 * (x + 1.0))[:, None], weights=0.5 * w, degree=degree
    )


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Quadrature on the reference triangle, exact up to `degree`.

    Degree 1 is the centroid rule; higher degrees use a collapsed
    (Duffy) tensor Gauss rule, which keeps all weights positive.
    """
    if not 1 <= degree <= 10:
        raise ValueError(f"degree must be in [1, 10], got {degree}")
    if degree == 1:
        return QuadratureRule(
            points=np.array([[1 / 3, 1 / 3]]), weights=np.array([0.5]), degree=1
        )
    # x = s (1 - t), y = t; Jacobian (1 - t) raises the t-degree by one
    ns = (degree + 2) // 2
    nt = (degree + 3) // 2
    xs, ws = np.polynomial.legendre.leggauss(ns)
    xt, wt = np.polynomial.legendre.leggauss(nt)
    s = 0.5 * (xs + 1.0)
    t = 0.5 * (xt + 1.0)
    ws = 0.5 * ws
    wt = 0.5 * wt
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt) * (1.0 - T)
    pts = np.column_stack([(S * (1.0 - T)).ravel(), T.ravel()])
    return QuadratureRule(points=pts, weights=W.ravel(), degree=degree)


# ---------------------------------------------------------------------------
# DOF maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DofMap:
    """Node layout of a continuous P_k space over a mesh.

    Nodes are shared between neighboring elements (C0 continuity).
    Vector spaces interleave components: dof = n_comp * node + comp.
    For Dirichlet-constrained spaces boundary nodes are eliminated and
    ``node_to_free`` maps node index -> free node index (-1 if fixed).
    """

    order: int
    n_comp: int
    nodes: np.ndarray  # (n_nodes, 2) coordinates
    element_nodes: np.ndarray  # (nt, nb) node indices
    boundary_node: np.ndarray  # (n_nodes,) bool
    dirichlet: bool
    zero_mean: bool
    node_to_free: np.ndarray  # (n_nodes,) int

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_free_nodes(self) -> int:
        return int((self.node_to_free >= 0).sum())

    @property
    def n_dofs(self) -> int:
        return self.n_comp * self.n_free_nodes

    def element_dofs(self) -> np.ndarray:
        """(nt, n_comp * nb) global dof indices; -1 marks constrained dofs."""
        free = self.node_to_free[self.element_nodes]  # (nt, nb)
        nb = free.shape[1]
        out = np.empty((free.shape[0], self.n_comp * nb), dtype=np.int64)
        for c in range(self.n_comp):
            col = self.n_comp * free + c
            col[free < 0] = -1
            out[:, c::self.n_comp] = col
        return out


def build_dofmap(
    mesh: Mesh,
    order: int,
    n_comp: int = 1,
    dirichlet: bool = False,
    zero_mean: bool = False,
) -> DofMap:
    ref = reference_element(order)
    v = mesh.vertices[mesh.elements]  # (nt, 3, 2)
    v0 = v[:, 0]
    J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)  # (nt,2,2)
    # physical node coordinates per element: v0 + J @ ref_node
    phys = v0[:, None, :] + np.einsum("tdm,nm->tnd", J, ref.nodes)
    keys = np.round(phys, 10)
    flat = keys.reshape(-1, 2)
    _, first, inv = np.unique(flat, axis=0, return_index=True, return_inverse=True)
    element_nodes = inv.reshape(phys.shape[0], ref.n_basis)
    nodes = phys.reshape(-1, 2)[first]

    x0, x1, y0, y1 = mesh.bounds
    tol = 1e-12
    boundary_node = (
        (np.abs(nodes[:, 0] - x0) < tol)
        | (np.abs(nodes[:, 0] - x1) < tol)
        | (np.abs(nodes[:, 1] - y0) < tol)
        | (np.abs(nodes[:, 1] - y1) < tol)
    )

    if dirichlet:
        node_to_free = np.full(nodes.shape[0], -1, dtype=np.int64)
        free = np.nonzero(~boundary_node)[0]
        node_to_free[free] = np.arange(free.size)
    else:
        node_to_free = np.arange(nodes.shape[0], dtype=np.int64)

    return DofMap(
        order=order,
        n_comp=n_comp,
        nodes=nodes,
        element_nodes=element_nodes,
        boundary_node=boundary_node,
        dirichlet=dirichlet,
        zero_mean=zero_mean,
        node_to_free=node_to_free,
    )


def interpolate(dofmap: DofMap, func) -> np.ndarray:
    """Nodal interpolation: evaluate `func` at the free node coordinates.

    For vector spaces `func(x, y)` must return shape (..., n_comp).
    Constrained (Dirichlet) nodes are skipped; the caller is responsible
    for only interpolating fields compatible with the constraint.
    """
    free = np.nonzero(dofmap.node_to_free >= 0)[0]
    pts = dofmap.nodes[free]
    vals = np.asarray(func(pts[:, 0], pts[:, 1]), dtype=float)
    if dofmap.n_comp == 1:
        if vals.ndim != 1:
            vals = vals.reshape(-1)
        return vals.copy()
    return vals.reshape(-1).copy()  # interleaved (node, comp)


# ---------------------------------------------------------------------------
# Coupled four-field system
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Orders:
    k: int  # primal velocity
    k1: int  # dual velocity
    k2: int  # primal pressure
    k3: int  # dual pressure

    @staticmethod
    def equal(k: int) -> "Orders":
        return Orders(k=k, k1=k, k2=k, k3=k)

    @staticmethod
    def minimal(k: int) -> "Orders":
        return Orders(k=k, k1=1, k2=max(k - 1, 1), k3=1)

    @staticmethod
    def from_preset(k: int, preset: str) -> "Orders":
        if preset == "equal":
            return Orders.equal(k)
        if preset == "minimal":
            return Orders.minimal(k)
        raise ValueError(f"unknown order preset {preset!r}")


@dataclass(frozen=True, eq=False)
class FeSystem:
    """The four discrete fields and their global block layout.

    Layout: [u | p | z | y | mean multiplier], where u is the primal
    velocity, p the primal (zero-mean) pressure, z the dual velocity
    with homogeneous Dirichlet conditions, y the dual pressure.
    """

    mesh: Mesh
    orders: Orders
    u_map: DofMap
    p_map: DofMap
    z_map: DofMap
    y_map: DofMap

    @property
    def offsets(self) -> tuple[int, int, int, int, int]:
        o_u = 0
        o_p = o_u + self.u_map.n_dofs
        o_z = o_p + self.p_map.n_dofs
        o_y = o_z + self.z_map.n_dofs
        o_mu = o_y + self.y_map.n_dofs
        return (o_u, o_p, o_z, o_y, o_mu)

    @property
    def n_dofs(self) -> int:
        return self.offsets[4] + 1

    @property
    def n_primal(self) -> int:
        return self.u_map.n_dofs + self.p_map.n_dofs

    @property
    def n_dual(self) -> int:
        return self.z_map.n_dofs + self.y_map.n_dofs

    def split(self, vec: np.ndarray):
        """Split a global vector into (u, p, z, y, multiplier)."""
        o = self.offsets
        return (
            vec[o[0]:o[1]],
            vec[o[1]:o[2]],
            vec[o[2]:o[3]],
            vec[o[3]:o[4]],
            float(vec[o[4]]),
        )


def build_fe_system(mesh: Mesh, orders: Orders) -> FeSystem:
    return FeSystem(
        mesh=mesh,
        orders=orders,
        u_map=build_dofmap(mesh, orders.k, n_comp=2),
        p_map=build_dofmap(mesh, orders.k2, n_comp=1, zero_mean=True),
        z_map=build_dofmap(mesh, orders.k1, n_comp=2, dirichlet=True),
        y_map=build_dofmap(mesh, orders.k3, n_comp=1),
    )
