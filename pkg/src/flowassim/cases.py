"""The benchmark problems: analytic flows, geometries and noise recipes.

Each case carries the exact fields with enough derivatives to evaluate
the strong operator (U.grad)u + (u.grad)U - nu*Lap(u) + grad(p), and is
self-checked against its source term at registration.

Gradient convention: grad[..., c, d] = d u_c / d x_d.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fem import FeSystem
from .mesh import Mesh, Region, complement, rectangle


@dataclass(frozen=True)
class ProblemCase:
    name: str
    bounds: tuple[float, float, float, float]
    nu: float
    omega_m: Region
    target: Region
    velocity: callable  # (x, y) -> (..., 2)
    velocity_grad: callable  # (x, y) -> (..., 2, 2)
    velocity_laplacian: callable  # (x, y) -> (..., 2)
    pressure: callable  # (x, y) -> (...)
    pressure_grad: callable  # (x, y) -> (..., 2)
    base_flow: callable  # (x, y) -> (..., 2)
    base_flow_grad: callable  # (x, y) -> (..., 2, 2)
    source: callable  # (x, y) -> (..., 2)

    def strong_operator(self, x, y):
        """(U.grad)u + (u.grad)U - nu*Lap(u) + grad(p) at the points."""
        u = self.velocity(x, y)
        gu = self.velocity_grad(x, y)
        U = self.base_flow(x, y)
        gU = self.base_flow_grad(x, y)
        conv = np.einsum("...cd,...d->...c", gu, U)
        conv += np.einsum("...cd,...d->...c", gU, u)
        return conv - self.nu * self.velocity_laplacian(x, y) + self.pressure_grad(x, y)

    def divergence(self, x, y):
        gu = self.velocity_grad(x, y)
        return gu[..., 0, 0] + gu[..., 1, 1]


class CaseConsistencyError(ValueError):
    pass


def _self_check(case: ProblemCase, n_samples: int = 50, tol: float = 1e-10) -> None:
    rng = np.random.default_rng(1234)
    x0, x1, y0, y1 = case.bounds
    x = rng.uniform(x0, x1, n_samples)
    y = rng.uniform(y0, y1, n_samples)
    res = case.strong_operator(x, y) - case.source(x, y)
    div = case.divergence(x, y)
    if np.abs(res).max() > tol:
        raise CaseConsistencyError(
            f"{case.name}: strong residual {np.abs(res).max():.2e} exceeds {tol:.0e}"
        )
    if np.abs(div).max() > tol:
        raise CaseConsistencyError(
            f"{case.name}: divergence {np.abs(div).max():.2e} exceeds {tol:.0e}"
        )


def _zeros_vec(x, y):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape + (2,))


def _zeros_mat(x, y):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape + (2, 2))


def stokes_case(geometry: str = "convex") -> ProblemCase:
    """Homogeneous Stokes continuation problem on the unit square.

    u = (20 x y^3, 5 x^4 - 5 y^4), p = 60 x^2 y - 20 y^3 - 5,
    with U = 0, nu = 1, f = 0.
    """
    if geometry == "convex":
        omega_m = complement(0.1, 0.9, 0.25, 1.0)
        target = complement(0.1, 0.9, 0.95, 1.0)
    elif geometry == "nonconvex":
        omega_m = rectangle(0.25, 0.75, 0.05, 0.5)
        target = rectangle(0.125, 0.875, 0.05, 0.95)
    else:
        raise ValueError(f"unknown geometry {geometry!r}")

    def velocity(x, y):
        x, y = np.asarray(x), np.asarray(y)
        return np.stack([20.0 * x * y**3, 5.0 * x**4 - 5.0 * y**4], axis=-1)

    def velocity_grad(x, y):
        x, y = np.asarray(x), np.asarray(y)
        g = np.empty(np.broadcast(x, y).shape + (2, 2))
        g[..., 0, 0] = 20.0 * y**3
        g[..., 0, 1] = 60.0 * x * y**2
        g[..., 1, 0] = 20.0 * x**3
        g[..., 1, 1] = -20.0 * y**3
        return g

    def velocity_laplacian(x, y):
        x, y = np.asarray(x), np.asarray(y)
        return np.stack([120.0 * x * y, 60.0 * x**2 - 60.0 * y**2], axis=-1)

    def pressure(x, y):
        x, y = np.asarray(x), np.asarray(y)
        return 60.0 * x**2 * y - 20.0 * y**3 - 5.0

    def pressure_grad(x, y):
        x, y = np.asarray(x), np.asarray(y)
        return np.stack([120.0 * x * y, 60.0 * x**2 - 60.0 * y**2], axis=-1)

    case = ProblemCase(
        name=f"stokes-{geometry}",
        bounds=(0.0, 1.0, 0.0, 1.0),
        nu=1.0,
        omega_m=omega_m,
        target=target,
        velocity=velocity,
        velocity_grad=velocity_grad,
        velocity_laplacian=velocity_laplacian,
        pressure=pressure,
        pressure_grad=pressure_grad,
        base_flow=_zeros_vec,
        base_flow_grad=_zeros_mat,
        source=_zeros_vec,
    )
    _self_check(case)
    return case


def poiseuille_case(nu: float = 1.0) -> ProblemCase:
    """Plane Poiseuille channel flow on the unit square, u = U.

    Channel centered at y = 1/2 with half-width H = 1/2 and unit
    centerline amplitude: u = (H^2 - (y - 1/2)^2, 0), p = (1/2 - x) 2 nu.
    The parallel flow makes both convective terms vanish and f = 0 for
    every nu >= 0, including the inviscid limit nu = 0.
    """
    if nu < 0:
        raise ValueError(f"nu must be >= 0, got {nu}")
    H = 0.5

    def velocity(x, y):
        x, y = np.asarray(x), np.asarray(y)
        u = np.zeros(np.broadcast(x, y).shape + (2,))
        u[..., 0] = H**2 - (y - 0.5) ** 2
        return u

    def velocity_grad(x, y):
        x, y = np.asarray(x), np.asarray(y)
        g = np.zeros(np.broadcast(x, y).shape + (2, 2))
        g[..., 0, 1] = -2.0 * (y - 0.5)
        return g

    def velocity_laplacian(x, y):
        x, y = np.asarray(x), np.asarray(y)
        lap = np.zeros(np.broadcast(x, y).shape + (2,))
        lap[..., 0] = -2.0
        return lap

    def pressure(x, y):
        x, y = np.asarray(x), np.asarray(y)
        return (0.5 - x) * 2.0 * nu + 0.0 * y

    def pressure_grad(x, y):
        x, y = np.asarray(x), np.asarray(y)
        g = np.zeros(np.broadcast(x, y).shape + (2,))
        g[..., 0] = -2.0 * nu
        return g

    case = ProblemCase(
        name="poiseuille",
        bounds=(0.0, 1.0, 0.0, 1.0),
        nu=nu,
        omega_m=rectangle(0.0, 0.2, 0.2, 0.8),
        target=rectangle(0.2, 0.8, 0.45, 0.55),
        velocity=velocity,
        velocity_grad=velocity_grad,
        velocity_laplacian=velocity_laplacian,
        pressure=pressure,
        pressure_grad=pressure_grad,
        base_flow=velocity,
        base_flow_grad=velocity_grad,
        source=_zeros_vec,
    )
    _self_check(case)
    return case


CASE_IDS = ("stokes-convex", "stokes-nonconvex", "poiseuille")


def case_by_id(case_id: str, nu: float | None = None) -> ProblemCase:
    if case_id == "stokes-convex":
        case = stokes_case("convex")
    elif case_id == "stokes-nonconvex":
        case = stokes_case("nonconvex")
    elif case_id == "poiseuille":
        return poiseuille_case(1.0 if nu is None else nu)
    else:
        raise ValueError(f"unknown case {case_id!r}; known: {', '.join(CASE_IDS)}")
    if nu is not None and nu != case.nu:
        raise ValueError(f"{case_id} is defined with nu = {case.nu}")
    return case


def region_rectangles(
    region: Region, bounds: tuple[float, float, float, float]
) -> list[tuple[float, float, float, float]]:
    """Decompose a region into disjoint closed rectangles within bounds."""
    from .mesh import RegionKind

    if region.kind is RegionKind.RECTANGLE:
        return [region.rects[0]]
    if region.kind is RegionKind.UNION:
        return list(region.rects)
    a, b, c, d = region.rects[0]
    x0, x1, y0, y1 = bounds
    parts = [
        (x0, a, y0, y1),
        (b, x1, y0, y1),
        (max(a, x0), min(b, x1), y0, c),
        (max(a, x0), min(b, x1), d, y1),
    ]
    return [(u0, u1, v0, v1) for u0, u1, v0, v1 in parts if u0 < u1 and v0 < v1]


def exact_region_norm(case: ProblemCase, region: Region) -> float:
    """Mesh-independent L2 norm of the exact velocity over a region.

    Tensor Gauss quadrature on the rectangle decomposition; exact for the
    polynomial flows used here. Keeps noise scaling ratios exact across
    refinements.
    """
    xg, wg = np.polynomial.legendre.leggauss(12)
    total = 0.0
    for x0, x1, y0, y1 in region_rectangles(region, case.bounds):
        xs = 0.5 * (x1 - x0) * (xg + 1.0) + x0
        ys = 0.5 * (y1 - y0) * (xg + 1.0) + y0
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        W = np.outer(wg, wg) * 0.25 * (x1 - x0) * (y1 - y0)
        u = case.velocity(X, Y)
        total += (W * (u**2).sum(axis=-1)).sum()
    return float(np.sqrt(total))


@dataclass(frozen=True)
class NoiseRecipe:
    """Relative measurement noise of magnitude h^(k - theta) on omega_M."""

    theta: int
    seed: int


def make_noise(
    case: ProblemCase, mesh: Mesh, fe: FeSystem, recipe: NoiseRecipe
) -> np.ndarray:
    """Random nodal perturbation of the measured velocity.

    Uniform [-1, 1] values on the primal-velocity dofs whose node lies
    in omega_M, zero elsewhere, rescaled so the L2(omega_M) norm equals
    h^(k - theta) times the norm of the exact velocity there.
    """
    from .assembly import field_norm_l2  # local import to avoid a cycle

    k = fe.orders.k
    if recipe.theta < 0:
        raise ValueError(f"theta must be >= 0, got {recipe.theta}")
    # theta up to 2 is meaningful for every order (the divergence study
    # includes k = 1 with theta = 2); beyond that the data is pure noise.
    if recipe.theta > max(k, 2):
        raise ValueError(f"theta = {recipe.theta} exceeds max({k}, 2)")

    umap = fe.u_map
    rng = np.random.default_rng(recipe.seed)
    raw = rng.uniform(-1.0, 1.0, size=(umap.n_nodes, 2))
    inside = case.omega_m.contains(umap.nodes[:, 0], umap.nodes[:, 1])
    raw[~inside] = 0.0
    delta = raw.reshape(-1)

    raw_norm = field_norm_l2(mesh, fe, umap, delta, region=case.omega_m)
    if raw_norm == 0.0:
        raise ValueError("no velocity node lies inside omega_M")
    target = mesh.h ** (k - recipe.theta) * exact_region_norm(case, case.omega_m)
    return delta * (target / raw_norm)
