"""Self-contained property battery: structural identities of the method.

Each check prints one pass/fail line; `run_battery` returns True iff
every check passes. The same checks back the unit test suite.
"""

from __future__ import annotations

import numpy as np

from .assembly import StabilizationParams, assemble_full
from .cases import poiseuille_case, stokes_case
from .fem import Orders, build_fe_system, interpolate, triangle_rule
from .mesh import build_unit_square_mesh


def check_matrix_symmetry(n_div: int = 4, orders=(1, 2, 3)) -> list[tuple[str, bool]]:
    results = []
    case = stokes_case("convex")
    mesh = build_unit_square_mesh(n_div)
    for k in orders:
        fe = build_fe_system(mesh, Orders.equal(k))
        system = assemble_full(mesh, fe, case)
        G = system.matrix
        asym = abs(G - G.T).max()
        scale = abs(G).max()
        ok = asym <= 1e-12 * scale
        results.append((f"matrix symmetry (k={k}): {asym / scale:.2e}", ok))
    return results


def check_coercivity_identity(
    n_div: int = 4, orders=(1, 2, 3), n_samples: int = 20, seed: int = 7
) -> list[tuple[str, bool]]:
    """G((U,Z),(U,-Z)) equals the squared stability norm
    S_h(U,U) + gamma_M xi^-1 |u|^2_omega + S*(Z,Z)."""
    results = []
    case = stokes_case("convex")
    mesh = build_unit_square_mesh(n_div)
    rng = np.random.default_rng(seed)
    for k in orders:
        fe = build_fe_system(mesh, Orders.equal(k))
        system = assemble_full(mesh, fe, case)
        np_, nd = fe.n_primal, fe.n_dual
        worst = 0.0
        for _ in range(n_samples):
            U = rng.standard_normal(np_)
            Z = rng.standard_normal(nd)
            trial = np.concatenate([U, Z, [0.0]])
            test = np.concatenate([U, -Z, [0.0]])
            quad = test @ (system.matrix @ trial)
            norm2 = U @ (system.primal_matrix @ U) + Z @ (system.dual_matrix @ Z)
            worst = max(worst, abs(quad - norm2) / abs(norm2))
        ok = worst <= 1e-10
        results.append((f"stability-norm identity (k={k}): {worst:.2e}", ok))
    return results


def check_norm_positivity(
    n_div: int = 4, k: int = 2, n_samples: int = 20, seed: int = 11
) -> list[tuple[str, bool]]:
    case = stokes_case("convex")
    mesh = build_unit_square_mesh(n_div)
    fe = build_fe_system(mesh, Orders.equal(k))
    system = assemble_full(mesh, fe, case)
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(n_samples):
        U = rng.standard_normal(fe.n_primal)
        Z = rng.standard_normal(fe.n_dual)
        norm2 = U @ (system.primal_matrix @ U) + Z @ (system.dual_matrix @ Z)
        ok &= norm2 > 0.0
    return [(f"stability norm positive on random vectors (k={k})", bool(ok))]


def check_quadrature_exactness(max_degree: int = 10) -> list[tuple[str, bool]]:
    from math import factorial

    worst = 0.0
    for degree in range(1, max_degree + 1):
        rule = triangle_rule(degree)
        x, y = rule.points[:, 0], rule.points[:, 1]
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                approx = (rule.weights * x**a * y**b).sum()
                exact = factorial(a) * factorial(b) / factorial(a + b + 2)
                worst = max(worst, abs(approx - exact) / exact)
    return [(f"triangle quadrature monomial exactness: {worst:.2e}", worst <= 1e-12)]


def check_case_consistency() -> list[tuple[str, bool]]:
    results = []
    for case in (
        stokes_case("convex"),
        stokes_case("nonconvex"),
        poiseuille_case(1.0),
        poiseuille_case(1e-2),
        poiseuille_case(1e-4),
        poiseuille_case(0.0),
    ):
        rng = np.random.default_rng(3)
        x = rng.uniform(0, 1, 50)
        y = rng.uniform(0, 1, 50)
        res = np.abs(case.strong_operator(x, y) - case.source(x, y)).max()
        div = np.abs(case.divergence(x, y)).max()
        ok = res <= 1e-10 and div <= 1e-10
        results.append(
            (f"case consistency {case.name} (nu={case.nu:g}): {max(res, div):.2e}", ok)
        )
    return results


def check_jump_vanishes(n_div: int = 4, orders=(1, 2, 3)) -> list[tuple[str, bool]]:
    """The gradient-jump seminorm of a globally polynomial interpolant
    of degree <= k is zero (the field is C1 across faces)."""
    from .assembly import jump_seminorm

    results = []
    mesh = build_unit_square_mesh(n_div)
    for k in orders:
        fe = build_fe_system(mesh, Orders.equal(k))

        def poly(x, y, k=k):
            return np.stack(
                [(x + 0.5 * y) ** k, (0.3 * x - y) ** k + x], axis=-1
            )

        coeffs = interpolate(fe.u_map, poly)
        s = jump_seminorm(mesh, fe, coeffs, 1.0)
        ok = s <= 1e-11
        results.append((f"jump term vanishes on P{k} polynomial: {s:.2e}", ok))
    return results


def run_battery(verbose: bool = True) -> bool:
    checks = (
        check_matrix_symmetry()
        + check_coercivity_identity()
        + check_norm_positivity()
        + check_quadrature_exactness()
        + check_case_consistency()
        + check_jump_vanishes()
    )
    all_ok = True
    for label, ok in checks:
        all_ok &= ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {label}")
    return all_ok
