"""Error measures, stabilization residual and empirical convergence orders."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    SaddleSystem,
    StabilizationParams,
    field_norm_l2,
    jump_seminorm,
)
from .cases import ProblemCase
from .fem import FeSystem, interpolate
from .mesh import Mesh, Region


def error_l2(
    mesh: Mesh,
    fe: FeSystem,
    dofmap,
    coeffs: np.ndarray,
    exact,
    region: Region | None = None,
) -> float:
    """Relative L2 error over a region, via quadrature-point membership.

    Falls back to the absolute error when the exact field vanishes on
    the region (e.g. the zero-viscosity channel pressure).
    """
    num = field_norm_l2(mesh, fe, dofmap, coeffs, region=region, exact=exact)
    den = field_norm_l2(mesh, fe, dofmap, None, region=region, exact=exact)
    return num / den if den > 0.0 else num


def residual_quantity(
    mesh: Mesh,
    fe: FeSystem,
    u_coeffs: np.ndarray,
    case: ProblemCase,
    params: StabilizationParams,
) -> float:
    """Face-jump seminorm of u_h minus the interpolated exact velocity.

    Reported with the h_F weight only (no convection scaling), matching
    the plotted convergence-history quantity.
    """
    u_interp = interpolate(fe.u_map, case.velocity)
    return jump_seminorm(mesh, fe, u_coeffs - u_interp, params.gamma_u)


def eoc(errors, hs) -> list[float]:
    """Pairwise experimental orders ln(e_i/e_{i+1}) / ln(h_i/h_{i+1})."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if errors.shape != hs.shape or errors.size < 2:
        raise ValueError("need matching sequences of length >= 2")
    if (errors <= 0).any() or (hs <= 0).any():
        raise ValueError("errors and mesh sizes must be positive")
    return list(np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:]))


CSV_HEADER = [
    "n_div",
    "h",
    "err_uB",
    "err_uOmega",
    "err_p",
    "residual_q",
    "eoc_uB",
    "solver_res",
    "seconds",
]


@dataclass
class MeshRow:
    n_div: int
    h: float
    err_u_target: float
    err_u_global: float
    err_p: float
    residual_q: float
    dual_seminorm: float
    solver_residual: float
    seconds: float


@dataclass
class ConvergenceRecord:
    """Per-mesh errors and derived empirical orders for one configuration."""

    config: dict
    rows: list[MeshRow] = field(default_factory=list)

    def eoc_target(self) -> list[float]:
        if len(self.rows) < 2:
            return []
        return eoc([r.err_u_target for r in self.rows], [r.h for r in self.rows])

    def eoc_residual(self) -> list[float]:
        if len(self.rows) < 2:
            return []
        return eoc([r.residual_q for r in self.rows], [r.h for r in self.rows])

    def final_eoc(self) -> float:
        return self.eoc_target()[-1]

    def final_error(self) -> float:
        return self.rows[-1].err_u_target

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            orders = [""] + [f"{e:.6f}" for e in self.eoc_target()]
            for row, o in zip(self.rows, orders):
                w.writerow(
                    [
                        row.n_div,
                        f"{row.h:.12g}",
                        f"{row.err_u_target:.12g}",
                        f"{row.err_u_global:.12g}",
                        f"{row.err_p:.12g}",
                        f"{row.residual_q:.12g}",
                        o,
                        f"{row.solver_residual:.6g}",
                        f"{row.seconds:.4f}",
                    ]
                )

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "rows": [
                {
                    "n_div": r.n_div,
                    "h": r.h,
                    "err_uB": r.err_u_target,
                    "err_uOmega": r.err_u_global,
                    "err_p": r.err_p,
                    "residual_q": r.residual_q,
                    "dual_seminorm": r.dual_seminorm,
                    "solver_res": r.solver_residual,
                    "seconds": r.seconds,
                }
                for r in self.rows
            ],
            "eoc_uB": self.eoc_target(),
            "eoc_residual": self.eoc_residual(),
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def dual_seminorm(system: SaddleSystem, solution: np.ndarray) -> float:
    """S*(Z,Z)^(1/2) of the solved dual fields."""
    fe = system.fe
    z = solution[fe.n_primal : fe.n_primal + fe.n_dual]
    return float(np.sqrt(max(z @ (system.dual_matrix @ z), 0.0)))
