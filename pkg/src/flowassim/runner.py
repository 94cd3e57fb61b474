"""High-level drivers: single solves and convergence sweeps."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .analysis import ConvergenceRecord, MeshRow, dual_seminorm, error_l2, residual_quantity
from .assembly import StabilizationParams, assemble_full
from .cases import NoiseRecipe, ProblemCase, case_by_id, make_noise
from .fem import Orders, build_fe_system
from .mesh import build_rect_mesh
from .solver import SolveReport, solve


@dataclass(frozen=True)
class RunConfig:
    case_id: str
    k: int = 1
    preset: str = "equal"  # equal | minimal
    n_divs: tuple[int, ...] = (8, 16, 32)
    params: StabilizationParams = field(default_factory=StabilizationParams)
    theta: int | None = None
    seed: int = 0
    pressure_data: bool = False
    nu: float | None = None

    def validate(self) -> None:
        from .cases import CASE_IDS

        if self.case_id not in CASE_IDS:
            raise ValueError(
                f"unknown case {self.case_id!r}; known: {', '.join(CASE_IDS)}"
            )
        if not 1 <= self.k <= 4:
            raise ValueError(f"k must be in [1, 4], got {self.k}")
        if self.preset not in ("equal", "minimal"):
            raise ValueError(f"preset must be 'equal' or 'minimal', got {self.preset!r}")
        if not self.n_divs or any(n < 1 for n in self.n_divs):
            raise ValueError("mesh list must contain positive subdivision counts")
        if self.theta is not None and not 0 <= self.theta <= max(self.k, 2):
            raise ValueError(
                f"theta must be in [0, max(k, 2)], got {self.theta}"
            )
        self.params.validate()

    def case(self) -> ProblemCase:
        return case_by_id(self.case_id, nu=self.nu)


@dataclass
class SingleResult:
    n_div: int
    h: float
    err_u_target: float
    err_u_global: float
    err_p: float
    residual_q: float
    dual_seminorm: float
    report: SolveReport
    seconds: float
    solution: np.ndarray
    fe: object

    def row(self) -> MeshRow:
        return MeshRow(
            n_div=self.n_div,
            h=self.h,
            err_u_target=self.err_u_target,
            err_u_global=self.err_u_global,
            err_p=self.err_p,
            residual_q=self.residual_q,
            dual_seminorm=self.dual_seminorm,
            solver_residual=self.report.residual,
            seconds=self.seconds,
        )


def run_single(config: RunConfig, n_div: int | None = None) -> SingleResult:
    config.validate()
    if n_div is None:
        if len(config.n_divs) != 1:
            raise ValueError("run_single needs exactly one mesh")
        n_div = config.n_divs[0]
    t0 = time.perf_counter()
    from .assembly import clear_caches

    clear_caches()
    case = config.case()
    mesh = build_rect_mesh(case.bounds, n_div)
    fe = build_fe_system(mesh, Orders.from_preset(config.k, config.preset))
    noise = None
    if config.theta is not None:
        noise = make_noise(case, mesh, fe, NoiseRecipe(config.theta, config.seed))
    system = assemble_full(
        mesh, fe, case, config.params, pressure_data=config.pressure_data, noise=noise
    )
    x, report = solve(system)
    u, p, _, _, _ = fe.split(x)

    err_b = error_l2(mesh, fe, fe.u_map, u, case.velocity, region=case.target)
    err_o = error_l2(mesh, fe, fe.u_map, u, case.velocity)
    err_p = error_l2(mesh, fe, fe.p_map, p, case.pressure)
    res_q = residual_quantity(mesh, fe, u, case, config.params)
    return SingleResult(
        n_div=n_div,
        h=mesh.h,
        err_u_target=err_b,
        err_u_global=err_o,
        err_p=err_p,
        residual_q=res_q,
        dual_seminorm=dual_seminorm(system, x),
        report=report,
        seconds=time.perf_counter() - t0,
        solution=x,
        fe=fe,
    )


def run_convergence(config: RunConfig) -> ConvergenceRecord:
    config.validate()
    if len(config.n_divs) < 2:
        raise ValueError("convergence run needs at least two meshes")
    record = ConvergenceRecord(config=_config_dict(config))
    for n in config.n_divs:
        result = run_single(config, n_div=n)
        record.rows.append(result.row())
    return record


def _config_dict(config: RunConfig) -> dict:
    p = config.params
    return {
        "case": config.case_id,
        "k": config.k,
        "preset": config.preset,
        "n_divs": list(config.n_divs),
        "theta": config.theta,
        "seed": config.seed,
        "pressure_data": config.pressure_data,
        "nu": config.nu,
        "params": {
            "alpha": p.alpha,
            "gamma_u": p.gamma_u,
            "gamma_div": p.gamma_div,
            "gamma_gls": p.gamma_gls,
            "gamma_u_star": p.gamma_u_star,
            "gamma_p_star": p.gamma_p_star,
            "gamma_m": p.gamma_m,
            "gamma_p_data": p.gamma_p_data,
        },
    }
