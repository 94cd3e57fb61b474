"""Error measures, convergence orders and report serialization."""

import csv

import numpy as np
import pytest

from flowassim.analysis import (
    CSV_HEADER,
    ConvergenceRecord,
    MeshRow,
    eoc,
    error_l2,
    residual_quantity,
)
from flowassim.assembly import StabilizationParams
from flowassim.cases import stokes_case
from flowassim.fem import Orders, build_fe_system, interpolate
from flowassim.mesh import build_unit_square_mesh, rectangle


def test_eoc_examples():
    assert eoc([0.1, 0.025], [0.2, 0.1]) == pytest.approx([2.0])
    assert eoc([0.5, 0.5], [0.2, 0.1]) == pytest.approx([0.0])
    assert eoc([1.0, 1 / 8], [0.2, 0.1]) == pytest.approx([3.0])


def test_eoc_validation():
    with pytest.raises(ValueError):
        eoc([0.1], [0.2])
    with pytest.raises(ValueError):
        eoc([0.1, -0.1], [0.2, 0.1])
    with pytest.raises(ValueError):
        eoc([0.1, 0.05], [0.2, 0.1, 0.05])


def test_error_interpolant_exact():
    case = stokes_case("convex")
    mesh = build_unit_square_mesh(4)
    fe = build_fe_system(mesh, Orders.equal(2))

    def quadratic(x, y):
        return np.stack([x * y, x**2 - y], axis=-1)

    coeffs = interpolate(fe.u_map, quadratic)
    assert error_l2(mesh, fe, fe.u_map, coeffs, quadratic) <= 1e-11


def test_error_zero_field_is_one():
    case = stokes_case("convex")
    mesh = build_unit_square_mesh(4)
    fe = build_fe_system(mesh, Orders.equal(1))
    coeffs = np.zeros(fe.u_map.n_dofs)
    err = error_l2(mesh, fe, fe.u_map, coeffs, case.velocity)
    assert abs(err - 1.0) <= 1e-12


def test_error_restricted_region():
    case = stokes_case("convex")
    mesh = build_unit_square_mesh(8)
    fe = build_fe_system(mesh, Orders.equal(1))
    coeffs = interpolate(fe.u_map, case.velocity)
    full = error_l2(mesh, fe, fe.u_map, coeffs, case.velocity)
    part = error_l2(
        mesh, fe, fe.u_map, coeffs, case.velocity, region=rectangle(0, 0.5, 0, 0.5)
    )
    assert full > 0 and part > 0


def test_residual_quantity_zero_on_interpolant():
    case = stokes_case("convex")
    mesh = build_unit_square_mesh(4)
    fe = build_fe_system(mesh, Orders.equal(2))
    coeffs = interpolate(fe.u_map, case.velocity)
    params = StabilizationParams()
    assert residual_quantity(mesh, fe, coeffs, case, params) <= 1e-11


def test_residual_quantity_polynomial_invariance():
    """Adding a globally smooth P_k field to u_h leaves the jump unchanged."""
    case = stokes_case("convex")
    mesh = build_unit_square_mesh(4)
    fe = build_fe_system(mesh, Orders.equal(2))
    params = StabilizationParams()
    rng = np.random.default_rng(0)
    coeffs = rng.standard_normal(fe.u_map.n_dofs)

    def smooth(x, y):
        return np.stack([x**2 - 3 * x * y, y**2 + x], axis=-1)

    shift = interpolate(fe.u_map, smooth)
    base = residual_quantity(mesh, fe, coeffs, case, params)
    shifted = residual_quantity(mesh, fe, coeffs + shift, case, params)
    assert abs(base - shifted) <= 1e-9 * max(base, 1.0)


def _record():
    record = ConvergenceRecord(config={"case": "stokes-convex"})
    for n, e in ((8, 0.1), (16, 0.025)):
        record.rows.append(
            MeshRow(
                n_div=n,
                h=np.sqrt(2) / n,
                err_u_target=e,
                err_u_global=2 * e,
                err_p=3 * e,
                residual_q=e / 2,
                dual_seminorm=e / 3,
                solver_residual=1e-14,
                seconds=0.5,
            )
        )
    return record


def test_record_eoc():
    record = _record()
    assert record.eoc_target() == pytest.approx([2.0])
    assert record.final_eoc() == pytest.approx(2.0)
    assert record.final_error() == pytest.approx(0.025)


def test_csv_header_and_rows(tmp_path):
    record = _record()
    path = tmp_path / "out.csv"
    record.write_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_HEADER
    assert len(rows) == 3
    assert rows[1][0] == "8"
    assert rows[1][6] == ""  # no order for the first mesh
    assert float(rows[2][6]) == pytest.approx(2.0)


def test_json_report(tmp_path):
    import json

    record = _record()
    path = tmp_path / "out.json"
    record.write_json(path)
    payload = json.loads(path.read_text())
    assert payload["config"]["case"] == "stokes-convex"
    assert len(payload["rows"]) == 2
    assert payload["eoc_uB"] == pytest.approx([2.0])
    assert {"n_div", "h", "err_uB", "err_uOmega", "err_p", "residual_q"} <= set(
        payload["rows"][0]
    )
