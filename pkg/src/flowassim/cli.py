"""Command-line driver: single solves, convergence sweeps, verification.

Configuration comes from an optional flat key=value file plus flags;
flags win. Example:

    flowassim solve --case stokes-convex --k 2 --n 16
    flowassim converge --case stokes-convex --k 3 --n 8,16,32 --out results/
    flowassim verify
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .assembly import StabilizationParams
from .runner import RunConfig, run_convergence, run_single
from .verify import run_battery

PARAM_KEYS = {
    "alpha": "alpha",
    "gamma-u": "gamma_u",
    "gamma-div": "gamma_div",
    "gamma-gls": "gamma_gls",
    "gamma-u-star": "gamma_u_star",
    "gamma-p-star": "gamma_p_star",
    "gamma-M": "gamma_m",
    "gamma-P": "gamma_p_data",
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key=value config file")
    p.add_argument("--case", help="stokes-convex | stokes-nonconvex | poiseuille")
    p.add_argument("--k", type=int, help="polynomial order of the primal velocity")
    p.add_argument("--preset", choices=("equal", "minimal"), help="dual-order preset")
    p.add_argument("--n", help="comma-separated mesh subdivision counts")
    p.add_argument("--theta", type=int, help="noise exponent (noise ~ h^(k-theta))")
    p.add_argument("--seed", type=int, help="noise seed")
    p.add_argument("--nu", type=float, help="viscosity override (poiseuille)")
    p.add_argument(
        "--pressure-data",
        action="store_true",
        default=None,
        help="augment with global pressure measurements",
    )
    p.add_argument("--out", type=Path, help="output directory (default: cwd)")
    for flag in PARAM_KEYS:
        p.add_argument(f"--{flag}", type=float, dest=flag.replace("-", "_"))


def _read_config_file(path: Path) -> dict:
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SystemExit(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    return values


def _build_config(args) -> RunConfig:
    cfg = _read_config_file(args.config) if args.config else {}

    def pick(flag, key, cast, default=None):
        v = getattr(args, flag.replace("-", "_"), None)
        if v is not None:
            return v
        if key in cfg:
            return cast(cfg[key])
        return default

    params = StabilizationParams(
        **{
            attr: pick(flag, flag, float, getattr(StabilizationParams(), attr))
            for flag, attr in PARAM_KEYS.items()
        }
    )
    n_raw = pick("n", "n", str)
    if n_raw is None:
        raise SystemExit("missing mesh list: pass --n or put n= in the config file")
    n_divs = tuple(int(s) for s in str(n_raw).split(","))
    case_id = pick("case", "case", str)
    if case_id is None:
        raise SystemExit("missing case id: pass --case or put case= in the config file")
    pressure = pick("pressure-data", "pressure-data", lambda s: s.lower() == "true", False)
    config = RunConfig(
        case_id=case_id,
        k=pick("k", "k", int, 1),
        preset=pick("preset", "preset", str, "equal"),
        n_divs=n_divs,
        params=params,
        theta=pick("theta", "theta", int),
        seed=pick("seed", "seed", int, 0),
        pressure_data=bool(pressure),
        nu=pick("nu", "nu", float),
    )
    try:
        config.validate()
    except ValueError as exc:
        raise SystemExit(f"invalid configuration: {exc}")
    return config


def _stem(config: RunConfig) -> str:
    parts = [config.case_id, f"k{config.k}", config.preset]
    if config.theta is not None:
        parts.append(f"theta{config.theta}-seed{config.seed}")
    if config.pressure_data:
        parts.append("pdata")
    if config.nu is not None:
        parts.append(f"nu{config.nu:g}")
    return "-".join(parts)


def cmd_solve(args) -> int:
    config = _build_config(args)
    if len(config.n_divs) != 1:
        raise SystemExit("solve runs one mesh; pass a single --n value")
    result = run_single(config)
    out = args.out or Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    from .analysis import ConvergenceRecord

    record = ConvergenceRecord(config=_config_dict_for(config))
    record.rows.append(result.row())
    path = out / f"{_stem(config)}-n{result.n_div}.json"
    _write_single_json(record, path)
    print(
        f"{config.case_id} k={config.k} n={result.n_div}: "
        f"err_uB={result.err_u_target:.6g} err_p={result.err_p:.6g} "
        f"residual_q={result.residual_q:.6g} solver_res={result.report.residual:.2e}"
    )
    print(f"report written to {path}")
    return 0


def _config_dict_for(config):
    from .runner import _config_dict

    return _config_dict(config)


def _write_single_json(record, path):
    import json

    payload = record.to_dict()
    payload.pop("eoc_uB", None)
    payload.pop("eoc_residual", None)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_converge(args) -> int:
    config = _build_config(args)
    record = run_convergence(config)
    out = args.out or Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    stem = _stem(config)
    record.write_csv(out / f"{stem}.csv")
    record.write_json(out / f"{stem}.json")
    orders = ", ".join(f"{e:.3f}" for e in record.eoc_target())
    print(f"{stem}: final err_uB={record.final_error():.6g} eoc=[{orders}]")
    print(f"reports written to {out / (stem + '.csv')} and {out / (stem + '.json')}")
    return 0


def cmd_verify(args) -> int:
    return 0 if run_battery(verbose=True) else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="flowassim",
        description="Stabilized FEM reconstruction of flow from interior data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="single solve on one mesh")
    _add_run_flags(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_conv = sub.add_parser("converge", help="convergence sweep over a mesh list")
    _add_run_flags(p_conv)
    p_conv.set_defaults(func=cmd_converge)

    p_verify = sub.add_parser("verify", help="run the property-test battery")
    p_verify.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
