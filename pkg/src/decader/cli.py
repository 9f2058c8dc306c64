"""Deterministic command line front end.

Every analysis runs as a reproducible job writing data files (CSV, 17
significant digits, '.' decimal separator, newline line endings) plus a
metadata JSON echoing the full resolved configuration, the library version
and the wall time.  Identical configurations and seeds give byte-identical
data files; only the wall-time entry of the metadata may differ.

Commands: tableau | stability | vonneumann | convergence | solve.
Options may come from an optional JSON config file (--config); explicit
flags override file entries, file entries override built-in defaults.
Exit codes: 0 success, 2 configuration errors, 3 numerical failures (a
diagnostic JSON is written next to the other outputs).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .integrators import SplitLinearODE, convergence_study, solve_ivp
from .pdesim import (run_convergence, run_single, sine_diffusion_problem,
                     sine_dispersion_problem, write_convergence_csv)
from .stability import d0_region, d1_region, minion_region, scan_region
from .tableaux import (ADER, FAMILIES, FINAL_STATE_UPDATE, FINAL_UPDATES, IMEX,
                       MODES, QUADRATURE_UPDATE, SDEC, IMEXTableau, MethodSpec,
                       build_tableau, reduce_tableau, tableau_dict)
from .vonneumann import (DIFFUSION_8_TABLE_VARIANT, ScanSpec, borders_to_dict,
                         extract_borders, refine_borders, scan, write_map_csv)

NODE_ALIASES = {
    "eq": "equispaced", "equispaced": "equispaced",
    "glb": "gauss-lobatto", "gauss-lobatto": "gauss-lobatto",
    "glg": "gauss-legendre", "gauss-legendre": "gauss-legendre",
}
PLANE_ALIASES = {
    "CE": "C-E", "CD": "C-D", "CP": "C-P", "CEP": "C-EP",
    "C-E": "C-E", "C-D": "C-D", "C-P": "C-P", "C-EP": "C-EP",
}


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _resolve_nodes(name: str) -> str:
    try:
        return NODE_ALIASES[name]
    except KeyError:
        raise ConfigError(f"unknown node kind {name!r}; choose from "
                          f"{sorted(set(NODE_ALIASES))}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in str(text).replace(" ", "").split(",") if p]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(p) for p in str(text).replace(" ", "").split(",") if p]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def write_metadata(out: Path, command: str, cfg: dict, extra: dict,
                   wall: float) -> None:
    doc = {
        "command": command,
        "config": {k: _jsonable(v) for k, v in sorted(cfg.items())},
        "version": __version__,
        "wall_time_s": round(wall, 3),
    }
    doc.update(extra)
    with open(out / "metadata.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def write_pgm_mask(mask: np.ndarray, path: Path) -> None:
    """Binary stability mask as ASCII PGM (row 0 of the array first)."""
    h, w = mask.shape
    lines = ["P2", f"{w} {h}", "255"]
    for row in mask:
        lines.append(" ".join("255" if v else "0" for v in row))
    path.write_text("\n".join(lines) + "\n")


def _grid_csv(grid, path: Path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im", "absR"])
        for i, y in enumerate(grid.im):
            for j, x in enumerate(grid.re):
                w.writerow([_fmt(x), _fmt(y), _fmt(grid.values[i, j])])


# ---------------------------------------------------------------- commands

def _method_spec(cfg: dict) -> MethodSpec:
    return MethodSpec(family=cfg["family"], kind=_resolve_nodes(cfg["nodes"]),
                      order=int(cfg["order"]), mode=cfg["mode"],
                      subintervals=(int(cfg["subintervals"])
                                    if cfg.get("subintervals") is not None else None),
                      final_update=cfg.get("final_update") or QUADRATURE_UPDATE)


def cmd_tableau(cfg: dict, out: Path) -> dict:
    spec = _method_spec(cfg)
    t = build_tableau(spec, quadrature=cfg["quadrature"])
    if cfg["reduce"]:
        t = reduce_tableau(t)
    doc = tableau_dict(t, spec)
    with open(out / "tableau.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")

    import csv
    with open(out / "tableau.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        parts = ([("implicit", t.implicit), ("explicit", t.explicit)]
                 if isinstance(t, IMEXTableau) else [(spec.mode, t)])
        w.writerow(["part", "row", "c", "entries"])
        for name, tab in parts:
            for i in range(tab.Z):
                w.writerow([name, i, _fmt(tab.c[i])] + [_fmt(v) for v in tab.A[i]])
            w.writerow([name, "b", ""] + [_fmt(v) for v in tab.b])
    return {"stages": doc["Z"]}


_STABILITY_BOUNDS = {
    "s": (-8.0, 4.0, -8.0, 8.0),
    "minion": (-50.0, 0.0, 0.0, 50.0),
    "d0": (-5.0, 1.0, -4.0, 4.0),
    "d1": (-20.0, 2.0, -15.0, 15.0),
}


def cmd_stability(cfg: dict, out: Path) -> dict:
    spec = _method_spec(cfg)
    t = build_tableau(spec, quadrature=cfg["quadrature"])
    kind = cfg["kind"]
    if kind not in _STABILITY_BOUNDS:
        raise ConfigError(f"unknown region kind {kind!r}")
    defaults = _STABILITY_BOUNDS[kind]
    bounds = tuple(cfg[k] if cfg[k] is not None else defaults[i]
                   for i, k in enumerate(("re_min", "re_max", "im_min", "im_max")))
    res, off = int(cfg["resolution"]), float(cfg["offset"])
    extra: dict = {"kind": kind, "bounds": list(bounds)}
    if kind == "s":
        grid = scan_region(t, bounds, resolution=res, offset=off)
    else:
        if not isinstance(t, IMEXTableau):
            raise ConfigError(f"region kind {kind!r} needs an IMEX tableau")
        if kind == "minion":
            grid, alpha = minion_region(t, real_range=bounds[:2],
                                        imag_range=bounds[2:],
                                        resolution=res, offset=off)
            extra["alpha_degrees"] = alpha
        elif kind == "d0":
            grid = d0_region(t, bounds, resolution=res, offset=off)
        else:
            grid = d1_region(t, bounds, resolution=res, offset=off)
    stable = grid.stable
    extra["stable_points"] = int(stable.sum())
    extra["total_points"] = int(stable.size)
    extra["empty"] = bool(stable.sum() == 0)
    _grid_csv(grid, out / "region.csv")
    if cfg["pgm"]:
        write_pgm_mask(stable, out / "mask.pgm")
    return extra


def cmd_vonneumann(cfg: dict, out: Path) -> dict:
    plane = PLANE_ALIASES.get(str(cfg["plane"]).upper().replace("_", "-"))
    if plane is None:
        raise ConfigError(f"unknown plane {cfg['plane']!r}")
    order = int(cfg["order"])
    family = cfg["family"]
    dispersive = plane in ("C-P", "C-EP")
    adv = int(cfg["adv"]) if cfg["adv"] is not None else order
    if dispersive:
        op = int(cfg["disp"]) if cfg["disp"] is not None else min(7, order | 1)
        operator_stencil = None
    else:
        if cfg["diff"] is not None:
            op = int(cfg["diff"])
            operator_stencil = None
        else:
            op = 2 * ((order + 1) // 2)
            operator_stencil = DIFFUSION_8_TABLE_VARIANT if order >= 7 else None

    c_range = (float(cfg["cmin"]), float(cfg["cmax"]))
    second_range = None
    if cfg["smin"] is not None or cfg["smax"] is not None:
        if cfg["smin"] is None or cfg["smax"] is None:
            raise ConfigError("give both --smin and --smax or neither")
        second_range = (float(cfg["smin"]), float(cfg["smax"]))
    elif plane == "C-E":
        second_range = (1e-2, 1e4)

    subint = cfg["subintervals"]
    if subint is None and family == SDEC:
        subint = order - 1
    final = cfg["final_update"]
    if final is None:
        final = FINAL_STATE_UPDATE if family == ADER else QUADRATURE_UPDATE

    spec = ScanSpec(family=family, kind=_resolve_nodes(cfg["nodes"]),
                    order=order, adv_order=adv, op_order=op, plane=plane,
                    c_range=c_range, second_range=second_range,
                    resolution=int(cfg["resolution"]), n0=int(cfg["n0"]),
                    c_scale="linear" if cfg["linear_c"] else "log",
                    subintervals=int(subint) if subint is not None else None,
                    final_update=final, operator_stencil=operator_stencil)
    vmap = scan(spec)
    borders = refine_borders(vmap) if cfg["refine"] else extract_borders(vmap)
    write_map_csv(vmap, out / "map.csv")
    bd = borders_to_dict(vmap, borders)
    with open(out / "borders.json", "w") as fh:
        json.dump(bd, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if cfg["pgm"]:
        write_pgm_mask(vmap.stable, out / "mask.pgm")
    return {"borders": bd, "label": spec.label()}


def cmd_convergence(cfg: dict, out: Path) -> dict:
    kind = _resolve_nodes(cfg["nodes"])
    orders = _int_list(cfg["orders"])
    if cfg["type"] == "pde":
        table = run_convergence(cfg["family"], kind=kind, orders=orders,
                                j_values=_int_list(cfg["j_values"]),
                                C=float(cfg["cfl"]), E=float(cfg["ratio"]),
                                t_end=float(cfg["t_end"]),
                                quadrature=cfg["quadrature"])
        write_convergence_csv(table, out / "convergence.csv")
        observed = {f"order{p}": table.observed_order(p) for p in orders}
        return {"observed_orders": observed,
                "all_stable": bool(table.stable.all())}

    if cfg["type"] != "ode":
        raise ConfigError("--type must be 'ode' or 'pde'")
    lam_s, lam_n = float(cfg["lambda_stiff"]), float(cfg["lambda_nonstiff"])
    h_list = _float_list(cfg["h_list"])
    t_end = float(cfg["t_end"])
    ode = SplitLinearODE([[lam_s]], [[lam_n]], [1.0])
    exact = lambda t: np.array([np.exp((lam_s + lam_n) * t)])
    import csv
    observed = {}
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["order", "h", "error", "observed"])
        for p in orders:
            spec = MethodSpec(family=cfg["family"], kind=kind, order=p,
                              mode=cfg["mode"])
            rows = convergence_study(spec, ode, exact, h_list, t_end=t_end)
            for h, err, slope in rows:
                w.writerow([p, _fmt(h), _fmt(err), _fmt(slope)])
            observed[f"order{p}"] = rows[-1][2]
    return {"observed_orders": observed}


def cmd_solve(cfg: dict, out: Path) -> dict:
    import csv
    if cfg["type"] == "ode":
        spec = _method_spec(cfg)
        lam_s, lam_n = float(cfg["lambda_stiff"]), float(cfg["lambda_nonstiff"])
        ode = SplitLinearODE([[lam_s]], [[lam_n]], [float(cfg["u0"])])
        traj = solve_ivp(spec, ode, float(cfg["t_end"]), float(cfg["h"]))
        with open(out / "solution.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "u"])
            for t, u in zip(traj.times, traj.states):
                w.writerow([_fmt(t), _fmt(u[0])])
        return {"final": float(traj.final[0]),
                "final_abs": abs(float(traj.final[0]))}

    if cfg["type"] != "pde":
        raise ConfigError("--type must be 'ode' or 'pde'")
    spec = _method_spec(cfg)
    J = int(cfg["j"])
    kwargs = dict(C=float(cfg["cfl"]), t_end=float(cfg["t_end"]),
                  quadrature=cfg["quadrature"])
    if cfg["ratio_p"] is not None:
        problem = sine_dispersion_problem(J, a=float(cfg["a"]))
        kwargs["E_P"] = float(cfg["ratio_p"])
    else:
        problem = sine_diffusion_problem(J, a=float(cfg["a"]))
        kwargs["E"] = float(cfg["ratio"])
    if cfg["adv"] is not None:
        kwargs["adv_order"] = int(cfg["adv"])
    if cfg["diff"] is not None:
        kwargs["op_order"] = int(cfg["diff"])
    res = run_single(spec, problem, **kwargs)
    x = problem.grid()
    exact = problem.exact(res.t_end, x, res.coefficient)
    with open(out / "solution.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "u", "exact"])
        for xi, ui, ei in zip(x, res.final, exact):
            w.writerow([_fmt(xi), _fmt(ui), _fmt(ei)])
    return {"error": None if np.isnan(res.error) else res.error,
            "dt": res.dt, "coefficient": res.coefficient,
            "stable": res.stable, "step_growth": res.step_growth}


# ------------------------------------------------------------------ wiring

_DEFAULTS = {
    "tableau": {"family": None, "nodes": "gauss-lobatto", "order": None,
                "mode": IMEX, "reduce": False, "subintervals": None,
                "final_update": None, "quadrature": "nodes"},
    "stability": {"family": None, "nodes": "gauss-lobatto", "order": None,
                  "mode": IMEX, "kind": "s", "resolution": 200,
                  "offset": 0.01, "re_min": None, "re_max": None,
                  "im_min": None, "im_max": None, "pgm": False,
                  "subintervals": None, "final_update": None,
                  "quadrature": "nodes"},
    "vonneumann": {"family": None, "nodes": "gauss-lobatto", "order": None,
                   "plane": "CE", "adv": None, "diff": None, "disp": None,
                   "resolution": 400, "n0": 1000, "cmin": 0.01, "cmax": 100.0,
                   "smin": None, "smax": None, "linear_c": False,
                   "refine": True, "subintervals": None, "final_update": None,
                   "pgm": False},
    "convergence": {"type": None, "family": None, "nodes": "gauss-lobatto",
                    "mode": IMEX, "orders": "2,3,4,5",
                    "j_values": "32,64,128,256,512", "cfl": 0.4, "ratio": 0.5,
                    "t_end": 1.0, "quadrature": "nodes",
                    "lambda_stiff": -0.5, "lambda_nonstiff": -0.5,
                    "h_list": "0.4,0.2,0.1,0.05,0.025,0.0125"},
    "solve": {"type": None, "family": None, "nodes": "gauss-lobatto",
              "order": None, "mode": IMEX, "subintervals": None,
              "final_update": None, "quadrature": "nodes",
              "lambda_stiff": -500.0, "lambda_nonstiff": -0.5, "u0": 1.0,
              "h": 0.1, "t_end": 1.0, "j": 64, "a": 1.0, "cfl": 0.4,
              "ratio": 0.5, "ratio_p": None, "adv": None, "diff": None},
}

_REQUIRED = {
    "tableau": ("family", "order"),
    "stability": ("family", "order"),
    "vonneumann": ("family", "order"),
    "convergence": ("type", "family"),
    "solve": ("type", "family", "order"),
}


def _add_method_args(p, with_mode=True):
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--nodes", help="equispaced|gauss-lobatto|gauss-legendre "
                                   "(aliases eq, glb, glg)")
    p.add_argument("--order", type=int)
    if with_mode:
        p.add_argument("--mode", choices=MODES)
    p.add_argument("--subintervals", type=int,
                   help="subtimenodes per step beyond the accuracy minimum")
    p.add_argument("--final-update", dest="final_update",
                   choices=sorted(FINAL_UPDATES),
                   help="step readout for ader tableaux")
    p.add_argument("--quadrature", choices=("nodes", "exact"),
                   help="right-hand-side quadrature for ader tableaux")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="decader",
        description="Tableau construction, stability scans and convergence "
                    "experiments for DeC / sDeC / ADER time integrators.")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=0,
                    help="seed for any pseudo-random sampling")
    ap.add_argument("--threads", type=int, default=1,
                    help="advisory thread cap, echoed into metadata")
    ap.add_argument("--config", help="JSON file with option defaults "
                                     "(explicit flags win)")
    sub = ap.add_subparsers(dest="command", required=True)

    pt = sub.add_parser("tableau", help="build and serialize one tableau")
    _add_method_args(pt)
    pt.add_argument("--reduce", action=argparse.BooleanOptionalAction,
                    help="merge duplicate stages")

    ps = sub.add_parser("stability", help="ODE stability-region scan")
    _add_method_args(ps)
    ps.add_argument("--kind", choices=("s", "minion", "d0", "d1"))
    ps.add_argument("--resolution", type=int)
    ps.add_argument("--offset", type=float)
    for f in ("re-min", "re-max", "im-min", "im-max"):
        ps.add_argument(f"--{f}", dest=f.replace("-", "_"), type=float)
    ps.add_argument("--pgm", action=argparse.BooleanOptionalAction,
                    help="also write the stability mask as ASCII PGM")

    pv = sub.add_parser("vonneumann", help="fully discrete stability map")
    _add_method_args(pv, with_mode=False)
    pv.add_argument("--plane", help="CE, CD, CP or CEP")
    pv.add_argument("--adv", type=int, help="advection stencil order")
    pv.add_argument("--diff", type=int, help="diffusion stencil order")
    pv.add_argument("--disp", type=int, help="dispersion stencil order")
    pv.add_argument("--resolution", type=int)
    pv.add_argument("--n0", type=int, help="interior Fourier angles")
    pv.add_argument("--cmin", type=float)
    pv.add_argument("--cmax", type=float)
    pv.add_argument("--smin", type=float, help="second-axis lower bound")
    pv.add_argument("--smax", type=float, help="second-axis upper bound")
    pv.add_argument("--linear-c", dest="linear_c",
                    action=argparse.BooleanOptionalAction,
                    help="linear instead of logarithmic C axis")
    pv.add_argument("--refine", action=argparse.BooleanOptionalAction,
                    help="bisection-refine the borders (default on)")
    pv.add_argument("--pgm", action=argparse.BooleanOptionalAction)

    pc = sub.add_parser("convergence", help="ODE or PDE convergence table")
    _add_method_args(pc)
    pc.add_argument("--type", choices=("ode", "pde"))
    pc.add_argument("--orders", help="comma-separated method orders")
    pc.add_argument("--j-values", dest="j_values",
                    help="comma-separated grid sizes (pde)")
    pc.add_argument("--cfl", type=float, help="advection number C (pde)")
    pc.add_argument("--ratio", type=float, help="stiffness ratio E (pde)")
    pc.add_argument("--t-end", dest="t_end", type=float)
    pc.add_argument("--lambda-stiff", dest="lambda_stiff", type=float)
    pc.add_argument("--lambda-nonstiff", dest="lambda_nonstiff", type=float)
    pc.add_argument("--h-list", dest="h_list",
                    help="comma-separated step sizes (ode)")

    pr = sub.add_parser("solve", help="single ODE or PDE run")
    _add_method_args(pr)
    pr.add_argument("--type", choices=("ode", "pde"))
    pr.add_argument("--lambda-stiff", dest="lambda_stiff", type=float)
    pr.add_argument("--lambda-nonstiff", dest="lambda_nonstiff", type=float)
    pr.add_argument("--u0", type=float)
    pr.add_argument("--h", type=float)
    pr.add_argument("--t-end", dest="t_end", type=float)
    pr.add_argument("--j", type=int, help="grid cells (pde)")
    pr.add_argument("--a", type=float, help="advection speed (pde)")
    pr.add_argument("--cfl", type=float)
    pr.add_argument("--ratio", type=float, help="diffusion ratio E (pde)")
    pr.add_argument("--ratio-p", dest="ratio_p", type=float,
                    help="dispersion ratio E_P (pde)")
    pr.add_argument("--adv", type=int)
    pr.add_argument("--diff", type=int)
    return ap


_HANDLERS = {
    "tableau": cmd_tableau,
    "stability": cmd_stability,
    "vonneumann": cmd_vonneumann,
    "convergence": cmd_convergence,
    "solve": cmd_solve,
}


def _merge_config(args: argparse.Namespace, file_cfg: dict) -> dict:
    defaults = _DEFAULTS[args.command]
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config file keys: {sorted(unknown)}")
    cfg = {}
    for key, hard in defaults.items():
        val = getattr(args, key, None)
        if val is None:
            val = file_cfg.get(key, hard)
        cfg[key] = val
    missing = [k for k in _REQUIRED[args.command] if cfg[k] is None]
    if missing:
        raise ConfigError("missing required option(s): "
                          + ", ".join(f"--{m.replace('_', '-')}" for m in missing))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        file_cfg = {}
        if args.config:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
            if not isinstance(file_cfg, dict):
                raise ConfigError("config file must hold a JSON object")
        cfg = _merge_config(args, file_cfg)
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"decader: configuration error: {exc}", file=sys.stderr)
        return 2

    cfg_echo = dict(cfg, seed=args.seed, threads=args.threads, out=str(out))
    start = time.perf_counter()
    try:
        extra = _HANDLERS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"decader: configuration error: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        diag = {"command": args.command, "config": cfg_echo,
                "error": f"{type(exc).__name__}: {exc}", "version": __version__}
        with open(out / "diagnostic.json", "w") as fh:
            json.dump(diag, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
        print(f"decader: numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"decader: configuration error: {exc}", file=sys.stderr)
        return 2
    write_metadata(out, args.command, cfg_echo, extra,
                   time.perf_counter() - start)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
