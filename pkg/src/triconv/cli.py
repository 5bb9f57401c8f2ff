"""Command line front end: validated configs, experiment runs, reports.

Every subcommand resolves its configuration from defaults, an optional
``--config`` JSON file, and command line flags (flags win), rejecting
unknown or malformed keys up front.  Runs are deterministic for a fixed
seed and every emitted report embeds the resolved config.

Exit codes: 0 when all pass flags are true, 1 on a computational failure
or a failed criterion, 2 on a config/schema violation (the offending key
or inequality is named on stderr).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, fieldio, reports
from .caps import build_caps, cap_angle
from .decomp import Localizer, multiplier, next_dyadic
from .geometry import (FAMILIES, TransversalTriple, check_regularity,
                       load_patch, random_transform, verify_mn_identity)
from .grid import SpaceTimeGrid
from .surface import (estimate_constant, theta_scaling_sweep,
                      transform_invariance_check)
from .trilinear import (CASE_IDS, CaseSpec, case_sweep, check_region,
                        nearest_dyadic, summation_check, validate_case,
                        verify_case)
from .zakharov import (SobolevPair, SpatialGrid, evolve,
                       linear_isometry_error, mass_drift, picard_iterate,
                       random_state)


class SchemaError(ValueError):
    """Config rejected before any computation started."""


# -- value coercers --------------------------------------------------------

def _int(v) -> int:
    if isinstance(v, bool):
        raise ValueError("expected an integer")
    if isinstance(v, int):
        return v
    if isinstance(v, float) and v.is_integer():
        return int(v)
    if isinstance(v, str):
        return int(v.strip(), 10)
    raise ValueError(f"expected an integer, got {v!r}")


def _float(v) -> float:
    if isinstance(v, bool):
        raise ValueError("expected a number")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        return float(v.strip())
    raise ValueError(f"expected a number, got {v!r}")


def _str(v) -> str:
    if not isinstance(v, str):
        raise ValueError(f"expected a string, got {v!r}")
    return v


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("true", "false"):
        return v.lower() == "true"
    raise ValueError(f"expected true/false, got {v!r}")


def _choice(*names: str) -> Callable:
    def conv(v):
        v = _str(v)
        if v not in names:
            raise ValueError(f"{v!r} is not one of {sorted(names)}")
        return v
    return conv


def _int_list(v) -> list[int]:
    if isinstance(v, str):
        v = [part for part in v.split(",") if part.strip()]
    elif isinstance(v, (int, float)):
        v = [v]
    out = [_int(x) for x in v]
    if not out:
        raise ValueError("expected at least one integer")
    return out


def _float_list(v) -> list[float]:
    if isinstance(v, str):
        v = [part for part in v.split(",") if part.strip()]
    elif isinstance(v, (int, float)):
        v = [v]
    out = [_float(x) for x in v]
    if not out:
        raise ValueError("expected at least one number")
    return out


def _str_list(v) -> list[str]:
    if isinstance(v, str):
        v = [v]
    return [_str(x) for x in v]


def _dims4(v) -> tuple[int, int, int, int]:
    if isinstance(v, str):
        v = v.split("x")
    dims = tuple(_int(x) for x in v)
    if len(dims) != 4:
        raise ValueError("expected NXxNYxNZxNT")
    return dims


def _dims3(v) -> tuple[int, int, int]:
    if isinstance(v, str):
        v = v.split("x")
    elif isinstance(v, int):
        v = [v]
    dims = tuple(_int(x) for x in v)
    if len(dims) == 1:
        return (dims[0],) * 3
    if len(dims) != 3:
        raise ValueError("expected one node count or NXxNYxNZ")
    return dims


def _sign(v) -> int:
    s = _int(v)
    if s not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return s


# -- schemas ----------------------------------------------------------------

@dataclass(frozen=True)
class _Opt:
    key: str
    flag: str
    conv: Callable
    default: object = None
    required: bool = False
    help: str = ""


_DEF_THETAS = tuple(float(t) for t in np.geomspace(0.05, 0.5, 6))

_SCHEMAS: dict[str, tuple[_Opt, ...]] = {
    "geometry-check": (
        _Opt("family", "--family", _choice(*FAMILIES), "tilted-planes",
             help="surface family to build"),
        _Opt("theta", "--theta", _float, 0.3,
             help="transversality parameter for the tilted family"),
        _Opt("extent", "--extent", _float, help="patch half-width"),
        _Opt("nodes", "--nodes", _int, help="lattice nodes per axis"),
        _Opt("transforms", "--transforms", _int, 20,
             help="random linear maps for the determinant identity"),
        _Opt("cond_cap", "--cond-cap", _float, 10.0,
             help="condition number bound for the random maps"),
        _Opt("samples", "--samples", _int, 64,
             help="node triples sampled per map"),
        _Opt("mn_tol", "--mn-tol", _float, 1e-4,
             help="relative tolerance for the identity"),
        _Opt("seed", "--seed", _int, 0),
        _Opt("report", "--report", _str, help="write the JSON report here"),
    ),
    "conv-estimate": (
        _Opt("triple", "--triple", _str, required=True,
             help="JSON file: {family, ...} or {patches: [...]}"),
        _Opt("eps", "--eps", _float, required=True,
             help="slab half-thickness"),
        _Opt("max_iters", "--max-iters", _int, 60),
        _Opt("restarts", "--restarts", _int, 2),
        _Opt("tol", "--tol", _float, 1e-6,
             help="relative stall tolerance of the ascent"),
        _Opt("ratio_cap", "--ratio-cap", _float, 10.0,
             help="pass bound on measured/predicted"),
        _Opt("invariance_maps", "--invariance-maps", _int, 0,
             help="also check this many random linear images"),
        _Opt("invariance_cap", "--invariance-cap", _float, 2.2,
             help="pass bound on the invariance ratio r"),
        _Opt("cond_cap", "--cond-cap", _float, 10.0),
        _Opt("seed", "--seed", _int, 0),
        _Opt("report", "--report", _str),
    ),
    "theta-sweep": (
        _Opt("family", "--family", _choice(*FAMILIES), "tilted-planes"),
        _Opt("thetas", "--thetas", _float_list, _DEF_THETAS,
             help="comma list; needs >= 5 values over a decade"),
        _Opt("extent", "--extent", _float, 0.25),
        _Opt("resolution", "--resolution", _float, 6.0,
             help="lattice steps per theta"),
        _Opt("slab_multiple", "--slab-multiple", _int, 3,
             help="slab thickness in odd lattice steps"),
        _Opt("restarts", "--restarts", _int, 2),
        _Opt("max_iters", "--max-iters", _int, 60),
        _Opt("workers", "--workers", _int,
             help="parallel points; TRICONV_WORKERS when unset"),
        _Opt("slope_lo", "--slope-lo", _float, -0.65),
        _Opt("slope_hi", "--slope-hi", _float, -0.35),
        _Opt("seed", "--seed", _int, 0),
        _Opt("csv", "--csv", _str, help="write the per-theta table here"),
        _Opt("report", "--report", _str),
    ),
    "decomp-verify": (
        _Opt("grid", "--grid", _dims4, (32, 32, 32, 64),
             help="NXxNYxNZxNT node counts"),
        _Opt("max_n", "--maxN", _int, 8, help="frequency budget"),
        _Opt("max_l", "--maxL", _int, 16, help="modulation budget"),
        _Opt("lam", "--lam", _float, 1.0),
        _Opt("tau_step", "--tau-step", _float,
             help="temporal lattice step; doubled from 1 until the "
                  "modulation budget fits when unset"),
        _Opt("apertures", "--apertures", _int_list, (2, 4, 8, 16)),
        _Opt("directions", "--directions", _int, 100000,
             help="random directions for the cover statistics"),
        _Opt("tol", "--tol", _float, 1e-12,
             help="partition identity tolerance"),
        _Opt("density_cap", "--density-cap", _int, 12,
             help="bound on centers per aperture squared"),
        _Opt("chi_max", "--chi-max", _int, 3),
        _Opt("seed", "--seed", _int, 0),
        _Opt("report", "--report", _str),
    ),
    "trilinear-verify": (
        _Opt("case", "--case", _choice(*CASE_IDS), required=True),
        _Opt("n", "--N", _int_list, help="output block level(s)"),
        _Opt("n1", "--N1", _int_list, help="first input level(s)"),
        _Opt("n2", "--N2", _int_list, help="second input level(s)"),
        _Opt("l", "--L", _int_list, help="output modulation level(s)"),
        _Opt("l1", "--L1", _int_list),
        _Opt("l2", "--L2", _int_list),
        _Opt("a", "--A", _int, help="cap aperture for the cap cases"),
        _Opt("j1", "--j1", _int, help="cap index of the first factor"),
        _Opt("j2", "--j2", _int, help="cap index of the second factor"),
        _Opt("sign", "--sign", _sign, 1, help="wave half: +1 or -1"),
        _Opt("d", "--d", _int, help="cube side for the cube variant"),
        _Opt("trials", "--trials", _int, 64),
        _Opt("sweeps", "--sweeps", _int, 20,
             help="ascent sweeps refining the best trial"),
        _Opt("margin", "--margin", _float, 8.0,
             help="pass bound on max ratio"),
        _Opt("seed", "--seed", _int, 0),
        _Opt("csv", "--csv", _str, help="write the per-point table here"),
        _Opt("report", "--report", _str),
    ),
    "summation-check": (
        _Opt("s", "--s", _float, required=True),
        _Opt("sigma", "--sigma", _float, required=True),
        _Opt("max_n", "--maxN", _int, 4),
        _Opt("max_l", "--maxL", _int, 4),
        _Opt("trials", "--trials", _int, 6),
        _Opt("sign", "--sign", _sign, 1),
        _Opt("b_values", "--b-values", _float_list, (0.25, 0.35, 0.45),
             help="temporal weights swapped into the second factor"),
        _Opt("margin", "--margin", _float, 8.0,
             help="uniformity bound: family max over family median"),
        _Opt("seed", "--seed", _int, 0),
        _Opt("report", "--report", _str),
    ),
    "zakharov-run": (
        _Opt("grid", "--grid", _dims3, (16, 16, 16),
             help="nodes per axis, or NXxNYxNZ"),
        _Opt("lam", "--lam", _float, 1.0),
        _Opt("t_final", "--T", _float, 0.5),
        _Opt("dt", "--dt", _float, 1e-3),
        _Opt("s", "--s", _float, 0.3),
        _Opt("sigma", "--sigma", _float, -0.3),
        _Opt("data", "--data", _str,
             help="initial slice (trajectory file); random data when unset"),
        _Opt("amp", "--amp", _float, 1e-2,
             help="amplitude of the random data"),
        _Opt("order", "--order", _int, 1, help="stepper order: 1 or 2"),
        _Opt("stride", "--stride", _int,
             help="record every k-th step; about 8 slices when unset"),
        _Opt("iterations", "--iterations", _int, 6,
             help="Picard iterates"),
        _Opt("nodes_per_unit", "--quad-nodes", _int, 64,
             help="Duhamel quadrature nodes per unit time"),
        _Opt("drift_tol", "--drift-tol", _float, 1e-4),
        _Opt("factor_cap", "--factor-cap", _float, 0.5,
             help="contraction bound from iteration 2 on"),
        _Opt("iso_tol", "--iso-tol", _float, 1e-12,
             help="linear flow isometry tolerance"),
        _Opt("seed", "--seed", _int, 0),
        _Opt("out", "--out", _str, help="write the trajectory dump here"),
        _Opt("report", "--report", _str),
    ),
    "report-merge": (
        _Opt("inputs", "--inputs", _str_list, (),
             help="report files (also accepted as positionals)"),
        _Opt("out", "--out", _str, help="write the summary here"),
    ),
}


def _resolve(name: str, file_cfg: dict, flag_cfg: dict
             ) -> tuple[dict, set]:
    schema = _SCHEMAS[name]
    lookup = {opt.key: opt for opt in schema}
    cfg = {opt.key: opt.default for opt in schema}
    explicit: set[str] = set()
    for source in (file_cfg, flag_cfg):
        for key, val in source.items():
            if key not in lookup:
                raise SchemaError(f"{name}: unknown config key {key!r}")
            if val is None:
                continue
            try:
                cfg[key] = lookup[key].conv(val)
            except (TypeError, ValueError) as exc:
                raise SchemaError(
                    f"{name}: bad value for key {key!r}: {exc}") from exc
            explicit.add(key)
    for opt in schema:
        if opt.required and cfg[opt.key] is None:
            raise SchemaError(f"{name}: missing required key {opt.key!r}")
    return cfg, explicit


# -- handlers ---------------------------------------------------------------

def _build_family(family: str, theta, extent, nodes) -> TransversalTriple:
    kwargs = {"theta": theta}
    if extent is not None:
        kwargs["extent"] = extent
    if nodes is not None:
        kwargs["nodes"] = nodes
    try:
        return FAMILIES[family](**kwargs)
    except TypeError as exc:
        raise SchemaError(f"family {family!r}: {exc}") from exc


def _handle_geometry_check(cfg: dict, explicit: set) -> dict:
    triple = _build_family(cfg["family"], cfg["theta"], cfg["extent"],
                           cfg["nodes"])
    regs = [asdict(check_regularity(p)) for p in triple.patches]
    worst = 0.0
    for k in range(cfg["transforms"]):
        t_mat = random_transform(cfg["seed"] + k, cfg["cond_cap"])
        rep = verify_mn_identity(triple, t_mat, samples=cfg["samples"],
                                 seed=cfg["seed"] + k)
        worst = max(worst, rep.max_rel_err)
    passed = (triple.theta > 0 and all(r["passed"] for r in regs)
              and worst <= cfg["mn_tol"])
    return reports.make_report("geometry-check", cfg, {
        "theta": triple.theta,
        "regularity": regs,
        "mn_max_rel_err": worst,
        "transforms": cfg["transforms"],
    }, passed)


def _load_triple(path: str) -> TransversalTriple:
    try:
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"triple file {path}: {exc}") from exc
    if not isinstance(spec, dict):
        raise SchemaError(f"triple file {path}: expected a JSON object")
    if "family" in spec:
        params = dict(spec)
        name = params.pop("family")
        if name not in FAMILIES:
            raise SchemaError(f"unknown family {name!r}")
        allowed = {"theta", "extent", "nodes"}
        bad = set(params) - allowed
        if bad:
            raise SchemaError(
                f"triple file {path}: unknown key {sorted(bad)[0]!r}")
        return _build_family(name, params.pop("theta", 1.0),
                             params.get("extent"), params.get("nodes"))
    if "patches" in spec:
        patches = [load_patch(p) for p in spec["patches"]]
        return TransversalTriple.build(patches)
    raise SchemaError(f"triple file {path}: needs 'family' or 'patches'")


def _handle_conv_estimate(cfg: dict, explicit: set) -> dict:
    triple = _load_triple(cfg["triple"])
    rep = estimate_constant(triple, cfg["eps"], max_iters=cfg["max_iters"],
                            restarts=cfg["restarts"], seed=cfg["seed"],
                            tol=cfg["tol"], ratio_cap=cfg["ratio_cap"])
    results = asdict(rep)
    results.pop("history")
    passed = rep.passed
    if cfg["invariance_maps"]:
        inv_rows = []
        for k in range(cfg["invariance_maps"]):
            t_mat = random_transform(cfg["seed"] + 1 + k, cfg["cond_cap"])
            inv = transform_invariance_check(
                triple, t_mat, eps=cfg["eps"], max_iters=cfg["max_iters"],
                restarts=cfg["restarts"], seed=cfg["seed"])
            inv_rows.append({"r_forward": inv.r_forward,
                             "r_inverse": inv.r_inverse})
        worst = max(max(r["r_forward"], r["r_inverse"]) for r in inv_rows)
        results["invariance"] = inv_rows
        results["invariance_worst_ratio"] = worst
        passed = passed and worst <= cfg["invariance_cap"]
    return reports.make_report("conv-estimate", cfg, results, passed)


def _handle_theta_sweep(cfg: dict, explicit: set) -> dict:
    if len(cfg["thetas"]) < 5:
        raise SchemaError("theta-sweep: key 'thetas' needs at least "
                          "5 values")
    sweep = theta_scaling_sweep(
        cfg["family"], cfg["thetas"], extent=cfg["extent"],
        resolution=cfg["resolution"], slab_multiple=cfg["slab_multiple"],
        restarts=cfg["restarts"], max_iters=cfg["max_iters"],
        seed=cfg["seed"], workers=cfg["workers"])
    if cfg["csv"]:
        header = ["theta", "measured_constant", "predicted_bound", "ratio",
                  "iterations", "converged", "passed"]
        rows = [[r.theta, r.measured_constant, r.predicted_bound, r.ratio,
                 r.iterations, r.converged, r.passed]
                for r in sweep.reports]
        reports.write_csv(cfg["csv"], header, rows)
    passed = cfg["slope_lo"] <= sweep.slope <= cfg["slope_hi"]
    return reports.make_report("theta-sweep", cfg, {
        "thetas": sweep.thetas,
        "constants": sweep.constants,
        "slope": sweep.slope,
        "residual": sweep.residual,
        "point_ratios": [r.ratio for r in sweep.reports],
    }, passed)


def _resolve_tau_step(grid_dims, max_n: int, max_l: int,
                      tau_step: float | None) -> float:
    if tau_step is not None:
        return tau_step
    t_nodes = grid_dims[3]
    need = 2 * max_l + max_n**2
    step = 1.0
    while (t_nodes // 2) * step < need:
        step *= 2.0
    return step


def _handle_decomp_verify(cfg: dict, explicit: set) -> dict:
    dims = cfg["grid"]
    tau_step = _resolve_tau_step(dims, cfg["max_n"], cfg["max_l"],
                                 cfg["tau_step"])
    try:
        grid = SpaceTimeGrid(dims[:3], dims[3], lam=cfg["lam"],
                             tau_step=tau_step, max_n=cfg["max_n"],
                             max_l=cfg["max_l"])
    except ValueError as exc:
        raise SchemaError(f"decomp-verify: {exc}") from exc

    ones = None
    for k in range(next_dyadic(grid.xi_max()).bit_length()):
        term = multiplier(grid, Localizer("P", 2**k))
        ones = term if ones is None else ones + term
    err_p = float(np.max(np.abs(ones - 1.0)))

    sigma_max = grid.tau_max() + grid.xi_max() ** 2
    ones = None
    for k in range(next_dyadic(sigma_max).bit_length()):
        term = multiplier(grid, Localizer("S", 2**k))
        ones = term if ones is None else ones + term
    err_s = float(np.max(np.abs(ones - 1.0)))

    # unit directions of the nonzero frequency lattice
    ax = grid.xi_grids()
    flat = np.stack(np.broadcast_arrays(*ax), axis=-1)[..., 0, :]
    flat = flat.reshape(-1, 3)
    norms = np.linalg.norm(flat, axis=1)
    unit = flat[norms > 0] / norms[norms > 0, None]

    rng = np.random.Generator(np.random.Philox(cfg["seed"]))
    dirs = rng.standard_normal((cfg["directions"], 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    cap_stats = {}
    caps_ok = True
    for aperture in cfg["apertures"]:
        caps = build_caps(aperture)
        chi_grid = caps.counts(unit).astype(float)
        total = np.zeros(len(unit))
        for j in range(len(caps)):
            total += caps.member_mask(j, unit) / chi_grid
        err_q = float(np.max(np.abs(total - 1.0)))
        chi = caps.counts(dirs)
        stat = {
            "partition_error": err_q,
            "chi_min": int(chi.min()),
            "chi_max": int(chi.max()),
            "centers": len(caps),
            "center_bound": cfg["density_cap"] * aperture**2,
        }
        cap_stats[str(aperture)] = stat
        caps_ok = caps_ok and (err_q <= cfg["tol"] and stat["chi_min"] >= 1
                               and stat["chi_max"] <= cfg["chi_max"]
                               and len(caps) <= stat["center_bound"])

    passed = err_p <= cfg["tol"] and err_s <= cfg["tol"] and caps_ok
    return reports.make_report("decomp-verify", cfg, {
        "tau_step": tau_step,
        "frequency_partition_error": err_p,
        "modulation_partition_error": err_s,
        "caps": cap_stats,
    }, passed)


def _auto_cap_pair(aperture: int) -> tuple[int, int]:
    """First cap pair at angle comparable to 1/A, anchored at cap 0."""
    caps = build_caps(aperture)
    for lo, hi in ((0.5 / aperture, 2.0 / aperture),
                   (0.25 / aperture, 4.0 / aperture)):
        for j in range(1, len(caps)):
            if lo <= cap_angle(caps, 0, j) <= hi:
                return 0, j
    raise SchemaError(f"no cap pair at angle ~1/A for A={aperture}")


def _derive_case(case: str, point: dict, cfg: dict) -> CaseSpec:
    """Fill the unset block parameters with case-consistent defaults."""
    p = dict(point)
    a, j1, j2 = cfg["a"], cfg["j1"], cfg["j2"]

    def put(key: str, value: int):
        p.setdefault(key, int(value))

    if case == "bilinear-SS":
        put("n1", 2)
        put("n2", 8)
    elif case == "bilinear-WS":
        put("n1", 8)
        if cfg["d"] is None:
            put("n", 2)
    elif case == "trans-low-mod":
        put("n1", 16)
        put("n2", p["n1"])
        if a is None:
            a = nearest_dyadic(max(1, p["n1"] // 4))
            while 4 * a > p["n1"]:
                a //= 2
        put("n", max(2, nearest_dyadic(p["n1"] / a)))
        if j1 is None or j2 is None:
            j1, j2 = _auto_cap_pair(a)
    elif case == "parallel-hh":
        put("n1", 8)
        put("n2", p["n1"])
        put("n", 2)
        if a is None:
            a = max(1, p["n1"] // 2)
        if j1 is None:
            j1 = 0
        if j2 is None:
            j2 = j1
    elif case == "hhl-lm":
        put("n1", 4)
        put("n2", p["n1"])
        put("n", 2)
    elif case == "hhl-hm":
        put("n1", 4)
        put("n2", p["n1"])
        put("n", 2)
        put("l2", p["n1"] ** 2)
    elif case == "low-high-a":
        put("n1", 2)
        put("n2", 4 * p["n1"])
        put("n", p["n2"])
        put("l", 2 * p["n2"] ** 2)
    elif case == "low-high-b":
        put("n1", 2)
        put("n2", 4 * p["n1"])
        put("n", p["n2"])
        put("l2", p["n2"] ** 2 // 2)
        put("l", 2 * p["n2"] ** 2)
    elif case == "small-wave":
        put("n", 1)
        put("n1", 2)
        put("n2", p["n1"])
    for key in ("n", "n1", "n2", "l", "l1", "l2"):
        put(key, 1)
    return CaseSpec(case, n=p["n"], n1=p["n1"], n2=p["n2"], l=p["l"],
                    l1=p["l1"], l2=p["l2"], a=a, j1=j1, j2=j2,
                    sign=cfg["sign"], d=cfg["d"])


def _handle_trilinear_verify(cfg: dict, explicit: set) -> dict:
    lists = {k: cfg[k] for k in ("n", "n1", "n2", "l", "l1", "l2")
             if cfg[k] is not None}
    sweep_keys = [k for k, v in lists.items() if len(v) > 1]
    if len(sweep_keys) > 1:
        raise SchemaError("trilinear-verify: only one of N,N1,N2,L,L1,L2 "
                          f"may sweep; got {sorted(sweep_keys)}")
    axis = sweep_keys[0] if sweep_keys else None
    x_values = lists[axis] if axis else [None]

    specs = []
    for x in x_values:
        point = {k: v[0] for k, v in lists.items()}
        if axis:
            point[axis] = x
        try:
            specs.append(_derive_case(cfg["case"], point, cfg))
        except ValueError as exc:
            raise SchemaError(f"trilinear-verify: {exc}") from exc

    try:
        for spec in specs:
            validate_case(spec)
    except ValueError as exc:
        raise SchemaError(f"trilinear-verify: {exc}") from exc

    if axis:
        sweep = case_sweep(specs, x_values=[float(x) for x in x_values],
                           trials=cfg["trials"], sweeps=cfg["sweeps"],
                           seed=cfg["seed"])
        case_reports, slope = list(sweep.reports), sweep.slope
    else:
        case_reports = [verify_case(specs[0], trials=cfg["trials"],
                                    sweeps=cfg["sweeps"], seed=cfg["seed"],
                                    margin=cfg["margin"])]
        slope = None

    if cfg["csv"]:
        header = ["case", "n", "n1", "n2", "l", "l1", "l2", "a", "j1",
                  "j2", "sign", "d", "pairs", "max_ratio", "predicted",
                  "margin", "passed", "slope"]
        rows = []
        for rep in case_reports:
            sp = rep.spec
            rows.append([sp.case, sp.n, sp.n1, sp.n2, sp.l, sp.l1, sp.l2,
                         sp.a, sp.j1, sp.j2, sp.sign, sp.d, rep.pairs,
                         rep.max_ratio, rep.predicted, rep.margin,
                         rep.passed, slope])
        reports.write_csv(cfg["csv"], header, rows)

    results = {"cases": [r.as_dict() for r in case_reports],
               "max_ratio": max(r.max_ratio for r in case_reports)}
    if axis:
        results["sweep_axis"] = axis
        results["x_values"] = [float(x) for x in x_values]
        results["slope"] = slope
    passed = all(r.passed for r in case_reports)
    return reports.make_report("trilinear-verify", cfg, results, passed)


def _handle_summation_check(cfg: dict, explicit: set) -> dict:
    try:
        check_region(cfg["s"], cfg["sigma"])
    except ValueError as exc:
        raise SchemaError(f"summation-check: {exc}") from exc
    rep = summation_check(cfg["s"], cfg["sigma"], n_max=cfg["max_n"],
                          l_max=cfg["max_l"], trials=cfg["trials"],
                          seed=cfg["seed"], sign=cfg["sign"],
                          b_values=tuple(cfg["b_values"]),
                          margin=cfg["margin"])
    return reports.make_report("summation-check", cfg, asdict(rep),
                               rep.passed)


def _handle_zakharov_run(cfg: dict, explicit: set) -> dict:
    try:
        pair = SobolevPair(cfg["s"], cfg["sigma"])
        pair.require()
    except ValueError as exc:
        raise SchemaError(f"zakharov-run: {exc}") from exc

    if cfg["data"]:
        try:
            traj_in = fieldio.load_trajectory(cfg["data"])
        except (OSError, ValueError) as exc:
            raise SchemaError(f"zakharov-run: key 'data': {exc}") from exc
        state = fieldio.state_from_trajectory(traj_in)
        if "grid" in explicit and traj_in.grid.nodes != cfg["grid"]:
            raise SchemaError(
                f"zakharov-run: data grid {traj_in.grid.nodes} does not "
                f"match requested grid {cfg['grid']}")
        source = "file"
    else:
        grid = SpatialGrid(cfg["grid"], lam=cfg["lam"])
        state = random_state(grid, seed=cfg["seed"], amp_u=cfg["amp"],
                             amp_n=cfg["amp"])
        source = "random"

    steps = max(1, int(round(cfg["t_final"] / cfg["dt"])))
    stride = cfg["stride"] or max(1, steps // 8)
    traj = evolve(state, cfg["t_final"], cfg["dt"], order=cfg["order"],
                  stride=stride)
    drift = mass_drift(traj)
    iso = linear_isometry_error(state, cfg["t_final"], cfg["dt"])
    pic = picard_iterate(state, pair, cfg["t_final"],
                         iterations=cfg["iterations"],
                         nodes_per_unit=cfg["nodes_per_unit"])
    if cfg["out"]:
        fieldio.dump_trajectory(traj, cfg["out"])

    factors = list(pic.factors)
    tail = factors[1:]
    passed = (not pic.diverged and drift <= cfg["drift_tol"]
              and iso <= cfg["iso_tol"]
              and all(f <= cfg["factor_cap"] for f in tail))
    return reports.make_report("zakharov-run", cfg, {
        "data_source": source,
        "grid": list(state.grid.nodes),
        "steps": steps,
        "slices": len(traj.times),
        "drift": drift,
        "isometry_error": iso,
        "d_k": list(pic.distances),
        "ratios": factors,
        "diverged": pic.diverged,
    }, passed)


def _handle_report_merge(cfg: dict, explicit: set) -> dict:
    loaded = [reports.load_report(p) for p in cfg["inputs"]]
    try:
        return reports.report_merge(loaded)
    except ValueError as exc:
        raise SchemaError(f"report-merge: {exc}") from exc


_HANDLERS = {
    "geometry-check": _handle_geometry_check,
    "conv-estimate": _handle_conv_estimate,
    "theta-sweep": _handle_theta_sweep,
    "decomp-verify": _handle_decomp_verify,
    "trilinear-verify": _handle_trilinear_verify,
    "summation-check": _handle_summation_check,
    "zakharov-run": _handle_zakharov_run,
    "report-merge": _handle_report_merge,
}


# -- orchestration -----------------------------------------------------------

def _load_config_file(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"config file {path}: expected a JSON object")
    return data


def _execute(name: str, file_cfg: dict, flag_cfg: dict) -> int:
    cfg, explicit = _resolve(name, file_cfg, flag_cfg)
    report = _HANDLERS[name](cfg, explicit)
    out_path = cfg.get("out") if name == "report-merge" \
        else cfg.get("report")
    if out_path:
        reports.write_report(report, out_path)
    else:
        sys.stdout.write(reports.dump_report(report))
    status = "PASS" if report["passed"] else "FAIL"
    print(f"[{status}] {name}", file=sys.stderr)
    return 0 if report["passed"] else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triconv",
        description="Desk-scale verification of convolution, space-time "
                    "and solver estimates.",
        allow_abbrev=False)
    parser.add_argument("--version", action="version",
                        version=f"triconv {__version__}")
    sub = parser.add_subparsers(dest="command")
    for name, schema in _SCHEMAS.items():
        p = sub.add_parser(name, allow_abbrev=False)
        p.add_argument("--config", help="JSON file with config keys")
        for opt in schema:
            if name == "report-merge" and opt.key == "inputs":
                p.add_argument("inputs", nargs="*",
                               help=opt.help)
                continue
            p.add_argument(opt.flag, dest=opt.key, help=opt.help)
    runner = sub.add_parser("run", allow_abbrev=False,
                            help="dispatch on the 'experiment' config key")
    runner.add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    ns = _build_parser().parse_args(argv)
    if ns.command is None:
        print("error: a subcommand is required (see --help)",
              file=sys.stderr)
        return 2
    try:
        if ns.command == "run":
            file_cfg = _load_config_file(ns.config)
            experiment = file_cfg.pop("experiment", None)
            if experiment is None:
                raise SchemaError("run: missing required key 'experiment'")
            if experiment not in _HANDLERS:
                raise SchemaError(
                    f"run: unknown experiment {experiment!r}")
            return _execute(experiment, file_cfg, {})
        file_cfg = _load_config_file(ns.config) if ns.config else {}
        keys = [opt.key for opt in _SCHEMAS[ns.command]]
        flag_cfg = {k: getattr(ns, k) for k in keys
                    if getattr(ns, k, None) not in (None, [])}
        return _execute(ns.command, file_cfg, flag_cfg)
    except SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
