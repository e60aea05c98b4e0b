"""Command line front end.

Subcommands expose the pipeline stages (gen-fbm, local-time, average, sew,
solve, verify, admissibility) plus `run`, which executes one of the canned
experiments E0 to E6 and writes a reproducible artifact directory:

    config.json    resolved configuration, sorted keys
    summary.json   results with timing stripped, byte-stable across reruns
    run_meta.json  timestamps, versions, elapsed wall time
    results.csv/.json   flat tables for the experiment

Exit codes: 0 all checks passed, 1 a check failed, 2 invalid configuration
or hypothesis violation, 3 ensemble blow-up abort.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .averaging import (admissible_regularity, average_via_local_time,
                        holder_exponent, hurst_admissible_fbm_driver,
                        hurst_admissible_main)
from .errors import (BlowUpError, FbmLabError, HypothesisError,
                     ParameterError)
from .experiments import (ALL_CRITERIA, HEADLINE, criterion_admissibility,
                          criterion_averaging_agreement,
                          criterion_fbm_covariance, criterion_ito_isometry,
                          criterion_martingale_residuals,
                          criterion_mollified_cauchy, criterion_moment_bound,
                          criterion_occupation_formula,
                          criterion_regularization_gain,
                          criterion_sewing_engine, _constant_field_reports)
from .fields import identity_field, singular_example
from .occupation import SpatialGrid, local_time
from .paths import TimeGrid, generate_fbm
from .sewing import Germ, sew
from .solver import (QuenchedScenario, mollified_family,
                     mollified_integral_sequence, solve_ensemble)
from .verify import (cross_term_check, ito_isometry_check, lebesgue_vs_sewing,
                     martingale_residuals, moment_ratio, moment_ratio_trend)
from .fields import hs_norm_sq

_CONFIG_SCHEMA = {
    "experiment": str,
    "sigma": str,
    "hurst": float,
    "gamma": float,
    "radius": float,
    "p": float,
    "m": float,
    "gamma0": float,
    "horizon": float,
    "dimension": int,
    "steps": int,
    "paths": int,
    "fbm_seed": int,
    "base_seed": int,
    "eps": "floats",
    "x0": "floats",
}

_DEFAULT_CONFIG = {
    "experiment": "E5",
    "sigma": "singular",
    "hurst": HEADLINE["hurst"],
    "gamma": HEADLINE["gamma"],
    "radius": HEADLINE["radius"],
    "p": HEADLINE["p"],
    "m": HEADLINE["m"],
    "gamma0": HEADLINE["gamma0"],
    "horizon": 1.0,
    "dimension": 1,
    "steps": HEADLINE["steps"],
    "paths": HEADLINE["paths"],
    "fbm_seed": HEADLINE["fbm_seed"],
    "base_seed": HEADLINE["base_seed"],
    "eps": list(HEADLINE["eps_seq"]),
    "x0": [HEADLINE["x0"]],
}


def parse_config_text(text: str) -> dict:
    """key=value lines; # starts a comment; unknown keys are rejected."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_SCHEMA:
            raise ParameterError(f"config line {lineno}: unknown key {key!r}")
        kind = _CONFIG_SCHEMA[key]
        try:
            if kind == "floats":
                out[key] = [float(v) for v in value.split(",") if v.strip()]
            elif kind is int:
                out[key] = int(value)
            elif kind is float:
                out[key] = float(value)
            else:
                out[key] = value
        except ValueError as exc:
            raise ParameterError(f"config line {lineno}: {exc}") from None
    return out


def resolve_config(overrides: dict) -> dict:
    cfg = dict(_DEFAULT_CONFIG)
    cfg.update(overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    if not 0.0 < cfg["hurst"] < 1.0:
        raise ParameterError(f"hurst must lie in (0, 1), got {cfg['hurst']}")
    if cfg["sigma"] not in ("singular", "identity"):
        raise ParameterError(f"sigma must be 'singular' or 'identity', got {cfg['sigma']!r}")
    if cfg["steps"] < 1 or cfg["paths"] < 1:
        raise ParameterError("steps and paths must be positive")
    if len(cfg["x0"]) != cfg["dimension"]:
        raise ParameterError(
            f"x0 has {len(cfg['x0'])} components for dimension {cfg['dimension']}")
    if cfg["sigma"] == "singular":
        h_max = hurst_admissible_main(cfg["dimension"], cfg["p"])
        if cfg["hurst"] > h_max:
            raise ParameterError(
                f"H exceeds H_max={h_max:.6g} for d={cfg['dimension']}, p={cfg['p']}")
        if not cfg["gamma"] < cfg["dimension"] / cfg["p"]:
            raise HypothesisError(
                f"gamma={cfg['gamma']} is not inside L^{cfg['p']}: need "
                f"gamma < d/p = {cfg['dimension'] / cfg['p']:.6g}")
        bound = 1.0 - cfg["hurst"] * cfg["dimension"] / 2.0
        if cfg["gamma0"] >= bound:
            raise ParameterError(
                f"gamma0={cfg['gamma0']} exceeds 1 - H*d/2 = {bound:.6g}")
    if not all(a > b for a, b in zip(cfg["eps"], cfg["eps"][1:])):
        raise ParameterError("eps must be strictly decreasing")


def build_scenario(cfg: dict):
    grid_t = TimeGrid(cfg["horizon"], cfg["steps"])
    fbm = generate_fbm(cfg["hurst"], cfg["dimension"], grid_t, cfg["fbm_seed"])
    if cfg["sigma"] == "singular":
        sigma = singular_example(cfg["gamma"], cfg["radius"], cfg["dimension"])
    else:
        sigma = identity_field(cfg["dimension"])
    scenario = QuenchedScenario(fbm, sigma, np.asarray(cfg["x0"], dtype=float),
                                tuple(cfg["eps"]), cfg["paths"],
                                cfg["base_seed"], p=cfg["p"])
    if cfg["sigma"] == "singular":
        lp_grid, fields = mollified_family(scenario)
    else:
        lp_grid = SpatialGrid.from_box(-2.0, 2.0, 64, cfg["dimension"])
        fields = {eps: sigma for eps in cfg["eps"]}
    quant_grid = SpatialGrid.cover(fbm.values.T, grid_t.dt)
    return scenario, fields, lp_grid, quant_grid


# --- artifact helpers -------------------------------------------------------


def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in sorted(obj.items())
                if k not in ("elapsed_s", "elapsed")}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True,
                               default=_json_default) + "\n")


def _write_rows(path_base: Path, rows: list[dict], fmt: str) -> Path:
    if fmt == "json":
        out = path_base.with_suffix(".json")
        _dump_json(out, rows)
        return out
    out = path_base.with_suffix(".csv")
    keys = sorted({k for row in rows for k in row})
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=keys)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    out.write_text(buf.getvalue())
    return out


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


# --- experiments -------------------------------------------------------------


def _experiment_e0(cfg: dict, threads: int) -> tuple[list[dict], list[dict]]:
    """Identity-field smoke test: exact identities plus threshold table."""
    reports = _constant_field_reports()
    rows = [r.to_dict() for r in reports]
    adm = criterion_admissibility()
    results = [{"id": "constant-field-identities",
                "passed": all(r.passed for r in reports),
                "summary": f"{len(reports)} identities on an identity field",
                "details": {"reports": rows}, "elapsed_s": 0.0},
               adm]
    return results, rows


_EXPERIMENTS = {
    "E0": ("identity-field smoke test and admissibility table", None),
    "E1": ("driver covariance audit", ["fbm-covariance"]),
    "E2": ("occupation-times formula convergence", ["occupation-formula"]),
    "E3": ("dual-route averaging and regularization gain",
           ["averaging-dual-route", "regularization-gain"]),
    "E4": ("sewing engine rates and divergence", ["sewing-engine"]),
    "E5": ("uniform moment bounds for the singular ensemble",
           ["moment-bound-uniformity"]),
    "E6": ("integral identities, martingale residuals, Cauchy property",
           ["ito-isometry", "martingale-residuals", "mollified-cauchy",
            "admissibility-thresholds"]),
}


def run_experiment(name: str, cfg: dict, out_dir: Path, threads: int,
                   fmt: str) -> int:
    if name not in _EXPERIMENTS:
        raise ParameterError(
            f"unknown experiment {name!r}; choose from {sorted(_EXPERIMENTS)}")
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    description, criteria = _EXPERIMENTS[name]
    rows: list[dict] = []
    if name == "E0":
        results, rows = _experiment_e0(cfg, threads)
    else:
        results = []
        for cid in criteria:
            fn = ALL_CRITERIA[cid]
            try:
                results.append(fn(threads=threads))
            except TypeError:
                results.append(fn())
        for res in results:
            detail_rows = res["details"].get("rows")
            if detail_rows:
                rows.extend({"criterion": res["id"], **row}
                            for row in detail_rows)

    out_dir.mkdir(parents=True, exist_ok=True)
    _dump_json(out_dir / "config.json", {"experiment": name, **cfg,
                                         "threads": threads, "format": fmt})
    summary = {"experiment": name, "description": description,
               "results": _strip_timing(results),
               "passed": all(r["passed"] for r in results)}
    _dump_json(out_dir / "summary.json", summary)
    _dump_json(out_dir / "run_meta.json", {
        "started_utc": started,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "elapsed_s": round(time.perf_counter() - t0, 3),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    })
    if rows:
        _write_rows(out_dir / "results", rows, fmt)
    for res in results:
        _emit(f"[{'PASS' if res['passed'] else 'FAIL'}] {res['id']}: {res['summary']}")
    _emit(f"experiment {name}: {'PASS' if summary['passed'] else 'FAIL'} "
          f"(artifacts in {out_dir})")
    return 0 if summary["passed"] else 1


# --- plain subcommands -------------------------------------------------------


def _cmd_gen_fbm(args) -> int:
    grid = TimeGrid(args.horizon, args.steps)
    path = generate_fbm(args.hurst, args.dim, grid, args.seed,
                        path_index=args.path_index)
    buf = io.StringIO()
    path.to_csv(buf)
    if args.out:
        Path(args.out).write_text(buf.getvalue())
        _emit(f"wrote {args.out}")
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def _cmd_local_time(args) -> int:
    grid_t = TimeGrid(args.horizon, args.steps)
    path = generate_fbm(args.hurst, args.dim, grid_t, args.seed)
    box = SpatialGrid.cover(path.values.T, args.width)
    field = local_time(path, box, args.s, args.t if args.t is not None
                       else args.horizon)
    rows = []
    centers = field.grid.centers_mesh().reshape(-1, field.grid.dimension)
    values = field.values.reshape(-1)
    for c, v in zip(centers, values):
        rows.append({**{f"x_{j + 1}": float(c[j]) for j in range(c.size)},
                     "local_time": float(v)})
    if args.out:
        _write_rows(Path(args.out), rows, "csv")
        _emit(f"wrote {args.out}")
    _emit(json.dumps({"covered_mass": field.covered_mass,
                      "escaped_mass": field.escaped_mass,
                      "bins": field.grid.bins, "h": field.grid.h},
                     sort_keys=True, default=_json_default))
    return 0


_FIELD_REGISTRY = {
    "heaviside": lambda pts: (pts[..., 0] >= 0.0).astype(float),
    "well": lambda pts: (np.abs(pts[..., 0]) <= 0.5).astype(float),
    "abs": lambda pts: np.abs(pts[..., 0]),
}


def _cmd_average(args) -> int:
    if args.field not in _FIELD_REGISTRY:
        raise ParameterError(
            f"unknown field {args.field!r}; choose from {sorted(_FIELD_REGISTRY)}")
    f = _FIELD_REGISTRY[args.field]
    grid_t = TimeGrid(args.horizon, args.steps)
    path = generate_fbm(args.hurst, 1, grid_t, args.seed)
    box = SpatialGrid.cover(path.values.T, args.width)
    t = args.t if args.t is not None else args.horizon
    field = local_time(path, box, args.s, t)
    f_grid = SpatialGrid.cover(np.array([[-args.span], [args.span]]), args.width)
    avg = average_via_local_time(f(f_grid.centers_mesh()), f_grid, field)
    est = holder_exponent(avg.values, spacing=avg.grid.h)
    if args.out:
        buf = io.StringIO()
        avg.to_csv(buf)
        Path(args.out).write_text(buf.getvalue())
        _emit(f"wrote {args.out}")
    _emit(json.dumps({"sup_norm": avg.sup_norm, "holder_exponent": est.exponent,
                      "holder_half_width": est.half_width,
                      "degenerate": est.degenerate}, sort_keys=True,
                     default=_json_default))
    return 0


_GERM_REGISTRY = {
    "additive": Germ(lambda s, t: (np.sin(3.0 * t) + t * t)
                     - (np.sin(3.0 * s) + s * s), label="additive"),
    "left-linear": Germ(lambda s, t: s * (t - s), label="left-linear"),
    "sqrt": Germ(lambda s, t: np.sqrt(t - s), label="sqrt"),
}


def _cmd_sew(args) -> int:
    if args.germ not in _GERM_REGISTRY:
        raise ParameterError(
            f"unknown germ {args.germ!r}; choose from {sorted(_GERM_REGISTRY)}")
    result = sew(_GERM_REGISTRY[args.germ], args.s, args.t, levels=args.levels)
    _emit(json.dumps(result.to_dict(), sort_keys=True, default=_json_default))
    return 0


def _cmd_admissibility(args) -> int:
    out = {"dimension": args.dim, "p": args.p,
           "hurst_max_main": hurst_admissible_main(args.dim, args.p)}
    if args.driver_hurst is not None:
        out["hurst_max_fbm_driver"] = hurst_admissible_fbm_driver(
            args.driver_hurst, args.dim, args.p)
    if args.hurst is not None:
        budget = admissible_regularity(args.hurst, args.dim, args.p,
                                       variant=args.variant)
        out["regularity_budget"] = budget.to_dict()
    _emit(json.dumps(out, sort_keys=True, default=_json_default))
    return 0


def _load_config(args) -> dict:
    overrides = {}
    if args.config:
        overrides = parse_config_text(Path(args.config).read_text())
    if getattr(args, "seed", None) is not None:
        overrides["base_seed"] = args.seed
    return resolve_config(overrides)


def _cmd_solve(args) -> int:
    cfg = _load_config(args)
    scenario, fields, _lp, _quant = build_scenario(cfg)
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        _dump_json(out_dir / "config.json", cfg)
    rows = []
    for eps in scenario.eps_seq:
        ens = solve_ensemble(scenario, fields[eps], epsilon=eps,
                             threads=args.threads)
        for row in ens.moment_table(cfg["m"]):
            rows.append({"epsilon": eps, **row})
        _emit(f"eps={eps:g}: {ens.blowup_count} of {scenario.ensemble_size} "
              f"paths flagged")
    if out_dir:
        written = _write_rows(out_dir / "moments", rows, args.format)
        _emit(f"wrote {written}")
    return 0


def _cmd_verify(args) -> int:
    cfg = _load_config(args)
    scenario, fields, lp_grid, quant_grid = build_scenario(cfg)
    eps_min = min(scenario.eps_seq)
    reference = solve_ensemble(scenario, fields[eps_min], epsilon=eps_min,
                               threads=args.threads)
    reports = []
    ratio_reports = []
    for eps in scenario.eps_seq:
        ens = (reference if eps == eps_min else
               solve_ensemble(scenario, fields[eps], epsilon=eps,
                              threads=args.threads))
        ratio_reports.append(moment_ratio(ens, cfg["m"], cfg["gamma0"]))
        reports.append(ito_isometry_check(ens, fields[eps], quant_grid,
                                          scenario.grid.horizon))
        reports.append(cross_term_check(reference, scenario.sigma, fields[eps],
                                        quant_grid, scenario.grid.horizon,
                                        epsilon=eps))
    half = scenario.grid.horizon / 2.0
    reports.extend(martingale_residuals(
        reference, fields[eps_min],
        [(half / 2.0, half), (half, scenario.grid.horizon)]))
    qv = lebesgue_vs_sewing(reference.values[0], scenario.fbm,
                            hs_norm_sq(fields[eps_min]), quant_grid,
                            (scenario.grid.horizon * 0.25,
                             scenario.grid.horizon * 0.75))
    reports.append(qv)
    trend = moment_ratio_trend(ratio_reports)
    cauchy = mollified_integral_sequence(scenario, m=cfg["m"],
                                         reference=reference, fields=fields,
                                         lp_grid=lp_grid, threads=args.threads)
    rows = [r.to_dict() for r in reports]
    passed = all(r.passed for r in reports) and trend["uniform"]
    out = {"identities": rows, "moment_trend": trend,
           "cauchy": {"eps": list(cauchy.eps_seq),
                      "diffs": list(cauchy.consecutive_diffs),
                      "sigma_gaps": list(cauchy.sigma_gaps)},
           "passed": passed}
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _dump_json(out_dir / "config.json", cfg)
        _dump_json(out_dir / "verify.json", _strip_timing(out))
        _write_rows(out_dir / "identities", rows, args.format)
        _emit(f"wrote {out_dir / 'verify.json'}")
    for r in reports:
        _emit(f"[{'PASS' if r.passed else 'FAIL'}] {r.tag}: {r.label}")
    _emit(f"moment trend uniform: {trend['uniform']}")
    return 0 if passed else 1


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    name = args.experiment or cfg.get("experiment", "E5")
    out_dir = Path(args.out) if args.out else Path(f"runs/{name.lower()}")
    return run_experiment(name, cfg, out_dir, args.threads, args.format)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbmlab",
        description="Numerics laboratory for multiplicative equations "
                    "regularized by a frozen fractional perturbation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-fbm", help="sample one driver path to CSV")
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--steps", type=int, default=1024)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--path-index", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_gen_fbm)

    p = sub.add_parser("local-time", help="binned local time of a sampled path")
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--steps", type=int, default=4096)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--width", type=float, required=True, help="bin width h")
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_local_time)

    p = sub.add_parser("average", help="averaged field along a sampled path")
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--steps", type=int, default=4096)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--width", type=float, required=True)
    p.add_argument("--field", default="heaviside",
                   help="|".join(sorted(_FIELD_REGISTRY)))
    p.add_argument("--span", type=float, default=2.0)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_average)

    p = sub.add_parser("sew", help="dyadic sewing of a registry germ")
    p.add_argument("--germ", default="left-linear",
                   help="|".join(sorted(_GERM_REGISTRY)))
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--levels", type=int, default=10)
    p.set_defaults(fn=_cmd_sew)

    p = sub.add_parser("admissibility", help="closed-form parameter thresholds")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--hurst", type=float, default=None)
    p.add_argument("--driver-hurst", type=float, default=None)
    p.add_argument("--variant", default="moment",
                   choices=("moment", "pathwise"))
    p.set_defaults(fn=_cmd_admissibility)

    for name, fn, extra in (("solve", _cmd_solve, "ensemble moments per radius"),
                            ("verify", _cmd_verify, "integral identity checks"),
                            ("run", _cmd_run, "canned experiments E0..E6")):
        p = sub.add_parser(name, help=extra)
        p.add_argument("--config", help="key=value file, # comments allowed")
        p.add_argument("--seed", type=int, default=None,
                       help="override base_seed")
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--format", default="csv", choices=("csv", "json"))
        if name == "run":
            p.add_argument("--experiment", default=None,
                           choices=sorted(_EXPERIMENTS))
        p.set_defaults(fn=fn)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ParameterError, HypothesisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BlowUpError as exc:
        print(f"blow-up abort: {exc}", file=sys.stderr)
        return 3
    except FbmLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
