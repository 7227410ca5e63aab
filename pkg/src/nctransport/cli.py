"""Command-line scenarios.

    nctransport <scenario> [--config PATH] [--out DIR] [--seed N] [--histories N]
                           [--ms2 X] [--sigmabar X] [--c X] [--workers N] [--set key=value ...]

Exit codes: 0 success, 1 tolerance failure, 2 config error, 3 I/O error.
Every CSV starts with a ``#`` line holding the full configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import diffusion_oracle as oracle
from .config import SCENARIOS, ConfigError, ScenarioConfig, load_config
from .integral_solver import (
    ConvergenceError,
    balance,
    default_grid,
    solve_collision_density,
)
from .mc_transport import default_shell_edges, run_histories, scalar_flux_estimate
from .pathlen import (
    ClassicalExponential,
    DiffusionMatched,
    DomainError,
    PathLengthLaw,
    Tabulated,
    load_tabulated,
    make_diffusion_matched,
    quadrature_moments,
)
from .problem import PointIsotropicSource, TransportProblem
from .quadrature import QuadratureError

log = logging.getLogger("nctransport")

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


class OutputError(OSError):
    pass


def build_law(cfg: ScenarioConfig) -> PathLengthLaw:
    if cfg.law == "diffusion_matched":
        return make_diffusion_matched(cfg.ms2)
    if cfg.law == "classical":
        return ClassicalExponential(cfg.classical_sigma_t)
    return load_tabulated(cfg.table)


def build_problem(cfg: ScenarioConfig) -> TransportProblem:
    return TransportProblem(build_law(cfg), cfg.c, PointIsotropicSource(cfg.strength))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12e}" if math.isfinite(v) else "nan"
    return str(v)


def write_csv(path: Path, cfg: ScenarioConfig, columns, rows) -> Path:
    buf = io.StringIO()
    buf.write(f"# nctransport {cfg.scenario}: {cfg.one_line()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return write_text(path, buf.getvalue())


def write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from None
    return path


# --------------------------------------------------------------------------
# Scenarios; each returns (exit_code, list of written paths)
# --------------------------------------------------------------------------

def figure_laws(cfg: ScenarioConfig) -> dict[str, PathLengthLaw]:
    """Classical transport, classical diffusion and nonclassical diffusion laws."""
    return {
        "classical_transport": ClassicalExponential(cfg.sigmabar),
        "classical_diffusion": make_diffusion_matched(2.0 / cfg.sigmabar**2),
        "nonclassical_diffusion": make_diffusion_matched(cfg.ms2),
    }


def run_curves(cfg: ScenarioConfig):
    out = Path(cfg.out)
    s = np.linspace(0.0, cfg.curve_s_max, cfg.curve_points)
    laws = figure_laws(cfg)
    names = list(laws)
    sig = [np.asarray(laws[n].sigma_t_of_s(s)) for n in names]
    pdf = [np.asarray(laws[n].pdf(s)) for n in names]
    paths = [
        write_csv(out / "sigma_t_curves.csv", cfg, ["s", *names], zip(s, *sig)),
        write_csv(out / "pdf_curves.csv", cfg, ["s", *names], zip(s, *pdf)),
    ]
    for n, v in zip(names, sig):
        print(f"sigma_t({cfg.curve_s_max:g}) {n}: {v[-1]:.6f}")
    return EXIT_OK, paths


def closed_form_moments(law: PathLengthLaw) -> tuple[float, float, float]:
    if isinstance(law, Tabulated):
        return tuple(law.exact_moment(k) for k in (0, 1, 2))
    m = law.moments()
    return 1.0, m.first, m.second


def run_moments(cfg: ScenarioConfig):
    law = build_law(cfg)
    exact = closed_form_moments(law)
    rows = []
    failed = False
    try:
        quad = quadrature_moments(law)
        errors = [None, None, None]
    except QuadratureError as exc:
        quad = (math.nan,) * 3
        errors = [str(exc)] * 3
    for name, q, e, err in zip(("int_p", "int_s_p", "int_s2_p"), quad, exact, errors):
        diff = abs(q - e)
        ok = err is None and diff <= cfg.moments_tol
        failed |= not ok
        status = "ok" if ok else (f"error: {err}" if err else "tolerance exceeded")
        rows.append((cfg.law, name, q, e, diff, cfg.moments_tol, status))
        print(f"{name:9s} quadrature={q:.12f} closed_form={e:.12f} |diff|={diff:.2e} {status}")
    path = write_csv(Path(cfg.out) / "moments.csv", cfg,
                     ["law", "quantity", "quadrature", "closed_form", "abs_diff", "tolerance", "status"], rows)
    return (EXIT_TOLERANCE if failed else EXIT_OK), [path]


def _mc_tally(cfg: ScenarioConfig, problem: TransportProblem):
    edges = default_shell_edges(problem, cfg.shells, cfg.r_max)
    start = time.perf_counter()
    tally = run_histories(problem, edges, cfg.histories, cfg.seed, workers=cfg.workers,
                          implicit_capture=cfg.implicit_capture, track_length=cfg.track_length)
    log.info("%d histories in %.1f s", cfg.histories, time.perf_counter() - start)
    return tally


def run_mc(cfg: ScenarioConfig):
    problem = build_problem(cfg)
    tally = _mc_tally(cfg, problem)
    out = Path(cfg.out)
    header = f"nctransport {cfg.scenario}: {cfg.one_line()}"
    paths = [write_text(out / "mc_tally.csv", tally.to_csv(header))]
    surrogate = problem.law.moments().first
    phi_s = scalar_flux_estimate(tally, surrogate).values
    phi_t = scalar_flux_estimate(tally, cfg.true_mean_free_path).values
    cols = ["r_mid", "phi0_surrogate", "phi0_true", "rel_std_err"]
    data = [tally.r_mid, phi_s, phi_t, tally.rel_std_err]
    if cfg.track_length:
        cols.append("phi0_track_length")
        data.append(tally.track_length_flux())
    paths.append(write_csv(out / "mc_flux.csv", cfg, cols, zip(*data)))
    print(f"mean collisions per history: {tally.mean_collisions:.4f} +- {tally.mean_collisions_std_err:.4f}"
          f" (expected {1.0 / (1.0 - cfg.c):.4f})")
    print(f"collisions beyond r_max: {tally.overflow}")
    return EXIT_OK, paths


def _solve(cfg: ScenarioConfig, problem: TransportProblem):
    grid = default_grid(problem.law, problem.c, cfg.grid_nodes)
    start = time.perf_counter()
    field = solve_collision_density(problem, grid, cfg.tol, cfg.max_iters)
    log.info("source iteration: %d sweeps, %.1f s", field.iterations, time.perf_counter() - start)
    return field


def run_integral(cfg: ScenarioConfig):
    problem = build_problem(cfg)
    field = _solve(cfg, problem)
    surrogate = problem.law.moments().first
    rows = zip(field.r, field.values, surrogate * field.values, cfg.true_mean_free_path * field.values)
    path = write_csv(Path(cfg.out) / "integral_solution.csv", cfg, ["r", "f", "phi0_surrogate", "phi0_true"], rows)
    kappa = math.sqrt(6.0 * (1.0 - cfg.c) / problem.law.moments().second)
    print(f"sweeps: {field.iterations}; balance (1-c) int f dV / Q = "
          f"{balance(field, cfg.c, kappa) / max(cfg.strength, 1e-300):.6f}")
    return EXIT_OK, [path]


def run_compare(cfg: ScenarioConfig):
    problem = build_problem(cfg)
    law = problem.law
    assert isinstance(law, DiffusionMatched)
    params = oracle.DiffusionParams(cfg.true_mean_free_path, cfg.ms2, cfg.c)
    q = cfg.strength
    out = Path(cfg.out)

    field = _solve(cfg, problem)
    f_or = oracle.point_source_collision_density(params, q, field.r)
    with np.errstate(invalid="ignore", divide="ignore"):
        int_dev = np.abs(field.values / f_or - 1.0)
    in_range = (field.r >= cfg.integral_r_min) & (field.r <= cfg.integral_r_max)
    int_max = float(np.max(int_dev[in_range])) if in_range.any() else math.nan
    bal = balance(field, cfg.c, params.kappa) / q if q > 0 else math.nan

    tally = _mc_tally(cfg, problem)
    f_mc = tally.estimate
    se = tally.std_err
    rel = tally.rel_std_err
    f_shell = oracle.shell_average_collision_density(params, q, tally.r_lo, tally.r_hi)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = (f_mc - f_shell) / se
    mids = tally.r_mid
    checked = (mids >= cfg.mc_r_min) & (mids <= cfg.mc_r_max) & (rel < cfg.mc_max_rel_err)
    mc_max_z = float(np.max(np.abs(z[checked]))) if checked.any() else math.nan
    inside = (mids >= field.r[0]) & (mids <= field.r[-1])
    f_int_mid = np.full_like(mids, math.nan)
    f_int_mid[inside] = field.at(mids[inside])

    header = f"nctransport {cfg.scenario}: {cfg.one_line()}"
    paths = [write_text(out / "mc_tally.csv", tally.to_csv(header))]
    paths.append(write_csv(
        out / "compare_shells.csv", cfg,
        ["r_mid", "r_lo", "r_hi", "f_mc", "mc_std_err", "f_oracle_shell", "z_score", "checked",
         "f_integral_mid", "f_oracle_mid"],
        zip(mids, tally.r_lo, tally.r_hi, f_mc, se, f_shell, z, checked, f_int_mid,
            oracle.point_source_collision_density(params, q, mids)),
    ))
    paths.append(write_csv(
        out / "compare_integral.csv", cfg, ["r", "f_integral", "f_oracle", "rel_dev", "checked"],
        zip(field.r, field.values, f_or, int_dev, in_range),
    ))

    int_ok = int_max < cfg.integral_rtol
    bal_ok = abs(bal - 1.0) < 0.005
    mc_ok = checked.any() and mc_max_z <= cfg.mc_sigma
    expected = 1.0 / (1.0 - cfg.c)
    coll_se = tally.mean_collisions_std_err
    coll_dev = abs(tally.mean_collisions - expected)
    coll_z = coll_dev / coll_se if coll_se > 0 else (0.0 if coll_dev < 1e-12 else math.inf)
    coll_ok = coll_z <= 4.0
    summary = [
        ("integral_vs_oracle_max_rel_dev", int_max, cfg.integral_rtol, int_ok),
        ("integral_balance", bal, 0.005, bal_ok),
        ("mc_vs_oracle_max_abs_z", mc_max_z, cfg.mc_sigma, mc_ok),
        ("mc_checked_shells", int(checked.sum()), 1, bool(checked.any())),
        ("mc_mean_collisions_abs_z", coll_z, 4.0, coll_ok),
    ]
    paths.append(write_csv(out / "compare_summary.csv", cfg, ["check", "value", "tolerance", "pass"], summary))
    for name, value, tol, ok in summary:
        print(f"{'PASS' if ok else 'FAIL'} {name} = {_fmt(value)} (tolerance {_fmt(tol)})")
    return (EXIT_OK if int_ok and bal_ok and mc_ok and coll_ok else EXIT_TOLERANCE), paths


RUNNERS = {
    "curves": run_curves,
    "moments": run_moments,
    "mc": run_mc,
    "integral": run_integral,
    "compare": run_compare,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nctransport", description=__doc__.split("\n\n")[0])
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--histories", type=int)
    p.add_argument("--ms2", type=float, help="mean-square free path <s^2>")
    p.add_argument("--sigmabar", type=float, help="atomic-mix total cross section")
    p.add_argument("--c", type=float, help="scattering ratio")
    p.add_argument("--workers", type=int, help="Monte Carlo worker threads")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_CONFIG
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    for key in ("out", "seed", "histories", "ms2", "sigmabar", "c", "workers"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    overrides["scenario"] = args.scenario
    try:
        cfg = load_config(args.config, overrides)
        if cfg.law == "tabulated":
            load_tabulated(cfg.table)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: cannot read table {cfg.table}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, paths = RUNNERS[cfg.scenario](cfg)
    except OutputError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConvergenceError as exc:
        print(f"tolerance failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    for path in paths:
        print(f"wrote {path}")
    return code


if __name__ == "__main__":
    sys.exit(main())
