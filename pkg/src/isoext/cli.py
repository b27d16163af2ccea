"""Command line front end.

Exit codes: 0 success, 2 invalid input or configuration, 3 mathematical
failure (condition margin, radius, amplitude domain), 4 stall or exhausted
escalation of the iteration.
"""
from __future__ import annotations

import csv
import functools
import json
import math
import warnings
from pathlib import Path

import click
import numpy as np

from .convex_integration import ConvexIntegrationError, StepParameterError, calibrate
from .corrugation import CorrugationDomainError, CorrugationProfile, corrugation_table
from .decomposition import (DecompositionError, balanced_frame, decompose_near_identity,
                            nash_frame, standard_frame)
from .demos import bump_state, stage_scaling, step_scaling
from .extension import (BoundaryDataError, ConditionError, ResolutionError, check_condition,
                        extension_sweep, straight_line_data, strip_data)
from .fields import FieldError
from .io import ConfigError, RunConfig, load_boundary_data, load_state, save_state, write_obj
from .iteration import EscalationExhausted, Schedule, ScheduleError, StallError, run

EXIT_VALIDATION, EXIT_MATH, EXIT_STALL = 2, 3, 4

_FRAMES = {"balanced": balanced_frame, "nash": nash_frame, "standard": standard_frame}


def _fail(code: int, message: str):
    click.echo(message, err=True)
    raise SystemExit(code)


def _finite(x):
    """Replace non-finite floats by None so the output stays strict JSON."""
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, (float, np.floating)) and not math.isfinite(x):
        return None
    return x


def _write_summary(path: Path, summary: dict) -> None:
    path.write_text(json.dumps(_finite(summary), indent=2, sort_keys=True, default=_jsonable,
                               allow_nan=False))


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def exit_codes(fn):
    """Map library exceptions to the documented exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, BoundaryDataError, ScheduleError, FieldError,
                StepParameterError) as err:
            _fail(EXIT_VALIDATION, f"invalid input: {err}")
        except (StallError, EscalationExhausted) as err:
            out = getattr(err, "out_dir", None)
            if out is not None and err.report is not None:
                err.report.write_csv(out / "report.csv")
                _write_summary(out / "summary.json", err.report.summary())
            _fail(EXIT_STALL, f"iteration halted: {err}")
        except (ConvexIntegrationError, DecompositionError, ResolutionError,
                CorrugationDomainError) as err:
            _fail(EXIT_MATH, f"mathematical failure: {err}")
    return wrapper


def _write_rows(path, rows, keys) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)


@click.group()
@click.version_option(package_name="isoext")
def main():
    """One-sided C^{1,alpha} isometric extension by convex integration."""


# ---------------------------------------------------------------- corrugation

@main.command("demo-corrugation")
@click.option("--out", type=click.Path(dir_okay=False), default="corrugation.csv", show_default=True)
@click.option("--ns", type=click.IntRange(2), default=64, show_default=True)
@click.option("--nt", type=click.IntRange(2), default=256, show_default=True)
@click.option("--delta-star", type=click.FloatRange(min=0, min_open=True), default=1.0,
              show_default=True, help="Upper end of the amplitude range.")
@exit_codes
def demo_corrugation(out, ns, nt, delta_star):
    """Tabulate (s, t, Gamma1, Gamma2, circle-identity residual)."""
    table = corrugation_table(CorrugationProfile(delta_star=delta_star), ns, nt)
    np.savetxt(out, table, delimiter=",", header="s,t,gamma1,gamma2,residual", comments="",
               fmt="%.17g")
    click.echo(f"{len(table)} rows, max residual {np.abs(table[:, 4]).max():.3e} -> {out}")


# ---------------------------------------------------------------- decomposition

@main.command()
@click.option("--n", "dim", type=click.IntRange(2), default=2, show_default=True)
@click.option("--frame", type=click.Choice(sorted(_FRAMES)), default="balanced", show_default=True)
@click.option("--matrix", default=None,
              help="Symmetric matrix as rows separated by ';', e.g. '1.1,0.05;0.05,0.95'.")
@click.option("--samples", type=click.IntRange(0), default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@exit_codes
def decompose(dim, frame, matrix, samples, seed, out):
    """Expand P near Id as a sum of a_k^2 nu_k nu_k^T."""
    fr = _FRAMES[frame](dim)
    if matrix is not None:
        try:
            P = np.array([[float(x) for x in row.split(",")] for row in matrix.split(";")])
        except ValueError as err:
            raise ConfigError(f"--matrix: {err}") from err
        if P.shape != (dim, dim) or not np.allclose(P, P.T):
            raise ConfigError(f"--matrix must be a symmetric {dim}x{dim} matrix")
        a = decompose_near_identity(P, fr)
        click.echo(json.dumps({"directions": fr.directions.tolist(), "a": a.tolist(),
                               "r0": fr.r0}, indent=2))
        return
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(samples):
        B = rng.standard_normal((dim, dim))
        B = B + B.T
        B *= rng.uniform(0.0, fr.r0) / np.linalg.norm(B, 2)
        P = np.eye(dim) + B
        c = fr.coefficients(P)
        rec = fr.reconstruct(c)
        err = float(np.linalg.norm(rec - P) / np.linalg.norm(P))
        rows.append({"sample": i, "min_coefficient": float(c.min()), "relative_error": err})
    worst = max((r["relative_error"] for r in rows), default=0.0)
    if out:
        _write_rows(out, rows, ["sample", "min_coefficient", "relative_error"])
    click.echo(f"n={dim} frame={frame} r0={fr.r0:.6g}: {samples} samples, "
               f"max relative reconstruction error {worst:.3e}")


# ---------------------------------------------------------------- steps and stages

@main.command("step-demo")
@click.option("--resolution", type=click.IntRange(9), default=257, show_default=True)
@click.option("--lam", "lams", type=float, multiple=True, default=(64.0, 128.0, 256.0),
              show_default=True)
@click.option("--amplitude", type=float, default=0.2, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@exit_codes
def step_demo(resolution, lams, amplitude, out):
    """Residual of one step on a flat square against the frequency."""
    res = step_scaling(resolution, lams, amplitude)
    if out:
        _write_rows(out, res.rows, list(res.rows[0]))
    for r in res.rows:
        click.echo(f"lam={r['lam']:g} residual={r['residual']:.4e}")
    click.echo(f"log-log slope {res.slope:.3f}")


@main.command("stage-demo")
@click.option("--resolution", type=click.IntRange(9), default=257, show_default=True)
@click.option("--K", "Ks", type=float, multiple=True, default=(8.0, 16.0, 32.0), show_default=True)
@click.option("--rho", type=float, default=0.2, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@exit_codes
def stage_demo(resolution, Ks, rho, out):
    """Error of the conformal stage against the stage ratio K."""
    res = stage_scaling(resolution, Ks, rho)
    if out:
        _write_rows(out, res.rows, ["K", "E_inner", "E_max"])
    for r in res.rows:
        click.echo(f"K={r['K']:g} E={r['E_inner']:.4e}")
    click.echo(f"log-log slope {res.slope:.3f}")


@main.command("calibrate")
@click.option("--n", "dim", type=click.IntRange(2), default=2, show_default=True)
@click.option("--resolution", type=click.IntRange(9), default=257, show_default=True)
@click.option("--gamma", type=float, default=2.0, show_default=True)
@click.option("--M", "M", type=float, default=1.0, show_default=True)
@click.option("--cache", type=click.Path(dir_okay=False), default="calibration.json",
              show_default=True)
@exit_codes
def calibrate_cmd(dim, resolution, gamma, M, cache):
    """Frequency constants c0, c1 and stage ratio K0, cached per (n, grid, gamma, M)."""
    cal = calibrate(dim, resolution, gamma, M, cache_path=cache)
    click.echo(json.dumps({"c0": cal.c0, "c1": cal.c1, "K0": cal.K0}))


# ---------------------------------------------------------------- pipeline

def _config(path, **overrides) -> RunConfig:
    cfg = RunConfig.load(path) if path else RunConfig()
    for dotted, value in overrides.items():
        if value is None or value == ():
            continue
        section, _, name = dotted.partition("__")
        target = getattr(cfg, section) if name else cfg
        setattr(target, name or section, list(value) if isinstance(value, tuple) else value)
    return cfg.validate()


def _boundary(cfg: RunConfig):
    b, g = cfg.boundary, cfg.grid
    if b.path:
        return load_boundary_data(b.path)
    if b.demo == "line":
        return straight_line_data(tuple(g.resolution), g.half_width, g.depth)
    return strip_data(b.radius, tuple(g.resolution), g.half_width, g.depth)


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--demo", type=click.Choice(["strip", "line"]), default=None)
@click.option("--data", "path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Boundary data archive (.npz).")
@click.option("--radius", type=float, default=None)
@click.option("--resolution", type=int, nargs=2, default=None)
@click.option("--K", "Ks", type=float, multiple=True, help="Stage ratios to try in order.")
@click.option("--r-max", type=float, default=1.0, show_default=True,
              help="Accept the first K with sup |G| <= r-max.")
@click.option("--out", type=click.Path(file_okay=False), default=None)
@exit_codes
def extend(config, demo, path, radius, resolution, Ks, r_max, out):
    """Adapted short extension of boundary data; writes bundle, margins and mesh."""
    cfg = _config(config, boundary__demo=demo, boundary__path=path, boundary__radius=radius,
                  grid__resolution=resolution, calibration__K_sweep=Ks, output=out)
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    data = _boundary(cfg)
    margin = check_condition(data)
    report = {"condition": margin.to_dict()}
    try:
        res = extension_sweep(data, cfg.calibration.K_sweep, r_max)
    except ConditionError as err:
        _write_summary(outdir / "margins.json", report)
        _fail(EXIT_MATH, str(err))
    except ConvexIntegrationError as err:
        report["sweep"] = getattr(err, "reports", [])
        _write_summary(outdir / "margins.json", report)
        raise
    report["definition"] = res.report
    save_state(outdir / "state", res.state, {"K": res.K})
    _write_summary(outdir / "margins.json", report)
    if cfg.meshes and data.grid.n == 2:
        write_obj(outdir / "extension.obj", res.state.v)
    r = res.report
    click.echo(f"margin {margin.margin:.4g}; K={res.K:g} r={r['r']:.4g} M={r['M']:.4g} "
               f"boundary trace {r['boundary_trace']:.3g} -> {outdir}")


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--state", "state_dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Adapted state bundle written by 'extend'.")
@click.option("--demo-bump", type=float, default=None,
              help="Use a flat square with a bump deficit of this height instead of a bundle.")
@click.option("--a", "a", type=float, default=None)
@click.option("--A", "A", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--eps0", type=float, default=None)
@click.option("--tol", type=float, default=None)
@click.option("--q-max", type=int, default=None)
@click.option("--K", "K", type=float, default=None)
@click.option("--strict/--no-strict", default=None)
@click.option("--meshes/--no-meshes", default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@exit_codes
def iterate(config, state_dir, demo_bump, a, A, alpha, eps0, tol, q_max, K, strict, meshes, out):
    """Iterate an adapted short state towards an isometry."""
    cfg = _config(config, schedule__a=a, schedule__A=A, schedule__alpha=alpha,
                  schedule__eps0=eps0, schedule__tol=tol, schedule__Q_max=q_max, schedule__K=K,
                  schedule__strict=strict, meshes=meshes, output=out)
    if (state_dir is None) == (demo_bump is None):
        raise ConfigError("give exactly one of --state and --demo-bump")
    state0 = load_state(state_dir) if state_dir else bump_state(demo_bump)
    s = cfg.schedule
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sched = Schedule.for_state(state0, s.a, s.A, s.alpha, s.eps0)
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        result = run(state0, sched, int(s.Q_max), s.tol, s.K, strict=s.strict,
                     max_escalations=s.max_escalations, keep_states=cfg.meshes)
    except (StallError, EscalationExhausted) as err:
        err.out_dir = outdir
        raise
    report = result.report
    report.write_csv(outdir / "report.csv")
    summary = report.summary()
    summary["epsilon_bound"] = report.distance_bound
    _write_summary(outdir / "summary.json", summary)
    save_state(outdir / "final", result.state)
    if cfg.meshes and state0.v.grid.n == 2:
        for q, st in enumerate(result.states):
            write_obj(outdir / f"iterate_{q:02d}.obj", st.v)
    d = summary["final_defect"]
    click.echo(f"{len(report.rows)} iterates, stop: {report.stop_reason}; "
               f"final defect {d:.4e}" + ("" if math.isfinite(d) else " (not finite)"))


if __name__ == "__main__":  # pragma: no cover
    main()
