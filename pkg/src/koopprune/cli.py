"""Command-line front end: ``koopprune simulate|dict|prune|bench|eigfun``.

Every command writes its outputs and a ``config.json`` echo of the resolved
parameters under ``--out``. Passing that file back with ``--config`` reruns
the command with the same parameters.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import statistics
import sys
import time
from pathlib import Path

import click
import numpy as np

from .data import DuffingParams, Dictionary, TrajectoryDataset, build_dictionary, simulate
from .edmd import (
    GridSpec,
    evaluate_eigenfunction_on_grid,
    koopman_eigenfunctions,
    lift,
    write_grid_csv,
)
from .errors import KoopPruneError, PruningError
from .pruning import METHODS, PruneConfig, PruneReport, run_pruning, tune_epsilon

log = logging.getLogger("koopprune")

THREADS_ENV = "KOOPMAN_PRUNE_THREADS"
REFERENCE_TIMINGS = {28: (1.0162, 0.1725), 103: (22.2471, 1.5325), 403: (134.6234, 6.4018)}


def _write_config(out: Path, command: str, params: dict):
    out.mkdir(parents=True, exist_ok=True)
    echo = {"command": command}
    echo.update({k: v for k, v in params.items() if k not in ("config", "out")})
    echo["out"] = str(out)
    (out / "config.json").write_text(json.dumps(echo, indent=2, sort_keys=True))


def _apply_config(ctx: click.Context, params: dict) -> dict:
    """Overlay values from ``--config`` for options not given on the command line."""
    path = params.get("config")
    if not path:
        return dict(params)
    stored = json.loads(Path(path).read_text())
    if stored.get("command") not in (None, ctx.command.name):
        raise click.UsageError(f"config was written by {stored['command']!r}, not {ctx.command.name!r}")
    merged = dict(params)
    for key, value in stored.items():
        if key in merged and ctx.get_parameter_source(key) != click.core.ParameterSource.COMMANDLINE:
            merged[key] = value
    return merged


def _resolve(ctx: click.Context, params: dict, required=("out",)) -> dict:
    p = _apply_config(ctx, params)
    missing = [name for name in required if p.get(name) is None]
    if missing:
        raise click.UsageError("missing option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return p


def _config_option(f):
    return click.option(
        "--config", "config", type=click.Path(exists=True, dir_okay=False),
        help="Rerun from a config.json echo written by an earlier run.",
    )(f)


def _load_dataset(path) -> TrajectoryDataset:
    ds = TrajectoryDataset.load(path)
    if ds.n_samples == 0:
        raise click.UsageError(f"dataset at {path} is empty")
    return ds


def _dictionary_for(ds, dict_path, poly_degree, centers, kmeans_seed, kmeans_iters):
    if dict_path:
        return Dictionary.load(dict_path, ds.dim_state)
    return build_dictionary(ds, poly_degree, centers, kmeans_seed, kmeans_iters)


def _parse_sizes(text: str):
    try:
        sizes = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"cannot parse sizes {text!r}") from exc
    if not sizes:
        raise click.BadParameter("at least one size is required")
    return sizes


def _limit_threads():
    n = os.environ.get(THREADS_ENV)
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Prune dictionaries towards Koopman-invariant subspaces."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    _limit_threads()


dict_options = [
    click.option("--dict", "dict_path", type=click.Path(exists=True, dir_okay=False), help="Dictionary JSON file."),
    click.option("--poly-degree", default=1, show_default=True, type=int),
    click.option("--centers", default=100, show_default=True, type=int, help="Number of TPS centres."),
    click.option("--kmeans-seed", default=0, show_default=True, type=int),
    click.option("--kmeans-iters", default=50, show_default=True, type=int),
]


def _with(options):
    def deco(f):
        for opt in reversed(options):
            f = opt(f)
        return f
    return deco


@main.command("simulate")
@click.option("--traj", default=500, show_default=True, type=int, help="Number of trajectories.")
@click.option("--steps", default=100, show_default=True, type=int, help="Steps per trajectory.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--dt", default=0.01, show_default=True, type=float)
@click.option("--out", type=click.Path(file_okay=False), help="Output directory (required).")
@_config_option
@click.pass_context
def cmd_simulate(ctx, **params):
    """Simulate the damped Duffing map from uniform random initial states."""
    p = _resolve(ctx, params, ("out",))
    out = Path(p["out"])
    try:
        ds = simulate(DuffingParams(dt=p["dt"]), p["traj"], p["steps"], p["seed"])
    except KoopPruneError as exc:
        raise click.ClickException(str(exc)) from exc
    ds.save(out)
    _write_config(out, "simulate", p)
    click.echo(f"wrote {ds.n_samples} snapshot pairs to {out}")


@main.command("dict")
@click.option("--data", type=click.Path(exists=True, file_okay=False), help="Dataset directory (required).")
@_with(dict_options[1:])
@click.option("--out", type=click.Path(file_okay=False), help="Output directory (required).")
@_config_option
@click.pass_context
def cmd_dict(ctx, **params):
    """Build a polynomial + thin-plate-spline dictionary from a dataset."""
    p = _resolve(ctx, params, ("data", "out"))
    out = Path(p["out"])
    ds = _load_dataset(p["data"])
    try:
        d = build_dictionary(ds, p["poly_degree"], p["centers"], p["kmeans_seed"], p["kmeans_iters"])
    except KoopPruneError as exc:
        raise click.ClickException(str(exc)) from exc
    d.save(out / "dictionary.json")
    _write_config(out, "dict", p)
    click.echo(f"wrote dictionary of size {len(d)} to {out / 'dictionary.json'}")


@main.command("prune")
@click.option("--data", type=click.Path(exists=True, file_okay=False), help="Dataset directory (required).")
@_with(dict_options)
@click.option("--method", type=click.Choice(METHODS), default="spv-rank1", show_default=True)
@click.option("--epsilon", type=float, default=0.01, show_default=True)
@click.option("--min-dim", type=int, default=1, show_default=True)
@click.option("--reorth-threshold", type=float, default=1e-8, show_default=True)
@click.option("--full-recompute-period", type=int, default=50, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), help="Output directory (required).")
@_config_option
@click.pass_context
def cmd_prune(ctx, **params):
    """Prune a dictionary until its invariance proximity is at most epsilon."""
    p = _resolve(ctx, params, ("data", "out"))
    out = Path(p["out"])
    _write_config(out, "prune", p)
    ds = _load_dataset(p["data"])
    try:
        config = PruneConfig(p["epsilon"], p["method"], p["reorth_threshold"],
                             p["full_recompute_period"], p["min_dim"])
    except KoopPruneError as exc:
        raise click.UsageError(str(exc)) from exc
    try:
        d = _dictionary_for(ds, p["dict_path"], p["poly_degree"], p["centers"], p["kmeans_seed"], p["kmeans_iters"])
        d.save(out / "dictionary.json")
        report = run_pruning(lift(ds, d), config)
    except PruningError as exc:
        if exc.report is not None:
            exc.report.save(out / "report.json")
        raise click.ClickException(str(exc)) from exc
    except KoopPruneError as exc:
        raise click.ClickException(str(exc)) from exc
    report.save(out / "report.json")
    np.savetxt(out / "final_coeffs.csv", report.final_coeffs, delimiter=",", fmt="%.17g")
    status = "succeeded" if report.succeeded else "failed"
    click.echo(f"{status}: dim {report.initial_dim} -> {report.final_dim}, delta = {report.final_delta:.6g}")
    if not report.succeeded:
        sys.exit(2)


def _prune_to_dim(lifted, method, target_dim, reps=1):
    """Time ``reps`` runs of ``method`` pruning down to ``target_dim``."""
    times = []
    report = None
    for _ in range(reps):
        t0 = time.perf_counter()
        report = run_pruning(lifted, PruneConfig(0.0, method, min_dim=target_dim))
        times.append(time.perf_counter() - t0)
    return statistics.median(times), report


def run_bench(ds, sizes, target_dim=15, reps=3, kmeans_seed=0, methods=("spv-naive", "spv-rank1")):
    """Timing sweep over dictionary sizes ``s = 3 + n_centres`` (degree-1 polynomials plus TPS).

    Returns ``(rows, errors)`` with rows ``{s, method, seconds, iterations}``.
    Sizes that cannot be built or lifted produce NaN rows and an error entry.
    """
    rows, errors = [], []
    warmed = False
    for s in sizes:
        try:
            if s - 3 < 0 or s > ds.n_samples:
                raise KoopPruneError(f"size {s} needs at least {s} samples and 3 polynomial terms")
            d = build_dictionary(ds, 1, s - 3, kmeans_seed)
            lifted = lift(ds, d)
        except KoopPruneError as exc:
            errors.append({"s": s, "error": str(exc)})
            rows.extend({"s": s, "method": m, "seconds": float("nan"), "iterations": 0} for m in methods)
            continue
        if not warmed and s > 3:
            # One-off import and allocation costs would otherwise land on the first method timed.
            for m in methods:
                run_pruning(lifted, PruneConfig(0.0, m, min_dim=s - 2))
            warmed = True
        for m in methods:
            try:
                seconds, rep = _prune_to_dim(lifted, m, min(target_dim, s), reps)
                rows.append({"s": s, "method": m, "seconds": seconds, "iterations": len(rep.iterations) - 1})
                log.info("s=%d %s: %.3fs", s, m, seconds)
            except KoopPruneError as exc:
                errors.append({"s": s, "method": m, "error": str(exc)})
                rows.append({"s": s, "method": m, "seconds": float("nan"), "iterations": 0})
    return rows, errors


def speedups(rows):
    by = {(r["s"], r["method"]): r["seconds"] for r in rows}
    out = []
    for s in sorted({r["s"] for r in rows}):
        naive, fast = by.get((s, "spv-naive")), by.get((s, "spv-rank1"))
        if naive is None or fast is None:
            continue
        out.append({"s": s, "naive_s": naive, "rank1_s": fast,
                    "speedup": naive / fast if fast and fast == fast else float("nan")})
    return out


@main.command("bench")
@click.option("--data", type=click.Path(exists=True, file_okay=False), help="Dataset directory; simulated if omitted.")
@click.option("--traj", default=100, show_default=True, type=int)
@click.option("--steps", default=100, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--sizes", default="28,103,403", show_default=True, help="Comma-separated dictionary sizes.")
@click.option("--target-dim", default=15, show_default=True, type=int)
@click.option("--reps", default=3, show_default=True, type=int, help="Repetitions; the median is reported.")
@click.option("--kmeans-seed", default=0, show_default=True, type=int)
@click.option("--plot", is_flag=True, help="Also render bench.png.")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory (required).")
@_config_option
@click.pass_context
def cmd_bench(ctx, **params):
    """Compare naive and rank-one pruning times across dictionary sizes."""
    p = _resolve(ctx, params, ("out",))
    out = Path(p["out"])
    sizes = _parse_sizes(p["sizes"])
    _write_config(out, "bench", p)
    ds = _load_dataset(p["data"]) if p["data"] else simulate(DuffingParams(), p["traj"], p["steps"], p["seed"])
    rows, errors = run_bench(ds, sizes, p["target_dim"], p["reps"], p["kmeans_seed"])
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["s", "method", "seconds", "iterations"])
        w.writeheader()
        w.writerows(rows)
    ratios = speedups(rows)
    with open(out / "speedup.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["s", "naive_s", "rank1_s", "speedup"])
        w.writeheader()
        w.writerows(ratios)
    if errors:
        (out / "bench_errors.json").write_text(json.dumps(errors, indent=2))
    if p["plot"]:
        from .plotting import plot_bench

        plot_bench(ratios, out / "bench.png", reference=REFERENCE_TIMINGS)
    for r in ratios:
        if r["speedup"] != r["speedup"]:
            continue
        click.echo(f"s={r['s']}: naive {r['naive_s']:.3f}s, rank-1 {r['rank1_s']:.3f}s, speedup {r['speedup']:.1f}x")
    for e in errors:
        click.echo(f"s={e['s']}: error: {e['error']}", err=True)


def eigenfunction_grids(lifted, dictionary, coeffs, grid):
    """Leading non-trivial eigenfunction grids for the full and the pruned subspace."""
    out = {}
    for name, sub in (("initial", lifted), ("pruned", lifted.restrict(coeffs))):
        ef = koopman_eigenfunctions(sub)
        if ef.leading_index is None:
            raise KoopPruneError(f"{name} subspace has no non-trivial eigenfunction")
        values = evaluate_eigenfunction_on_grid(ef, ef.leading_index, dictionary, grid)
        out[name] = (ef, values)
    return out


@main.command("eigfun")
@click.option("--data", type=click.Path(exists=True, file_okay=False), help="Dataset directory (required).")
@_with(dict_options)
@click.option("--method", type=click.Choice(METHODS), default="spv-rank1", show_default=True)
@click.option("--epsilon", type=float, default=None, help="Pruning tolerance.")
@click.option("--target-dim", type=int, default=None, help="Tune epsilon so pruning stops at this size.")
@click.option("--report", "report_path", type=click.Path(exists=True, dir_okay=False),
              help="Use the final subspace of an existing prune report.")
@click.option("--grid", default="100x100", show_default=True)
@click.option("--box", default="-2,2,-2,2", show_default=True)
@click.option("--plot", is_flag=True, help="Also render eigenfunctions.png.")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory (required).")
@_config_option
@click.pass_context
def cmd_eigfun(ctx, **params):
    """Export leading non-trivial eigenfunctions before and after pruning."""
    p = _resolve(ctx, params, ("data", "out"))
    out = Path(p["out"])
    grid = GridSpec.parse(p["grid"], p["box"])
    if sum(v is not None for v in (p["epsilon"], p["target_dim"], p["report_path"])) != 1:
        raise click.UsageError("give exactly one of --epsilon, --target-dim, --report")
    _write_config(out, "eigfun", p)
    ds = _load_dataset(p["data"])
    try:
        d = _dictionary_for(ds, p["dict_path"], p["poly_degree"], p["centers"], p["kmeans_seed"], p["kmeans_iters"])
        d.save(out / "dictionary.json")
        lifted = lift(ds, d)
        if p["report_path"]:
            report = PruneReport.load(p["report_path"])
        elif p["epsilon"] is not None:
            report = run_pruning(lifted, PruneConfig(p["epsilon"], p["method"]))
        else:
            report = prune_to_target(lifted, p["method"], p["target_dim"])
        report.save(out / "report.json")
        grids = eigenfunction_grids(lifted, d, report.final_coeffs, grid)
    except PruningError as exc:
        if exc.report is not None:
            exc.report.save(out / "report.json")
        raise click.ClickException(str(exc)) from exc
    except KoopPruneError as exc:
        raise click.ClickException(str(exc)) from exc
    summary = {}
    for name, (ef, values) in grids.items():
        write_grid_csv(out / f"grid_{name}.csv", grid, values)
        lam = ef.eigenvalues[ef.leading_index]
        summary[name] = {"dim": int(ef.coeff_vectors.shape[0]), "eigenvalue_re": float(lam.real),
                         "eigenvalue_im": float(lam.imag), "warnings": ef.warnings}
    (out / "eigenvalues.json").write_text(json.dumps(summary, indent=2))
    if p["plot"]:
        from .plotting import plot_eigenfunctions

        plot_eigenfunctions(grid, grids["initial"][1], grids["pruned"][1], out / "eigenfunctions.png",
                            titles=(f"s = {summary['initial']['dim']}", f"s = {summary['pruned']['dim']}"))
    click.echo(f"pruned {report.initial_dim} -> {report.final_dim} (delta {report.final_delta:.4g}); grids in {out}")


def prune_to_target(lifted, method, target_dim) -> PruneReport:
    """Prune with the tolerance tuned so the run stops at ``target_dim``.

    Falls back to the run truncated at ``target_dim`` when no tolerance
    stops exactly there.
    """
    probe = run_pruning(lifted, PruneConfig(0.0, method, min_dim=target_dim))
    eps = tune_epsilon(probe.deltas, probe.dims, target_dim)
    if eps is None or not eps < 1:
        log.warning("no tolerance stops exactly at dim %d; using the truncated run", target_dim)
        return probe
    return run_pruning(lifted, PruneConfig(eps, method))


if __name__ == "__main__":
    main()
