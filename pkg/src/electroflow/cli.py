"""Command line interface: solve, validate, bench and inspect."""

from __future__ import annotations

import csv
import io
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import click
import numpy as np

from .config import ALGORITHMS, MODES, RunConfig, load_config
from .errors import ElectroflowError, InfeasibleError, ParseError
from .generators import FAMILIES, GeneratorSpec, generate_instance, generate_suite
from .graph import FlowInstance, RngStream, components, format_flow, read_dimacs
from .ipm import SolveResult, min_cost_flow
from .oracle import is_feasible_integral, ssp_min_cost_flow

EXIT_OK, EXIT_MISMATCH, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 1, 2, 3, 4

BENCH_FIELDS = ["config_hash", "family", "n", "m", "seed", "k", "mode", "algorithm", "cost", "oracle_cost",
                "match", "multisteps", "rounds", "newton_iterations", "checker_solves", "locator_inits",
                "locator_solve", "locator_update", "locator_batch_update", "locator_add_terminal",
                "z_total", "z_max", "z_mean", "recall"]
TIMING_FIELDS = ["t_solve", "t_oracle"]


def thread_count() -> int:
    raw = os.environ.get("ELECTROFLOW_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _fail(code: int, kind: str, message: str):
    click.echo(f"error: {kind}: {message}", err=True)
    sys.exit(code)


def _load_instance(path: str) -> FlowInstance:
    try:
        return read_dimacs(path)
    except ParseError as exc:
        _fail(EXIT_INPUT, "parse", f"{path}: {exc}")
    except OSError as exc:
        _fail(EXIT_INPUT, "io", f"{path}: {exc.strerror or exc}")


def run_solver(inst: FlowInstance, cfg: RunConfig, skip_rounding: bool = False,
               measure_recall: bool = False) -> SolveResult:
    if cfg.algorithm == "ssp":
        res = ssp_min_cost_flow(inst)
        if not res.feasible:
            raise InfeasibleError("demands cannot be routed within the capacities")
        return SolveResult(res.flow, res.cost, 0, 0.0)
    params = cfg.step_params()
    if skip_rounding:
        params.skip_rounding = True
    return min_cost_flow(inst, params, seed=cfg.seed, measure_recall=measure_recall)


def _config_header(cfg: RunConfig) -> str:
    return "".join(f"# {line}\n" for line in cfg.to_text().splitlines()) + f"# config_hash={cfg.config_hash}\n"


def _resolve(config_path, **overrides) -> RunConfig:
    base = load_config(config_path) if config_path else RunConfig()
    try:
        return base.with_overrides(**overrides)
    except ValueError as exc:
        _fail(EXIT_INPUT, "config", str(exc))


_common = [
    click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="key=value config file."),
    click.option("--seed", type=int, help="Random seed."),
    click.option("--mode", type=click.Choice(MODES), help="Parameter mode."),
    click.option("--k", type=int, help="IPM steps per MultiStep."),
    click.option("--beta", type=float, help="Congestion-reduction subset density."),
    click.option("--alpha", type=float, help="Resistance window ratio."),
    click.option("--eps", type=float, help="Congestion threshold."),
    click.option("--algorithm", type=click.Choice(ALGORITHMS), help="Solver."),
]


def common_options(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Min-cost flow by an interior point method with localized electrical flows."""


@main.command()
@click.argument("instance", type=click.Path(dir_okay=False))
@common_options
@click.option("--out", type=click.Path(dir_okay=False), help="Write the flow here instead of stdout.")
@click.option("--log", "log_path", type=click.Path(dir_okay=False), help="Write the per-MultiStep CSV log here.")
@click.option("--timings", is_flag=True, help="Include wall-clock columns in the log.")
def solve(instance, config_path, seed, mode, k, beta, alpha, eps, algorithm, out, log_path, timings):
    """Solve a DIMACS min-cost flow instance."""
    cfg = _resolve(config_path, seed=seed, mode=mode, k=k, beta=beta, alpha=alpha, eps=eps,
                   algorithm=algorithm, instance=instance, out=out, log=log_path)
    inst = _load_instance(instance)
    try:
        res = run_solver(inst, cfg)
    except InfeasibleError as exc:
        _fail(EXIT_INFEASIBLE, "infeasible", str(exc))
    except ElectroflowError as exc:
        _fail(EXIT_SOLVER, "solver", f"{type(exc).__name__}: {exc}")
    text = format_flow(inst, res.flow)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)
    if log_path:
        with open(log_path, "w") as fh:
            fh.write(_config_header(cfg))
            fh.write(res.log_csv(timings=timings))


@main.command()
@click.argument("instances", nargs=-1, type=click.Path(dir_okay=False))
@common_options
@click.option("--family", type=click.Choice(FAMILIES), help="Generate instances from this family.")
@click.option("--n", type=int, help="Vertices per generated instance.")
@click.option("--m", type=int, help="Arcs per generated instance.")
@click.option("--U", "U", type=int, help="Maximum capacity.")
@click.option("--W", "W", type=int, help="Maximum cost.")
@click.option("--count", type=int, help="Number of generated instances.")
@click.option("--skip-rounding", is_flag=True, help="Fault injection: return the fractional IPM flow.")
def validate(instances, config_path, seed, mode, k, beta, alpha, eps, algorithm, family, n, m, U, W, count,
             skip_rounding):
    """Compare the IPM against the exact oracle on files or generated instances."""
    cfg = _resolve(config_path, seed=seed, mode=mode, k=k, beta=beta, alpha=alpha, eps=eps,
                   algorithm=algorithm, family=family, n=n, m=m, U=U, W=W, count=count)
    if instances:
        named = [(p, _load_instance(p)) for p in instances]
    else:
        named = [(f"{cfg.generator_spec().family}#{i}", inst) for i, inst in enumerate(generate_suite(cfg.generator_spec()))]
    bad = []
    click.echo(f"config_hash={cfg.config_hash}")
    for name, inst in named:
        oracle = ssp_min_cost_flow(inst)
        try:
            res = run_solver(inst, cfg, skip_rounding=skip_rounding)
            cost, flow, status = res.cost, res.flow, "ok"
        except InfeasibleError:
            cost, flow, status = None, None, "infeasible"
        except ElectroflowError as exc:
            cost, flow, status = None, None, f"error:{type(exc).__name__}"
        if not oracle.feasible:
            match = status == "infeasible"
            feasible = integral = False
        else:
            integral = flow is not None and bool(np.all(np.mod(flow, 1) == 0))
            feasible = flow is not None and is_feasible_integral(inst, flow)
            match = status == "ok" and integral and feasible and cost == oracle.cost
        click.echo(f"{name} seed={cfg.seed} status={status} cost={cost} oracle={oracle.cost} "
                   f"feasible={'yes' if feasible else 'no'} integral={'yes' if integral else 'no'} "
                   f"match={'yes' if match else 'no'}")
        if not match:
            bad.append(name)
    if bad:
        click.echo(f"MISMATCH on {len(bad)} of {len(named)}: {', '.join(bad)} (seed {cfg.seed})", err=True)
        sys.exit(EXIT_MISMATCH)
    click.echo(f"all {len(named)} instances match")


def _parse_sizes(text: str) -> list[tuple[int, int]]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            a, b = part.split(":")
            out.append((int(a), int(b)))
        except ValueError:
            raise click.BadParameter(f"size {part!r} is not of the form n:m") from None
    return out


def _bench_one(job):
    cfg, family, n, m, U, W, idx, timings = job
    seed = cfg.seed + idx
    inst = generate_instance(family, n, m, U, W, RngStream(seed, f"bench/{family}/{n}/{m}"))
    run_cfg = cfg.with_overrides(seed=seed)
    t0 = time.perf_counter()
    res = run_solver(inst, run_cfg, measure_recall=cfg.algorithm == "ipm-localized")
    t1 = time.perf_counter()
    oracle = ssp_min_cost_flow(inst)
    t2 = time.perf_counter()
    c = res.counters
    rounds = c.get("rounds", 0)
    total = c.get("recall_total", 0)
    row = {
        "config_hash": cfg.config_hash, "family": family, "n": inst.n, "m": inst.m, "seed": seed,
        "k": cfg.step_params().k, "mode": cfg.mode, "algorithm": cfg.algorithm, "cost": res.cost,
        "oracle_cost": oracle.cost, "match": int(res.cost == oracle.cost),
        "multisteps": c.get("multisteps", 0), "rounds": rounds,
        "newton_iterations": c.get("newton_iterations", 0), "checker_solves": c.get("checker_solves", 0),
        "locator_inits": c.get("locator_inits", 0), "locator_solve": c.get("locator_solve", 0),
        "locator_update": c.get("locator_update", 0), "locator_batch_update": c.get("locator_batch_update", 0),
        "locator_add_terminal": c.get("locator_add_terminal", 0),
        "z_total": c.get("z_total", 0), "z_max": c.get("z_max", 0),
        "z_mean": f"{c.get('z_total', 0) / rounds:.4f}" if rounds else "0",
        "recall": f"{c.get('recall_found', 0) / total:.4f}" if total else "1.0000",
    }
    if timings:
        row["t_solve"] = f"{t1 - t0:.4f}"
        row["t_oracle"] = f"{t2 - t1:.4f}"
    return row


@main.command()
@common_options
@click.option("--family", "families", multiple=True, type=click.Choice(FAMILIES), help="Instance family; repeatable.")
@click.option("--sizes", default="10:20", show_default=True, help="Comma-separated n:m pairs.")
@click.option("--seeds", type=int, default=1, show_default=True, help="Instances per (family, size).")
@click.option("--U", "U", type=int, default=10, show_default=True, help="Maximum capacity.")
@click.option("--W", "W", type=int, default=10, show_default=True, help="Maximum cost.")
@click.option("--out", type=click.Path(dir_okay=False), help="CSV path; stdout when omitted.")
@click.option("--timings", is_flag=True, help="Add wall-clock columns (makes output run-dependent).")
def bench(config_path, seed, mode, k, beta, alpha, eps, algorithm, families, sizes, seeds, U, W, out, timings):
    """Run the benchmark suite and emit one CSV row per run."""
    cfg = _resolve(config_path, seed=seed, mode=mode, k=k, beta=beta, alpha=alpha, eps=eps, algorithm=algorithm)
    jobs = [(cfg, fam, n, m, U, W, i, timings) for fam in families for n, m in _parse_sizes(sizes) for i in range(seeds)]
    workers = thread_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_bench_one, jobs))
    else:
        rows = [_bench_one(j) for j in jobs]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BENCH_FIELDS + (TIMING_FIELDS if timings else []), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    if out:
        with open(out, "w") as fh:
            fh.write(buf.getvalue())
    else:
        click.echo(buf.getvalue(), nl=False)


@main.command()
@click.argument("instance", type=click.Path(dir_okay=False))
@common_options
def inspect(instance, config_path, seed, mode, k, beta, alpha, eps, algorithm):
    """Print instance statistics and the resolved solver parameters."""
    cfg = _resolve(config_path, seed=seed, mode=mode, k=k, beta=beta, alpha=alpha, eps=eps, algorithm=algorithm)
    inst = _load_instance(instance)
    ncomp, _ = components(inst.n, inst.tails, inst.heads)
    oracle = ssp_min_cost_flow(inst)
    params = cfg.step_params()
    lines = [
        f"n={inst.n}", f"m={inst.m}", f"max_cap={inst.max_cap}", f"max_cost={inst.max_cost}",
        f"total_supply={int(inst.demand[inst.demand > 0].sum())}", f"components={ncomp}",
        f"feasible={'yes' if oracle.feasible else 'no'}",
        f"optimal_cost={oracle.cost if oracle.feasible else ''}",
        f"mode={params.mode}", f"k={params.k}", f"eps_step={params.eps_step!r}", f"eps={params.eps!r}",
        f"alpha={params.alpha!r}", f"beta={params.beta!r}", f"rounds_per_multistep={params.rounds}",
        f"config_hash={cfg.config_hash}",
    ]
    click.echo("\n".join(lines))


if __name__ == "__main__":  # pragma: no cover
    main()
