"""Command-line harness.

Subcommands:
    generate  -- write the manifest's dataset as CSV + meta.json
    run       -- execute every (config, seed) and write trajectory CSVs
    sweep     -- cross variant x eta x sigma x seed, write a tidy aggregate
    oracle    -- recursion closed forms vs Monte Carlo as CSV
    verify    -- acceptance suite; non-zero exit on failure
    plot      -- SVG line plots from trajectory/aggregate CSVs

Exit codes: 0 ok, 1 validation error, 2 acceptance failure, 3 divergence in
a non-sweep run. --workers (or ANTIPGD_WORKERS) parallelizes runs across
processes; each run owns an independent derived noise stream either way.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ACCEPTANCE = 2
EXIT_DIVERGENCE = 3


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("ANTIPGD_WORKERS")
    return max(1, int(env)) if env else 1


def _run_one(landscape_spec, config_dict, base_seed, run_index):
    # module-level so it pickles for the process pool; workers rebuild the
    # landscape from its spec (datasets regenerate deterministically).
    from .manifest import build_landscape, config_from_dict
    from .optim import run

    landscape = build_landscape(landscape_spec)
    config = config_from_dict(config_dict)
    return run(config, landscape, base_seed, run_index)


def _execute_runs(manifest, configs, workers):
    """Yield (config, run_index, Trajectory) over the configs x seeds grid."""
    from .optim import run as run_fn

    jobs = [(cfg, idx) for cfg in configs for idx in range(manifest.n_seeds)]
    if workers <= 1:
        from .manifest import build_landscape

        landscape = build_landscape(manifest.landscape_spec)
        for cfg, idx in jobs:
            yield cfg, idx, run_fn(cfg, landscape, manifest.base_seed, idx)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            (
                cfg,
                idx,
                pool.submit(
                    _run_one, manifest.landscape_spec, _as_dict(cfg), manifest.base_seed, idx
                ),
            )
            for cfg, idx in jobs
        ]
        for cfg, idx, fut in futures:
            yield cfg, idx, fut.result()


def _as_dict(config) -> dict:
    d = {
        "name": config.name,
        "variant": config.variant,
        "eta": config.eta,
        "steps": config.steps,
        "schedule": {"start": config.start_step, "stop": config.stop_step},
        "batch": config.batch,
        "record_every": config.record_every,
        "record_reg_grad": config.record_reg_grad,
        "snapshot_steps": list(config.snapshot_steps),
        "init": {
            "kind": config.init.kind,
            "scale": config.init.scale,
            "u_sqnorm": config.init.u_sqnorm,
            "values": list(config.init.values),
        },
    }
    if config.noise is not None:
        d["noise"] = {
            "sigma": config.noise.sigma,
            "dim": config.noise.dim,
            "distribution": config.noise.distribution,
            "correlation": config.noise.correlation,
        }
    return d


def cmd_generate(args) -> int:
    from .landscapes import save_dataset
    from .manifest import build_landscape, load_manifest

    manifest = load_manifest(args.manifest)
    out = Path(args.out or manifest.out_dir) / "dataset"
    landscape = build_landscape(manifest.landscape_spec)
    try:
        save_dataset(landscape, out)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"wrote dataset to {out}")
    return EXIT_OK


def _load_with_seed(args):
    from .manifest import load_manifest

    manifest = load_manifest(args.manifest)
    if getattr(args, "seed", None) is not None:
        manifest.base_seed = args.seed
    return manifest


def cmd_run(args) -> int:
    from .io import write_trajectory_csv

    manifest = _load_with_seed(args)
    configs = manifest.all_configs()
    out = Path(args.out or manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    any_diverged = False
    for cfg, idx, traj in _execute_runs(manifest, configs, _workers(args)):
        path = out / f"{cfg.name}_run{idx}.csv"
        write_trajectory_csv(traj, path)
        flag = f" DIVERGED at {traj.diverged_at}" if traj.diverged else ""
        print(f"{path}  ({len(traj.steps)} rows){flag}")
        any_diverged |= traj.diverged
    return EXIT_DIVERGENCE if any_diverged else EXIT_OK


def cmd_sweep(args) -> int:
    from .io import (
        aggregate_csv_text,
        aggregate_tables,
        atomic_write_text,
        read_trajectory_csv,
        write_trajectory_csv,
    )

    manifest = _load_with_seed(args)
    configs = manifest.all_configs()
    out = Path(args.out or manifest.out_dir)
    raw_dir = out / "runs"
    raw_dir.mkdir(parents=True, exist_ok=True)
    paths_by_config: dict[str, list[Path]] = {}
    n_diverged = 0
    for cfg, idx, traj in _execute_runs(manifest, configs, _workers(args)):
        path = raw_dir / f"{cfg.name}_run{idx}.csv"
        write_trajectory_csv(traj, path)
        paths_by_config.setdefault(cfg.name, []).append(path)
        n_diverged += traj.diverged
    # aggregate from the files themselves so the table is reproducible from
    # the raw CSVs alone
    tables = {name: [read_trajectory_csv(p) for p in sorted(paths)] for name, paths in paths_by_config.items()}
    rows = aggregate_tables(tables)
    agg_path = out / "aggregate.csv"
    atomic_write_text(agg_path, aggregate_csv_text(rows))
    print(f"{agg_path}  ({len(rows)} rows, {n_diverged} divergent runs)")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .io import atomic_write_text, oracle_csv_text
    from .noise import NoiseSpec
    from .recursion import (
        RhoSpec,
        expected_sqnorm_const_rho,
        limit_const_rho,
        simulate_recursion,
    )

    d, sigma2, n_steps, n_samples = args.d, args.sigma2, args.K, args.samples
    sigma = float(np.sqrt(sigma2))
    if args.stochastic:
        lo, hi = args.stochastic
        rho_spec = RhoSpec.uniform(lo, hi)
    else:
        try:
            rho_spec = RhoSpec.constant(args.rho)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
    mc = {}
    for mode in ("anticorrelated", "uncorrelated"):
        spec = NoiseSpec(sigma=sigma, dim=d, distribution="gaussian", correlation=mode, seed=args.seed)
        mc[mode] = simulate_recursion(rho_spec, spec, n_samples, n_steps)

    columns = (
        "k",
        "closed_form_anti",
        "closed_form_uncorr",
        "mc_anti",
        "mc_uncorr",
        "stderr_anti",
        "stderr_uncorr",
    )
    rows = []
    for i in range(n_steps):
        row = {
            "k": i + 1,
            "mc_anti": mc["anticorrelated"].mean[i],
            "mc_uncorr": mc["uncorrelated"].mean[i],
            "stderr_anti": mc["anticorrelated"].stderr[i],
            "stderr_uncorr": mc["uncorrelated"].stderr[i],
        }
        if not args.stochastic:
            row["closed_form_anti"] = expected_sqnorm_const_rho(args.rho, i, 0.0, d, sigma2, "anticorrelated")
            row["closed_form_uncorr"] = expected_sqnorm_const_rho(args.rho, i, 0.0, d, sigma2, "uncorrelated")
        else:
            row["closed_form_anti"] = 2 * d * sigma2  # limit bound for rho in [0, 1]
        rows.append(row)
    limit_row = {"k": "limit"}
    if not args.stochastic:
        limit_row["closed_form_anti"] = limit_const_rho(args.rho, d, sigma2, "anticorrelated")
        limit_row["closed_form_uncorr"] = limit_const_rho(args.rho, d, sigma2, "uncorrelated")
    else:
        limit_row["closed_form_anti"] = 2 * d * sigma2
    rows.append(limit_row)
    text = oracle_csv_text(rows, columns)
    if args.out:
        path = Path(args.out)
        if path.is_dir() or not path.suffix:
            path = path / "oracle.csv"
        atomic_write_text(path, text)
        print(path)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import verify
    from .io import atomic_write_text

    names = args.only.split(",") if args.only else None
    if names:
        unknown = set(names) - set(verify.CHECK_NAMES)
        if unknown:
            print(f"error: unknown checks {sorted(unknown)}", file=sys.stderr)
            return EXIT_VALIDATION
    results = verify.run_all(names)
    if args.out:
        path = Path(args.out)
        if path.is_dir() or not path.suffix:
            path = path / "verify.csv"
        atomic_write_text(path, verify.results_csv_text(results))
        print(f"report: {path}")
    n_failed = sum(not r.passed for r in results)
    print(f"{len(results) - n_failed}/{len(results)} checks passed")
    return EXIT_ACCEPTANCE if n_failed else EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_csv

    jobs = []  # (csv, y, logy, out_path)
    if args.manifest:
        from .manifest import load_manifest

        manifest = load_manifest(args.manifest)
        out_dir = Path(args.out or manifest.out_dir)
        if not manifest.plots:
            print("error: manifest has no plot specs", file=sys.stderr)
            return EXIT_VALIDATION
        for spec in manifest.plots:
            csv_path = Path(spec.get("csv", Path(manifest.out_dir) / "aggregate.csv"))
            y = spec["y"]
            name = spec.get("filename", f"{csv_path.stem}_{y}.svg")
            jobs.append((csv_path, y, bool(spec.get("logy", False)), out_dir / name))
    else:
        if not args.csv or not args.y:
            print("error: plot needs --manifest or --csv with --y", file=sys.stderr)
            return EXIT_VALIDATION
        out_dir = Path(args.out or ".")
        for y in args.y:
            jobs.append((Path(args.csv), y, args.logy, out_dir / f"{Path(args.csv).stem}_{y}.svg"))
    written = []
    for csv_path, y, logy, out_path in jobs:
        try:
            written.append(plot_csv(csv_path, y, out_path, logy=logy))
        except (ValueError, FileNotFoundError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="antipgd", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, manifest=True):
        if manifest:
            p.add_argument("--manifest", required=True, help="experiment manifest (JSON)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the manifest base seed")
        p.add_argument("--workers", type=int, default=None, help="worker processes (or ANTIPGD_WORKERS)")

    add_common(sub.add_parser("generate", help="write the manifest's dataset"))
    add_common(sub.add_parser("run", help="execute runs, one trajectory CSV each"))
    add_common(sub.add_parser("sweep", help="variant x eta x sigma x seed grid + aggregate CSV"))

    oracle = sub.add_parser("oracle", help="recursion closed form vs Monte Carlo table")
    oracle.add_argument("--rho", type=float, default=0.9)
    oracle.add_argument("--stochastic", nargs=2, type=float, metavar=("LO", "HI"), default=None,
                        help="sample rho uniformly per step instead of --rho")
    oracle.add_argument("--d", type=int, default=50)
    oracle.add_argument("--sigma2", type=float, default=0.01)
    oracle.add_argument("--K", type=int, default=500)
    oracle.add_argument("--samples", type=int, default=2000)
    oracle.add_argument("--seed", type=int, default=11)
    oracle.add_argument("--out", default=None)

    verify_p = sub.add_parser("verify", help="run the acceptance suite")
    verify_p.add_argument("--only", default=None, help="comma-separated check names")
    verify_p.add_argument("--out", default=None, help="write a CSV report here")

    plot = sub.add_parser("plot", help="SVG plots from an antipgd CSV")
    plot.add_argument("--csv", default=None)
    plot.add_argument("--y", action="append", default=None, help="metric column (repeatable)")
    plot.add_argument("--logy", action="store_true")
    plot.add_argument("--manifest", default=None, help="use the manifest's plot specs instead")
    plot.add_argument("--out", default=None)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "generate": cmd_generate,
        "run": cmd_run,
        "sweep": cmd_sweep,
        "oracle": cmd_oracle,
        "verify": cmd_verify,
        "plot": cmd_plot,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:  # manifest/config validation errors
        from .manifest import ManifestError

        if isinstance(exc, (ManifestError, ValueError, FileNotFoundError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        raise


if __name__ == "__main__":
    sys.exit(main())
