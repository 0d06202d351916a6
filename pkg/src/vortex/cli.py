"""Command-line orchestration: `vortex run | check | report`.

run     executes the configured Monte-Carlo experiment and writes
        stats.csv + checks.json + manifest.json (+ optional snapshots);
check   runs the operator-identity suite standalone;
report  re-renders a summary from stored outputs.

Exit status: 0 when every enabled check passes, 1 on any failed check,
2 on configuration or IO errors.  Outputs are written atomically and a
rerun into a populated directory is refused unless --force is given.
The worker count is capped by the VORTEX_THREADS environment variable;
results are independent of its value.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    CheckConfig,
    ConfigError,
    ExperimentConfig,
    load_config,
)
from .harness import (
    CheckResult,
    bdg_report,
    energy_report,
    gronwall_uniqueness,
    hy_uniformity,
    identity_suite,
    run_paths,
    weighted_identity_refinement,
    zeta_regularity,
)
from .integrator import TrajectoryStats, run_trajectory
from .operators import random_divfree_field
from .spectral import SpectralGrid, l2_norm

STATS_HEADER = ("path_index", "sup_v_l2sq", "int_grad_v", "sup_xi_lq",
                "sup_beta_l2", "int_grad_beta", "sup_beta_lq", "status")


def config_hash(resolved: dict) -> str:
    """Hash of the experiment semantics; where outputs land is not part of
    the experiment, so output.directory is excluded."""
    payload = json.loads(json.dumps(resolved))
    payload.get("output", {}).pop("directory", None)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _atomic_write(path: Path, data: str) -> None:
    tmp = path.with_name("." + path.name + ".tmp")
    tmp.write_text(data)
    tmp.replace(path)


def render_stats_csv(stats: list[TrajectoryStats]) -> str:
    lines = [",".join(STATS_HEADER)]
    for i, s in enumerate(stats):
        row = [str(i)] + [repr(s.functional(f)) for f in TrajectoryStats.FUNCTIONALS]
        row.append(s.status)
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def render_checks_json(checks: list[CheckResult]) -> str:
    return json.dumps([c.to_dict() for c in checks], indent=2, sort_keys=True) + "\n"


def write_outputs(stats, checks, outdir, resolved, force: bool = False) -> dict:
    """Persist stats.csv, checks.json, resolved_config.json and manifest.json.

    Writes are temp-file-then-rename; an already-populated directory is
    refused unless force is set, and nothing is written before validation.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    existing = [p for p in ("stats.csv", "checks.json", "manifest.json")
                if (outdir / p).exists()]
    if existing and not force:
        raise ConfigError(
            f"output directory {outdir} already holds {existing[0]}; "
            "rerun with --force to overwrite"
        )
    files = {
        "resolved_config.json": json.dumps(resolved, indent=2, sort_keys=True) + "\n",
        "stats.csv": render_stats_csv(stats),
        "checks.json": render_checks_json(checks),
    }
    digests = {}
    for name, payload in files.items():
        _atomic_write(outdir / name, payload)
        digests[name] = hashlib.sha256(payload.encode()).hexdigest()
    manifest = {
        "tool_version": __version__,
        "config_hash": config_hash(resolved),
        "base_seed": resolved["mc"]["base_seed"],
        "n_paths": resolved["mc"]["n_paths"],
        "files": digests,
    }
    _atomic_write(outdir / "manifest.json",
                  json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _levels_from(params, default):
    raw = params.get("levels", default)
    return [math.inf if v is None else float(v) for v in raw]


def run_configured_checks(config: ExperimentConfig,
                          stats: list[TrajectoryStats]) -> list[CheckResult]:
    grid = config.grid
    spec = config.build_noise_spec()
    v0, xi0 = config.build_initial()
    seed = config.mc.base_seed
    out: list[CheckResult] = []
    for chk in config.checks:
        params = chk.param_dict()
        if chk.name == "energy":
            out.extend(energy_report(stats, dict(params.get("ceilings", {})), seed))
        elif chk.name == "identities":
            trials = int(params.get("trials", 100))
            out.extend(identity_suite(grid, trials, seed))
            if params.get("refine", False):
                out.append(weighted_identity_refinement(
                    grid, int(params.get("refine_trials", 10)), seed))
        elif chk.name == "hy_uniformity":
            out.append(hy_uniformity(
                _levels_from(params, [1, 10, 100, None]), spec, v0, xi0,
                config.solver, int(params.get("n_paths", config.mc.n_paths)),
                seed, float(params.get("factor", 1.5)), config.lq_exponent,
            ))
        elif chk.name == "gronwall":
            rng = np.random.default_rng(seed + 1)
            v0a = random_divfree_field(grid, rng)
            eps = float(params.get("perturbation", 1e-3))
            if eps == 0.0:
                v0b = v0a
            else:
                bump = random_divfree_field(grid, rng)
                v0b = v0a + bump * (eps / l2_norm(bump))
            out.append(gronwall_uniqueness(
                v0a, v0b, spec, config.solver,
                int(params.get("n_paths", config.mc.n_paths)), seed,
                float(params.get("slack", 1.05)),
                int(params.get("gn_trials", 10000)),
            ))
        elif chk.name == "zeta_regularity":
            out.append(zeta_regularity(
                spec, v0, xi0, config.solver,
                _levels_from(params, [1, 100, None]),
                int(params.get("n_paths", 8)), seed,
                beta=float(params.get("beta", 0.2)),
                delta=float(params.get("delta", 0.0)),
                p=float(params.get("p", 32)),
                q=float(params.get("q", 2)),
                stride=int(params.get("stride", 8)),
                stability_factor=float(params.get("stability", 2.0)),
            ))
        elif chk.name == "bdg":
            v0_built = v0
            if v0_built is None:
                from .operators import biot_savart

                v0_built = biot_savart(xi0)
            out.extend(bdg_report(
                spec, grid, v0_built, float(params.get("q", 4)),
                [int(m) for m in params.get("m_list", [2, 4])],
                int(params.get("n_paths", 500)), seed,
                config.solver.t_end, config.solver.dt,
                float(params.get("stability", 0.5)),
            ))
    return out


def run_experiment(config: ExperimentConfig):
    """All Monte-Carlo paths plus the configured checks, reproducibly."""
    spec = config.build_noise_spec()
    v0, xi0 = config.build_initial()
    snapshot_dir = None
    if config.output.directory and config.output.snapshot_stride > 0:
        snapshot_dir = Path(config.output.directory) / "snapshots"
        snapshot_dir.mkdir(parents=True, exist_ok=True)

    def worker(p):
        return run_trajectory(
            v0, xi0, spec, config.solver,
            seed=config.mc.base_seed, path_index=p,
            lq_exponent=config.lq_exponent,
            snapshot_dir=snapshot_dir,
            snapshot_stride=config.output.snapshot_stride,
        ).stats

    stats = run_paths(worker, config.mc.n_paths)
    checks = run_configured_checks(config, stats)
    return stats, checks


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    mc = config.mc
    if args.seed is not None:
        mc = dataclasses.replace(mc, base_seed=args.seed)
    if args.paths is not None:
        mc = dataclasses.replace(mc, n_paths=args.paths)
    output = config.output
    if args.out is not None:
        output = dataclasses.replace(output, directory=args.out)
    return dataclasses.replace(config, mc=mc, output=output)


def cmd_run(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    if not config.output.directory:
        raise ConfigError("no output directory: set output.directory or pass --out")
    resolved = config.resolved()
    outdir = Path(config.output.directory)
    # fail-closed before any computation
    if (outdir / "stats.csv").exists() and not args.force:
        raise ConfigError(
            f"output directory {outdir} already holds stats.csv; use --force"
        )
    stats, checks = run_experiment(config)
    write_outputs(stats, checks, outdir, resolved, force=args.force)
    for c in checks:
        verdict = "PASS" if c.passed else "FAIL"
        print(f"{verdict} {c.name}: observed={c.observed:.6g} bound={c.bound:.6g}")
    print(f"wrote {outdir}/stats.csv ({len(stats)} paths), checks.json, manifest.json")
    return 0 if all(c.passed for c in checks) else 1


def cmd_check(args) -> int:
    if args.suite != "identities":
        raise ConfigError(f"unknown check suite {args.suite!r}")
    grid = SpectralGrid(args.grid)
    results = identity_suite(grid, args.trials, args.seed)
    if args.refine:
        results.append(weighted_identity_refinement(grid, max(1, args.trials // 10),
                                                    args.seed))
    payload = render_checks_json(results)
    if args.out:
        _atomic_write(Path(args.out), payload)
    else:
        sys.stdout.write(payload)
    return 0 if all(r.passed for r in results) else 1


def cmd_report(args) -> int:
    outdir = Path(args.dir)
    checks_path = outdir / "checks.json"
    stats_path = outdir / "stats.csv"
    if not checks_path.exists() or not stats_path.exists():
        raise ConfigError(f"{outdir} does not contain stats.csv and checks.json")
    checks = json.loads(checks_path.read_text())
    rows = stats_path.read_text().strip().split("\n")
    header = rows[0].split(",")
    table = [r.split(",") for r in rows[1:]]
    summary: dict = {"n_paths": len(table), "checks": checks, "functionals": {}}
    for col in range(1, len(header) - 1):
        values = [float(r[col]) for r in table] or [0.0]
        summary["functionals"][header[col]] = {
            "mean": float(np.mean(values)),
            "stderr": float(np.std(values, ddof=1) / np.sqrt(len(values)))
            if len(values) > 1 else 0.0,
        }
    payload = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    _atomic_write(outdir / "summary.json", payload)
    sys.stdout.write(payload)
    return 0 if all(c["passed"] for c in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vortex",
        description="Spectral simulator and estimate-verification harness for "
                    "2D stochastic Navier-Stokes (velocity/vorticity form).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured Monte-Carlo experiment")
    p_run.add_argument("--config", required=True, help="path to the JSON config")
    p_run.add_argument("--seed", type=int, default=None, help="override mc.base_seed")
    p_run.add_argument("--paths", type=int, default=None, help="override mc.n_paths")
    p_run.add_argument("--out", default=None, help="override output.directory")
    p_run.add_argument("--force", action="store_true",
                       help="allow writing into a populated output directory")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="run a standalone verification suite")
    p_check.add_argument("suite", choices=["identities"])
    p_check.add_argument("--grid", type=int, default=64, help="modes per dimension")
    p_check.add_argument("--trials", type=int, default=100)
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--refine", action="store_true",
                         help="also run the grid-refinement study")
    p_check.add_argument("--out", default=None, help="write JSON here instead of stdout")
    p_check.set_defaults(func=cmd_check)

    p_report = sub.add_parser("report", help="re-render results from stored outputs")
    p_report.add_argument("--dir", required=True)
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as err:
        print(f"vortex: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
