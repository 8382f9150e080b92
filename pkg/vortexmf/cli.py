"""Command line: ``vortexmf {cvp,mvp,diagnose,bubble,validate,mesh,runs}``.

Every subcommand validates its configuration (KEY=VALUE file from --config, overridden by
flags), runs, writes a RunArtifact (JSON) and records the run in the run store. Exit codes:
0 success, 1 usage or configuration error, 2 non-convergence or no root, 3 internal error.
"""
import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Type

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError

from vortexmf import __version__
from vortexmf.analytic import (
    bubble_center_for_mass,
    bubble_identity_residual,
    bubble_mass_window,
    bubble_solve,
    disk_solution,
    lambda_sigma,
)
from vortexmf.blowup import (
    classify_profile,
    concentration_mass,
    homogeneous_quantized_mass,
    ls_decay_check,
    sup_plus_cinf_check,
)
from vortexmf.core.config import settings
from vortexmf.core.errors import ConfigurationError, EnergyBelowUniformError, HypothesisViolationError, VortexMFError
from vortexmf.cvp import CONVERGED, free_energy_convexity, solve_cvp, sweep_lambda
from vortexmf.domain import DISK, green_vortex, regularized_green, weight_field
from vortexmf.families import load_manifest, planted_family, write_manifest
from vortexmf.io import to_jsonable, write_field_csv, write_rows_csv
from vortexmf.mvp import NOT_FOUND, classify_domain_type, mvp_regularization_limit, solve_mvp
from vortexmf.schemas.physics import WeightSpec
from vortexmf.schemas.results import RunArtifact, provenance_hash
from vortexmf.schemas.run import (
    BubbleConfig,
    CvpConfig,
    DiagnoseConfig,
    MeshConfig,
    MvpConfig,
    RunOptions,
    SolverOptions,
    ValidateConfig,
)

logger = logging.getLogger(__name__)

# (status, exit code, payload, input files)
Outcome = Tuple[str, int, Dict[str, Any], List[Path]]


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# Helper Functions
def _side_file(run: RunOptions, suffix: str) -> Optional[Path]:
    """Companion file next to the artifact, e.g. report.json -> report_samples.csv"""
    if not run.out:
        return None
    out = Path(run.out)
    return out.with_name(f"{out.stem}_{suffix}")


def _solver_keys() -> set:
    return set(SolverOptions.model_fields)


_KEY_ALIASES = {"lambda": "lam", "lambda_grid": "lam_grid"}


def collect_config(model: Type[BaseModel], args: argparse.Namespace, config_file: Optional[str]) -> BaseModel:
    """Merge a KEY=VALUE file with explicit flags (flags win) and validate"""
    values: Dict[str, Any] = {}
    if config_file:
        path = Path(config_file)
        if not path.is_file():
            raise ConfigurationError(f"config file not found: {config_file}")
        for key, value in dotenv_values(path).items():
            if value is not None:
                name = key.strip().lower().replace("-", "_")
                values[_KEY_ALIASES.get(name, name)] = value
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "config", "out", "threads", "seed", "no_store", "log_level"):
            values[key] = value

    if "solver" in model.model_fields:
        solver = {k: values.pop(k) for k in list(values) if k in _solver_keys()}
        values["solver"] = solver
    unknown = [k for k in values if k not in model.model_fields]
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    try:
        return model.model_validate(values)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {str(e)}") from e


# Commands
def run_cvp(config: CvpConfig, run: RunOptions) -> Outcome:
    mesh = config.mesh.build()
    if config.lam_grid:
        curve = sweep_lambda(mesh, config.sigma, config.eps, config.lam_grid, config.solver,
                             radii=config.radii, threads=run.threads)
        rows = curve.rows()
        csv_path = _side_file(run, "samples.csv")
        if csv_path is not None:
            write_rows_csv(csv_path, rows)
        payload: Dict[str, Any] = {"samples": rows, "branch_end": curve.branch_end}
        if len(curve.converged()) >= 3:
            payload["free_energy_convexity"] = free_energy_convexity(curve)
        if curve.branch_end is None:
            return "converged", 0, payload, []
        return "branch_end", 2, payload, []

    spec = WeightSpec(sigma=config.sigma, lam=config.lam, eps=config.eps)
    solution = solve_cvp(mesh, spec, config.solver)
    payload = solution.summary()
    payload["ball_masses"] = {str(r): solution.mass_in_ball(r) for r in config.radii}
    if mesh.kind == DISK and config.eps == 0.0 and config.sigma <= 0 and config.lam < lambda_sigma(config.sigma):
        exact = disk_solution(config.sigma, config.lam)
        payload["oracle"] = {
            "gamma2": exact.gamma2,
            "normalizer": exact.normalizer,
            "normalizer_rel_error": abs(math.exp(solution.log_partition) - exact.normalizer) / exact.normalizer,
            "psi_sup_error": float(np.max(np.abs(solution.psi.values - exact.psi(mesh.r)))),
        }
    csv_path = _side_file(run, "psi.csv")
    if csv_path is not None:
        write_field_csv(csv_path, solution.psi)
    return solution.status, 0 if solution.status == CONVERGED else 2, payload, []


def run_mvp(config: MvpConfig, run: RunOptions) -> Outcome:
    mesh = config.mesh.build()
    if config.classify:
        report = classify_domain_type(mesh, config.sigma, config.eps, config.energy_grid, config.solver,
                                      lam_max=config.lam_max, scan_points=config.scan_points)
        return report.verdict, 0, to_jsonable(report), []
    if config.eps_seq:
        report = mvp_regularization_limit(mesh, config.sigma, config.energy, config.eps_seq, config.solver,
                                          scan_points=config.scan_points)
        return ("cauchy" if report.cauchy else "not_cauchy"), 0, to_jsonable(report), []
    try:
        result = solve_mvp(mesh, config.sigma, config.eps, config.energy, config.solver,
                           lam_max=config.lam_max, scan_points=config.scan_points, energy_tol=config.energy_tol)
    except EnergyBelowUniformError as e:
        return "below_uniform", e.exit_code, {"detail": e.detail}, []
    payload = result.summary()
    if result.solution is not None:
        payload["solution"] = result.solution.summary()
    return result.status, 2 if result.status == NOT_FOUND else 0, payload, []


def run_diagnose(config: DiagnoseConfig, run: RunOptions) -> Outcome:
    inputs: List[Path] = []
    if config.family:
        manifest = Path(config.family)
        family = load_manifest(manifest)
        inputs = [manifest] + sorted(manifest.parent.glob("member_*.csv"))
    else:
        family = planted_family(config.plant, sigma=config.sigma, alpha=config.alpha)
    if config.write_manifest:
        write_manifest(family, config.write_manifest)

    report = classify_profile(family, threads=run.threads)
    payload: Dict[str, Any] = {"family": family.name, "parameter": family.parameter,
                               "report": to_jsonable(report)}
    last = family.last
    payload["concentration"] = to_jsonable(concentration_mass(last))
    decay = ls_decay_check(last, 16.0 * last.delta)
    payload["ls_decay"] = {**to_jsonable(decay), "passed": decay.passed}
    if family.sigma < 0.5:
        payload["quantized_mass"] = to_jsonable(homogeneous_quantized_mass(family.sigma))
    try:
        check = sup_plus_cinf_check(family, c0=config.c0)
        payload["sup_plus_cinf"] = {**to_jsonable(check), "maximum": check.maximum,
                                    "spread": check.spread, "bounded": check.bounded}
    except HypothesisViolationError as e:
        if config.c0 is not None:
            raise
        payload["sup_plus_cinf"] = {"skipped": e.detail}
    return report.case, 0, payload, inputs


def run_bubble(config: BubbleConfig, run: RunOptions) -> Outcome:
    c = config.c
    if config.mass is not None:
        c = bubble_center_for_mass(config.alpha, config.t0, config.mass)
    bubble = bubble_solve(config.alpha, config.t0, c, r_max=config.r_max)
    r = np.geomspace(bubble.r[0], bubble.r_max, config.samples)
    profile = [{"r": float(ri), "phi": float(p)} for ri, p in zip(r, bubble.profile(r))]
    csv_path = _side_file(run, "profile.csv")
    if csv_path is not None:
        write_rows_csv(csv_path, profile)
    payload = {
        "alpha": bubble.alpha,
        "t0": bubble.t0,
        "c": bubble.c,
        "mass": bubble.mass,
        "beta": bubble.beta,
        "mass_window": list(bubble_mass_window(config.alpha, config.t0)),
        "identity_residual": bubble_identity_residual(bubble),
        "decay_exponent": bubble.decay_exponent,
        "decay_slope": bubble.decay_slope,
        "tail_mass": bubble.tail_mass,
        "shell_fraction": bubble.shell_fraction,
        "r_max": bubble.r_max,
        "profile": profile,
    }
    return "solved", 0, payload, []


def run_mesh(config: MeshConfig, run: RunOptions) -> Outcome:
    mesh = config.mesh.build()
    if config.field == "weights":
        values = mesh.weights
    elif config.field == "green":
        values = green_vortex(mesh).values
    elif config.field == "regularized_green":
        values = regularized_green(mesh, config.eps).values
    else:
        values = weight_field(mesh, WeightSpec(sigma=config.sigma, lam=config.lam, eps=config.eps)).values
    finite = values[np.isfinite(values)]
    payload = {
        "kind": mesh.kind,
        "label": config.mesh.label(),
        "n_nodes": mesh.n_nodes,
        "area": mesh.area,
        "weights_sum": float(np.sum(mesh.weights)),
        "min_cell_size": mesh.min_cell_size,
        "outer_radius": mesh.outer_radius,
        "field": config.field,
        "field_min": float(finite.min()),
        "field_max": float(finite.max()),
        "field_integral": float(np.sum(finite * mesh.weights[np.isfinite(values)])),
    }
    csv_path = _side_file(run, f"{config.field}.csv")
    if csv_path is not None:
        rows = ({"node_id": i, "x": mesh.x[i], "y": mesh.y[i], "weight": mesh.weights[i], "value": values[i]}
                for i in range(mesh.n_nodes))
        write_rows_csv(csv_path, rows)
    return "built", 0, payload, []


def _replay(artifact: RunArtifact, run: RunOptions) -> Dict[str, Any]:
    """Re-run an artifact's command from its echoed config and compare payloads"""
    model, runner = COMMANDS[artifact.command]
    config = model.model_validate(artifact.config)
    status, exit_code, payload, _ = runner(config, run.model_copy(update={"out": None, "store": False}))
    replayed = RunArtifact(command=artifact.command, status=status, exit_code=exit_code,
                           config=config.model_dump(), payload=to_jsonable(payload),
                           provenance=artifact.provenance)
    same = replayed.to_json(include_wall_time=False) == artifact.to_json(include_wall_time=False)
    return {"artifact_command": artifact.command, "reproduced": same,
            "status": status, "recorded_status": artifact.status}


def run_validate(config: ValidateConfig, run: RunOptions) -> Outcome:
    from vortexmf.validation import run_suite

    if config.artifact:
        path = Path(config.artifact)
        try:
            artifact = RunArtifact.load(path)
        except (OSError, ValueError) as e:
            raise ConfigurationError(f"cannot load artifact {path}: {str(e)}") from e
        outcome = _replay(artifact, run)
        return ("pass" if outcome["reproduced"] else "fail"), 0 if outcome["reproduced"] else 2, outcome, [path]

    plot_dir = None
    if config.emit_plot_data:
        plot_dir = (Path(run.out).parent if run.out else Path(".")) / "plot_data"
    matrix = run_suite(config.only, quick=config.quick, seed=run.seed, threads=run.threads, plot_dir=plot_dir)
    payload = {
        "passed": matrix.passed,
        "groups": matrix.groups(),
        "results": [r.model_dump() for r in matrix.results],
    }
    return ("pass" if matrix.passed else "fail"), 0 if matrix.passed else 2, payload, []


COMMANDS: Dict[str, Tuple[Type[BaseModel], Callable[[Any, RunOptions], Outcome]]] = {
    "cvp": (CvpConfig, run_cvp),
    "mvp": (MvpConfig, run_mvp),
    "diagnose": (DiagnoseConfig, run_diagnose),
    "bubble": (BubbleConfig, run_bubble),
    "mesh": (MeshConfig, run_mesh),
    "validate": (ValidateConfig, run_validate),
}


# Parser
def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=["picard", "newton"])
    p.add_argument("--damping", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--psi-ceiling", dest="psi_ceiling", type=float)
    p.add_argument("--no-warm-start", dest="warm_start", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="artifact JSON path (stdout when omitted)")
    common.add_argument("--threads", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--config", help="KEY=VALUE file; flags override its values")
    common.add_argument("--no-store", dest="no_store", action="store_true", help="do not record the run")
    common.add_argument("--log-level", dest="log_level")

    parser = _Parser(prog="vortexmf", description="Mean field vortex equilibria with a singular point vortex")
    parser.add_argument("--version", action="version", version=f"vortexmf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("cvp", parents=[common], help="canonical problem at fixed lambda or along a lambda grid")
    p.add_argument("--mesh")
    p.add_argument("--sigma", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--lambda-grid", dest="lam_grid", help="comma list or start:stop:count")
    p.add_argument("--eps", type=float)
    p.add_argument("--radii")
    _add_solver_flags(p)

    p = sub.add_parser("mvp", parents=[common], help="microcanonical problem at fixed energy")
    p.add_argument("--mesh")
    p.add_argument("--sigma", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--energy", type=float)
    p.add_argument("--energy-grid", dest="energy_grid")
    p.add_argument("--eps-seq", dest="eps_seq")
    p.add_argument("--classify", action="store_const", const=True)
    p.add_argument("--lam-max", dest="lam_max", type=float)
    p.add_argument("--scan-points", dest="scan_points", type=int)
    p.add_argument("--energy-tol", dest="energy_tol", type=float)
    _add_solver_flags(p)

    p = sub.add_parser("diagnose", parents=[common], help="blow-up diagnostics on a solution family")
    p.add_argument("--family", help="family_manifest.json")
    p.add_argument("--plant", choices=["disk", "case1", "case2", "case3", "bubble", "flat"])
    p.add_argument("--sigma", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--write-manifest", dest="write_manifest")
    p.add_argument("--c0", type=float)

    p = sub.add_parser("bubble", parents=[common], help="entire radial bubble of the planar problem")
    p.add_argument("--alpha", type=float)
    p.add_argument("--t0", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--mass", type=float)
    p.add_argument("--r-max", dest="r_max", type=float)
    p.add_argument("--samples", type=int)

    p = sub.add_parser("validate", parents=[common], help="acceptance suite")
    p.add_argument("--only")
    p.add_argument("--emit-plot-data", dest="emit_plot_data", action="store_const", const=True)
    p.add_argument("--artifact")
    p.add_argument("--quick", action="store_const", const=True)

    p = sub.add_parser("mesh", parents=[common], help="build a mesh and evaluate a field on it")
    p.add_argument("--mesh")
    p.add_argument("--field", choices=["weights", "green", "regularized_green", "weight"])
    p.add_argument("--sigma", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--eps", type=float)

    p = sub.add_parser("runs", parents=[common], help="list recorded runs")
    p.add_argument("--limit", type=int, default=20)
    p.add_argument("--command-name", dest="command_name")
    return parser


def _configure_logging(level: Optional[str]) -> None:
    level = (level or settings.LOG_LEVEL).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _store(artifact: RunArtifact, run: RunOptions) -> None:
    if not run.store:
        return
    try:
        from vortexmf.db.database import record_run

        record_run(artifact.command, artifact.status, artifact.exit_code, artifact.config,
                   artifact.to_json(include_wall_time=False), artifact.tool_version, output_path=run.out,
                   provenance=artifact.provenance, wall_time=artifact.wall_time)
    except Exception as e:
        logger.error(f"Run store unavailable, artifact kept on disk only: {str(e)}")


def _list_runs(args: argparse.Namespace) -> int:
    from vortexmf.db.database import list_runs

    print(json.dumps(list_runs(limit=args.limit, command=args.command_name), indent=2))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.log_level)
    if args.command == "runs":
        return _list_runs(args)

    model, runner = COMMANDS[args.command]
    try:
        run_values = {k: v for k, v in (("out", args.out), ("threads", args.threads), ("seed", args.seed))
                      if v is not None}
        if args.no_store:
            run_values["store"] = False
        run = RunOptions(**run_values)
        config = collect_config(model, args, args.config)
        start = time.perf_counter()
        status, exit_code, payload, inputs = runner(config, run)
        wall_time = time.perf_counter() - start
    except VortexMFError as e:
        logger.error(e.detail)
        print(f"vortexmf {args.command}: {e.detail}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(f"vortexmf {args.command}: invalid options: {str(e)}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.error(f"Unexpected error in {args.command}: {str(e)}", exc_info=True)
        return 3

    if args.config:
        inputs = [Path(args.config)] + inputs
    artifact = RunArtifact(command=args.command, status=status, exit_code=exit_code,
                           config=to_jsonable(config.model_dump()), payload=to_jsonable(payload),
                           provenance=provenance_hash(inputs), wall_time=wall_time)
    if run.out:
        artifact.write(run.out)
        logger.info(f"Wrote {run.out} ({status}, exit {exit_code})")
    elif settings.OUTPUT_DIR:
        path = artifact.write(Path(settings.OUTPUT_DIR) / f"{args.command}.json")
        logger.info(f"Wrote {path} ({status}, exit {exit_code})")
    else:
        sys.stdout.write(artifact.to_json())
    _store(artifact, run)
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
