"""
Command-line frontend: synthesize, simulate, verify, table and rerun.

Every command writes its outputs plus a ``<command>_manifest.json`` into the
output directory and returns a process exit code.
"""

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError
from pydantic_core import to_jsonable_python

from src.config.settings import settings
from src.core.control import extract_gains
from src.core.lyapunov import lqr_gain
from src.core.ppr_core import hjb_degree_residual, synthesize, truncation_slope
from src.core.problem import PolyCost, PolyDynamics
from src.data.cache import artifact_cache
from src.data.results import ResultWriter
from src.data.storage import CoefficientStore
from src.models.benchmarks import (
    AIRCRAFT_CONTROLLER_NAMES,
    AIRCRAFT_REFERENCE_COSTS,
    ALLEN_CAHN_CONTROLLER_NAMES,
    ALLEN_CAHN_REFERENCE_COSTS,
    ShiftedModel,
    aircraft_f8,
    aircraft_initial_state,
    allen_cahn,
    allen_cahn_initial_state,
    count_interfaces,
)
from src.models.loader import load_model
from src.models.schemas import AllenCahnConfig
from src.sim.simulate import METHODS, SimOptions, simulate
from src.cli.schemas import (
    DegreeReport,
    RunManifest,
    SimulationSummary,
    SynthesisReport,
    TableRow,
    VerificationReport,
)
from src.utils.exceptions import DimensionError, ModelError, PPRError, VerificationError
from src.utils.logger import logger


@dataclass
class ModelBundle:
    dyn: PolyDynamics
    cost: PolyCost
    model_info: Dict[str, Any]
    shifted: Optional[ShiftedModel] = None
    stiff: bool = False


@dataclass
class RunContext:
    command: str
    argv: List[str]
    out_dir: Path
    started: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    outputs: List[str] = field(default_factory=list)

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.outputs.append(str(p))
        return p

    def write_manifest(self, model: Dict[str, Any], degree=None, horizon=None, tolerances=None) -> Path:
        manifest = RunManifest(
            command=self.command,
            argv=self.argv,
            model=model,
            degree=degree,
            horizon=horizon,
            tolerances=tolerances or {},
            outputs=list(self.outputs),
            timestamp=self.started,
            version=settings.app_version,
        )
        return ResultWriter.write_json(self.out_dir / f"{self.command}_manifest.json", manifest)


def _context(args, command: str) -> RunContext:
    out_dir = Path(args.out or settings.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return RunContext(command=command, argv=list(args.argv), out_dir=out_dir)


def _allen_cahn_config(n: int, epsilon: float, z0: float, control_nodes=None) -> AllenCahnConfig:
    try:
        return AllenCahnConfig(n=n, epsilon=epsilon, z0=z0, control_nodes=control_nodes)
    except ValidationError as e:
        raise ModelError(f"Invalid Allen-Cahn configuration: {str(e)}")


def _build_allen_cahn(cfg: AllenCahnConfig) -> ModelBundle:
    model = allen_cahn(cfg)
    model_info = {"source": "allen-cahn", **cfg.model_dump(), "control_nodes": model.control_nodes,
            "state_dimension": model.dyn.n}
    return ModelBundle(model.dyn, model.cost, model_info, shifted=model, stiff=True)


def resolve_model(args) -> ModelBundle:
    """Build or load the model named by --model, sharing builds through the artifact cache."""
    if args.model == "aircraft":
        def build():
            dyn, cost = aircraft_f8()
            return ModelBundle(dyn, cost, {"source": "aircraft"})
        return artifact_cache.get_or_build(("model", "aircraft"), build)
    if args.model == "allen-cahn":
        cfg = _allen_cahn_config(args.n, args.epsilon, args.z0, args.control_nodes)
        key = ("model", "allen-cahn", cfg.n, cfg.epsilon, cfg.z0, tuple(cfg.control_nodes or ()))
        return artifact_cache.get_or_build(key, lambda: _build_allen_cahn(cfg))
    dyn, cost = load_model(args.model)
    return ModelBundle(dyn, cost, {"source": "file", "path": str(Path(args.model).resolve())})


def degree_arg(text: str) -> int:
    try:
        d = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"degree must be an integer, got '{text}'")
    if d < 2:
        raise argparse.ArgumentTypeError(f"degree must be >= 2, got {d}")
    return d


def int_list(text: str) -> List[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got '{text}'")
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {v}")
    return v


def cmd_synthesize(args) -> int:
    ctx = _context(args, "synthesize")
    bundle = resolve_model(args)
    dyn, cost = bundle.dyn, bundle.cost
    start = datetime.now(timezone.utc)

    value = synthesize(dyn, cost, args.degree, tol=args.tol)
    ctrl = extract_gains(value, dyn, cost.R)

    degrees = []
    for stats in value.stats:
        hjb = None
        if args.hjb_samples > 0:
            hjb = hjb_degree_residual(dyn, cost, value, stats.degree, samples=args.hjb_samples, relative=True)
        degrees.append(DegreeReport(
            degree=stats.degree, solve_residual=stats.residual, hjb_residual=hjb, seconds=stats.seconds,
        ))
    slope = truncation_slope(dyn, cost, value) if args.slope else None
    defect = float(np.abs(ctrl.gains[0] - lqr_gain(dyn.B, cost.R, value.V2)).max())

    meta = {"model": bundle.model_info, "degree": args.degree}
    CoefficientStore.save_value_function(ctx.path("value.json"), value, meta)
    CoefficientStore.save_controller(ctx.path("controller.json"), ctrl, meta)
    report = SynthesisReport(
        model=bundle.model_info,
        n=dyn.n,
        m=dyn.m,
        degree=value.d,
        controller_degree=ctrl.degree,
        degrees=degrees,
        linear_gain=ctrl.gains[0].tolist(),
        lqr_gain_defect=defect,
        truncation_slope=slope,
        total_seconds=(datetime.now(timezone.utc) - start).total_seconds(),
    )
    ResultWriter.write_json(ctx.path("synthesis_report.json"), report)
    ctx.write_manifest(bundle.model_info, degree=args.degree, tolerances={"solver_tol": args.tol or settings.solver_tol})

    print(pd.DataFrame([d.model_dump() for d in degrees]).to_string(index=False))
    print(f"K1 = {np.array2string(ctrl.gains[0], precision=6)} (LQR defect {defect:.1e})")
    print(f"Wrote {', '.join(ctx.outputs)}")
    return 0


def _initial_state(args, bundle: ModelBundle) -> np.ndarray:
    if args.x0 is not None:
        return np.asarray(args.x0, dtype=float)
    if args.x0_file is not None:
        path = Path(args.x0_file)
        if not path.exists():
            raise ModelError(f"Initial state file not found: {path}")
        return np.loadtxt(path, dtype=float).reshape(-1)
    if args.alpha0_deg is not None:
        if bundle.model_info["source"] != "aircraft":
            raise DimensionError("--alpha0-deg applies to the aircraft model only")
        return aircraft_initial_state(args.alpha0_deg)
    if bundle.shifted is not None:
        return allen_cahn_initial_state(bundle.shifted)
    raise DimensionError("Give an initial state with --x0, --x0-file or --alpha0-deg")


def _sim_options(args, bundle: ModelBundle) -> SimOptions:
    base = SimOptions.stiff() if bundle.stiff else SimOptions()
    return SimOptions(
        rtol=args.rtol or base.rtol,
        atol=args.atol or base.atol,
        method=args.method or base.method,
    )


def cmd_simulate(args) -> int:
    ctx = _context(args, "simulate")
    bundle = resolve_model(args)
    dyn, cost, shifted = bundle.dyn, bundle.cost, bundle.shifted

    if args.open_loop:
        ctrl = None
        u_offset = -shifted.u_ref if shifted is not None else None
    else:
        if args.controller is None:
            raise DimensionError("Give --controller FILE or --open-loop")
        ctrl = CoefficientStore.load_controller(args.controller)
        u_offset = None
    x0 = _initial_state(args, bundle)
    opts = _sim_options(args, bundle)

    traj = simulate(dyn, ctrl, x0, args.T, opts, cost=cost, u_offset=u_offset)
    states = shifted.physical(traj.states) if (args.unshift and shifted is not None) else None
    ResultWriter.write_trajectory(ctx.path("trajectory.csv"), traj, states)
    summary = SimulationSummary(
        horizon=args.T,
        t_final=float(traj.times[-1]),
        samples=int(traj.times.size),
        final_state_norm=float(np.linalg.norm(traj.final_state)),
        total_cost=traj.total_cost,
        diverged=traj.diverged,
        message=traj.message,
        interfaces=count_interfaces(shifted, traj.final_state) if shifted is not None else None,
    )
    ResultWriter.write_json(ctx.path("summary.json"), summary)
    ctx.write_manifest(bundle.model_info, horizon=args.T, tolerances={"rtol": opts.rtol, "atol": opts.atol})

    print(summary.model_dump_json(indent=2))
    return 0


def cmd_verify(args) -> int:
    ctx = _context(args, "verify")
    bundle = resolve_model(args)
    dyn, cost = bundle.dyn, bundle.cost
    value = CoefficientStore.load_value_function(args.value)
    if value.n != dyn.n:
        raise DimensionError(f"Value function is over n={value.n}, model over n={dyn.n}")
    value_model = CoefficientStore.read_meta(args.value).get("model")
    model_matches = None if value_model is None else value_model == to_jsonable_python(bundle.model_info)
    if model_matches is False:
        logger.warning(f"Value file was synthesized for {value_model}, verifying against {bundle.model_info}")

    threshold = args.threshold or settings.hjb_tol
    relative = not args.absolute
    residuals = {
        k: hjb_degree_residual(dyn, cost, value, k, samples=args.samples, relative=relative)
        for k in range(2, value.d + 1)
    }
    failed = [k for k, r in residuals.items() if not r <= threshold]
    slope = truncation_slope(dyn, cost, value, samples=min(args.samples, 20))
    report = VerificationReport(
        degree=value.d,
        threshold=threshold,
        relative=relative,
        residuals={str(k): r for k, r in residuals.items()},
        failed_degrees=failed,
        truncation_slope=None if np.isnan(slope) else slope,
        value_model=value_model,
        model_matches=model_matches,
        passed=not failed,
    )
    ResultWriter.write_json(ctx.path("verify_report.json"), report)
    ctx.write_manifest(bundle.model_info, degree=value.d, tolerances={"threshold": threshold})

    table = pd.DataFrame({
        "degree": list(residuals),
        "residual": list(residuals.values()),
        "status": ["FAIL" if k in failed else "ok" for k in residuals],
    })
    print(table.to_string(index=False))
    print(f"truncation slope: {slope:.3f} (expected >= {value.d + 0.5})")
    if failed:
        raise VerificationError(
            f"HJB residual above {threshold:g} at degree(s) {', '.join(map(str, failed))}"
        )
    return 0


@dataclass
class _Cell:
    bench: str
    controller_degree: int
    alpha0_deg: Optional[float] = None
    epsilon: Optional[float] = None


def _bench_value(bundle: ModelBundle, d: int, tol: Optional[float]):
    key = ("value", tuple(sorted((k, str(v)) for k, v in bundle.model_info.items())), d, tol)
    return artifact_cache.get_or_build(key, lambda: synthesize(bundle.dyn, bundle.cost, d, tol=tol))


def _run_cell(cell: _Cell, bundle: ModelBundle, args, top_degree: int) -> TableRow:
    j = cell.controller_degree
    names = AIRCRAFT_CONTROLLER_NAMES if cell.bench == "aircraft" else ALLEN_CAHN_CONTROLLER_NAMES
    row = TableRow(
        bench=cell.bench,
        controller=names.get(j + 1, f"degree-{j} PPR"),
        controller_degree=j,
        value_degree=j + 1,
        alpha0_deg=cell.alpha0_deg,
        epsilon=cell.epsilon,
        n=bundle.dyn.n,
    )
    try:
        value = _bench_value(bundle, top_degree, args.tol).truncated(j + 1)
        ctrl = extract_gains(value, bundle.dyn, bundle.cost.R)
        if cell.bench == "aircraft":
            x0 = aircraft_initial_state(cell.alpha0_deg)
            T = args.T or 12.0
        else:
            x0 = allen_cahn_initial_state(bundle.shifted)
            T = args.T or 1000.0
        traj = simulate(bundle.dyn, ctrl, x0, T, _sim_options(args, bundle), cost=bundle.cost)
    except (PPRError, np.linalg.LinAlgError, FloatingPointError) as e:
        logger.error(f"Cell {cell} failed: {str(e)}")
        row.error = str(e)
        return row

    final_norm = float(np.linalg.norm(traj.final_state))
    row.diverged = traj.diverged
    row.final_state_norm = final_norm
    row.recovered = (not traj.diverged) and final_norm <= settings.recovery_ratio * float(np.linalg.norm(x0))
    row.reference_cost = _reference_cost(cell, bundle, args)
    # cost of a diverged run is a partial integral
    if traj.diverged:
        return row
    row.cost = traj.total_cost
    if row.reference_cost is not None and np.isfinite(row.cost):
        row.delta_abs = row.cost - row.reference_cost
        row.delta_rel = row.delta_abs / row.reference_cost
    return row


def _reference_cost(cell: _Cell, bundle: ModelBundle, args) -> Optional[float]:
    d = cell.controller_degree + 1
    if cell.bench == "aircraft":
        T = args.T or 12.0
        return AIRCRAFT_REFERENCE_COSTS.get(d) if cell.alpha0_deg == 25 and T == 12.0 else None
    model_info = bundle.model_info
    if model_info["n"] != 129 or model_info["z0"] != 0.5 or (args.T or 1000.0) != 1000.0:
        return None
    return ALLEN_CAHN_REFERENCE_COSTS.get(cell.epsilon, {}).get(d)


def cmd_table(args) -> int:
    ctx = _context(args, "table")
    if args.bench == "aircraft":
        degrees = args.degrees or [1, 3, 5, 7]
        bundles = {None: resolve_model(argparse.Namespace(model="aircraft"))}
        cells = [_Cell("aircraft", j, alpha0_deg=a) for a in (args.alpha0_deg or [25.0]) for j in degrees]
    else:
        degrees = args.degrees or [1, 2, 3]
        bundles = {}
        for eps in args.epsilon or [0.01]:
            cfg = _allen_cahn_config(args.n, eps, args.z0, args.control_nodes)
            key = ("model", "allen-cahn", cfg.n, cfg.epsilon, cfg.z0, tuple(cfg.control_nodes or ()))
            bundles[eps] = artifact_cache.get_or_build(key, lambda cfg=cfg: _build_allen_cahn(cfg))
        cells = [_Cell("allen-cahn", j, epsilon=eps) for eps in bundles for j in degrees]
    if min(degrees) < 1:
        raise DimensionError(f"Controller degrees must be >= 1, got {degrees}")
    top_degree = max(degrees) + 1

    def run(cell: _Cell) -> TableRow:
        bundle = bundles[cell.epsilon] if cell.bench == "allen-cahn" else bundles[None]
        return _run_cell(cell, bundle, args, top_degree)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        rows = list(pool.map(run, cells))

    table_path = ctx.path("table.csv")
    ResultWriter.write_table(table_path, [r.model_dump() for r in rows])
    model = {"bench": args.bench}
    if args.bench == "allen-cahn":
        model.update(n=args.n, z0=args.z0, epsilon=list(bundles))
    ctx.write_manifest(model, degree=top_degree, horizon=args.T, tolerances={"solver_tol": args.tol or settings.solver_tol})

    columns = ["controller", "alpha0_deg", "epsilon", "cost", "reference_cost", "delta_abs", "diverged", "recovered", "error"]
    df = pd.DataFrame([r.model_dump() for r in rows])
    print(df[[c for c in columns if df[c].notna().any()]].to_string(index=False))
    return 0


def cmd_rerun(args) -> int:
    path = Path(args.manifest)
    if not path.exists():
        raise ModelError(f"Manifest not found: {path}")
    try:
        manifest = RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ModelError(f"Invalid manifest {path}: {str(e)}")
    if not manifest.argv or manifest.argv[0] == "rerun":
        raise ModelError(f"Manifest {path} does not hold a replayable command")
    logger.info(f"Replaying: {' '.join(manifest.argv)}")
    return main(manifest.argv)


def _model_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("model")
    group.add_argument("--model", required=True, help="aircraft, allen-cahn, or a JSON model file")
    group.add_argument("--n", type=int, default=129, help="Allen-Cahn node count, boundaries included (default: 129)")
    group.add_argument("--epsilon", type=positive_float, default=0.01, help="Allen-Cahn diffusion coefficient (default: 0.01)")
    group.add_argument("--z0", type=float, default=0.5, help="Allen-Cahn target interface location (default: 0.5)")
    group.add_argument("--control-nodes", type=int_list, default=None,
                       help="Allen-Cahn actuator nodes, 1-based and comma-separated")
    return parent


def _common_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--out", default=None, help=f"Output directory (default: {settings.output_dir})")
    parent.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level")
    return parent


def _integrator_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("integrator")
    group.add_argument("--rtol", type=positive_float, default=None, help="Relative tolerance (model-dependent default)")
    group.add_argument("--atol", type=positive_float, default=None, help="Absolute tolerance (model-dependent default)")
    group.add_argument("--method", choices=METHODS, default=None, help="Integrator (default: by model)")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=settings.app_name, description=settings.app_description)
    sub = parser.add_subparsers(dest="command", required=True)
    common, model, integ = _common_options(), _model_options(), _integrator_options()

    p = sub.add_parser("synthesize", parents=[common, model], help="Compute a value function and feedback law")
    p.add_argument("--degree", type=degree_arg, required=True, help="Value-function degree d >= 2")
    p.add_argument("--tol", type=positive_float, default=None, help="Solve residual tolerance")
    p.add_argument("--hjb-samples", type=int, default=20, help="Directions for the per-degree HJB check (0 skips it)")
    p.add_argument("--slope", action="store_true", help="Also estimate the HJB truncation slope")
    p.set_defaults(handler=cmd_synthesize)

    p = sub.add_parser("simulate", parents=[common, model, integ], help="Integrate the closed or open loop")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--controller", default=None, help="Controller file from `synthesize`")
    src.add_argument("--open-loop", action="store_true", help="Zero physical input")
    x0 = p.add_mutually_exclusive_group()
    x0.add_argument("--x0", type=float, nargs="+", default=None, help="Initial state (shifted coordinates for allen-cahn)")
    x0.add_argument("--x0-file", default=None, help="Whitespace-separated initial state")
    x0.add_argument("--alpha0-deg", type=float, default=None, help="Aircraft stall preset: angle of attack in degrees")
    p.add_argument("--T", type=positive_float, required=True, help="Horizon")
    p.add_argument("--unshift", action="store_true", help="Write physical rather than shifted states")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("verify", parents=[common, model], help="Check HJB residuals of a value function")
    p.add_argument("--value", required=True, help="Value-function file from `synthesize`")
    p.add_argument("--threshold", type=positive_float, default=None, help=f"Residual threshold (default: {settings.hjb_tol:g})")
    p.add_argument("--absolute", action="store_true", help="Compare absolute rather than relative residuals")
    p.add_argument("--samples", type=int, default=50, help="Random unit directions per degree")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("table", parents=[common, integ], help="Run a benchmark sweep")
    p.add_argument("--bench", choices=["aircraft", "allen-cahn"], required=True)
    p.add_argument("--degrees", type=int_list, default=None, help="Controller degrees, comma-separated")
    p.add_argument("--alpha0-deg", type=float, nargs="+", default=None, help="Aircraft stall angles (default: 25)")
    p.add_argument("--epsilon", type=positive_float, nargs="+", default=None, help="Allen-Cahn diffusion values (default: 0.01)")
    p.add_argument("--n", type=int, default=129, help="Allen-Cahn node count (default: 129)")
    p.add_argument("--z0", type=float, default=0.5, help="Allen-Cahn target interface (default: 0.5)")
    p.add_argument("--control-nodes", type=int_list, default=None, help="Allen-Cahn actuator nodes")
    p.add_argument("--T", type=positive_float, default=None, help="Horizon (default: 12 aircraft, 1000 allen-cahn)")
    p.add_argument("--tol", type=positive_float, default=None, help="Solve residual tolerance")
    p.add_argument("--jobs", type=int, default=1, help="Cells run concurrently")
    p.set_defaults(handler=cmd_table)

    p = sub.add_parser("rerun", help="Replay the command stored in a manifest")
    p.add_argument("manifest", help="Path to a *_manifest.json file")
    p.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level")
    p.set_defaults(handler=cmd_rerun, out=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    if args.verbose:
        logger.setLevel(logging.DEBUG)
        for handler in logger.handlers:
            handler.setLevel(logging.DEBUG)
    try:
        return args.handler(args)
    except PPRError as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
