"""Command-line front end: `dampwave <command> [--config PATH] [--seed N] [--out DIR] [--format csv|json]`."""
import argparse
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from dbt.adapters.events.logging import AdapterLogger
from dbt_common.exceptions import DbtInternalError, DbtRuntimeError, DbtValidationError

from dampwave.__version__ import version
from dampwave.block import (
    IsolatingBlock,
    connecting_orbit_criteria,
    connecting_orbit_probe,
    conley_index,
    derive_radii,
    detect_bounded_orbits,
    equilibrium_solve,
    preliminary_radii,
    verify_block_family,
)
from dampwave.config import OutputFormat, RunConfig, load_config, with_overrides
from dampwave.exceptions import (
    InconclusiveConditionError,
    NewtonConvergenceError,
    RunConfigError,
)
from dampwave.nonlinearities import build_nonlinearity
from dampwave.reports import (
    basis_table,
    census_table,
    report_table,
    read_coefficient_table,
    trajectory_table,
    write_csv,
    write_json,
)
from dampwave.resonance import ConditionReport, Verdict, check_G, condition_verdict, decisive_verdict, default_r_grid
from dampwave.semiflow import Nonlinearity, StateE, divergence_probe, integrate
from dampwave.spectral import (
    DecayConstants,
    EllipticOperator1D,
    ProjectionNorms,
    ResonanceDecomposition,
    SpectralBasis,
    build_basis,
    constant_coefficient,
    decay_constants,
    decompose,
    projection_norms,
    tabulated_coefficient,
)


logger = AdapterLogger("Dampwave")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INCONCLUSIVE = 4

DEFAULT_HORIZON = 10.0


@dataclass
class RunContext:
    config: RunConfig
    basis: SpectralBasis
    decomp: ResonanceDecomposition
    decay: DecayConstants
    norms: ProjectionNorms
    f: Nonlinearity

    @classmethod
    def build(cls, config: RunConfig) -> "RunContext":
        op_config = config.operator
        table = config.coefficient_table_path
        if table is not None:
            coefficient = tabulated_coefficient(*read_coefficient_table(table))
        else:
            coefficient = constant_coefficient(op_config.coefficient)
        op = EllipticOperator1D(
            interval_length=op_config.interval_length,
            coefficient=coefficient,
            n_grid=op_config.n_grid,
            ellipticity=op_config.ellipticity,
        )
        basis = build_basis(op, op_config.n_modes)

        dynamics = config.dynamics
        if dynamics.k > basis.n_modes:
            raise RunConfigError(f"dynamics.k: resonant index {dynamics.k} exceeds the {basis.n_modes} retained modes")
        lambda_ = float(basis.eigenvalues[dynamics.k - 1])
        decomp = decompose(basis, lambda_, dynamics.c, tol=dynamics.tol, alpha=dynamics.alpha)
        decay = decay_constants(decomp, seed=config.checks.seed)
        norms = projection_norms(decomp)

        nl = config.nonlinearity
        f = build_nonlinearity(nl.name, basis=basis, decomp=decomp, scale=nl.scale, amplitude=nl.amplitude)
        f.check_conditions(basis.grid, seed=config.checks.seed)
        return cls(config=config, basis=basis, decomp=decomp, decay=decay, norms=norms, f=f)

    @property
    def out_dir(self) -> Path:
        return Path(self.config.output.directory)

    @property
    def horizon(self) -> float:
        return DEFAULT_HORIZON if self.config.dynamics.T is None else self.config.dynamics.T

    def r_grid(self) -> np.ndarray:
        checks = self.config.checks
        return default_r_grid(checks.r_grid_min, checks.r_grid_max, checks.r_grid_points)

    def emit(self, command: str, report: Dict[str, Any]) -> None:
        write_json(report, self.out_dir / f"{command}.json")
        if self.config.output.format == OutputFormat.csv:
            write_csv(report_table(report), self.out_dir / f"{command}_report.csv")

    def condition_reports(self) -> List[ConditionReport]:
        radii = preliminary_radii(
            self.decomp, self.decay, self.norms, self.f, self.basis, self.config.checks.ball_margin
        )
        checks = self.config.checks
        return condition_verdict(
            self.basis,
            self.decomp,
            self.f,
            B1_radius=radii.b1_radius,
            B2_radius=radii.b2_radius,
            R_grid=self.r_grid(),
            n_samples=checks.n_samples,
            n_sphere=checks.n_sphere,
            seed=checks.seed,
        )

    def g_report(self) -> ConditionReport:
        checks = self.config.checks
        radii = preliminary_radii(self.decomp, self.decay, self.norms, self.f, self.basis, checks.ball_margin)
        return check_G(
            self.basis,
            self.decomp,
            self.f,
            radii.b1_radius,
            radii.b2_radius,
            R_grid=self.r_grid(),
            n_samples=checks.n_samples,
            seed=checks.seed,
        )

    def isolating_block(self, g_report: Optional[ConditionReport] = None) -> IsolatingBlock:
        g_report = self.g_report() if g_report is None else g_report
        return derive_radii(
            self.decomp,
            self.decay,
            self.f,
            g_report,
            self.basis,
            norms=self.norms,
            ball_margin=self.config.checks.ball_margin,
        )


def cmd_basis(ctx: RunContext) -> int:
    """Eigenbasis dump, mode partition and decay constants."""
    basis, decomp, decay = ctx.basis, ctx.decomp, ctx.decay
    write_csv(basis_table(basis), ctx.out_dir / "basis.csv")
    summary = {
        "eigenvalues": basis.eigenvalues,
        "decomposition": decomp.summary(),
        "dim_e_minus": decomp.dim_e_minus,
        "kernel_dimension": decomp.kernel_dimension,
        "decay": decay,
        "projection_norms": ctx.norms,
    }
    ctx.emit("basis", summary)
    for i, mu in enumerate(basis.eigenvalues, start=1):
        print(f"mu_{i} = {mu:.10g}")
    print(f"d = {list(decomp.d)}")
    print(f"kernel modes: {[i + 1 for i in decomp.kernel_modes]}")
    print(f"dim E- = {decomp.dim_e_minus}")
    print(f"M = {decay.M:.6g}, delta = {decay.delta:.6g}")
    return EXIT_OK


def cmd_check(ctx: RunContext) -> int:
    """Run the LL, SR and G checks the nonlinearity supports."""
    reports = ctx.condition_reports()
    verdict = decisive_verdict(reports)
    ctx.emit("check", {"reports": reports, "verdict": verdict.value, "nonlinearity": ctx.f.name})
    for report in reports:
        print(f"{report.check}: {report.verdict.value} (margin {report.margin:.6g})")
    print(f"verdict: {verdict.value}")
    if verdict is Verdict.INCONCLUSIVE:
        print("every condition check is inconclusive", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_block(ctx: RunContext) -> int:
    """Build and verify the isolating block, then run the orbit census."""
    checks, dynamics = ctx.config.checks, ctx.config.dynamics
    g_report = ctx.g_report()
    block = ctx.isolating_block(g_report)
    verifications = verify_block_family(
        block,
        ctx.decomp,
        ctx.basis,
        ctx.f,
        s_values=checks.homotopy_s,
        n_boundary_samples=checks.n_boundary_samples,
        dt=checks.verify_dt,
        seed=checks.seed,
    )

    extra_states: List[StateE] = []
    equilibrium = None
    try:
        equilibrium = equilibrium_solve(ctx.decomp, ctx.basis, ctx.f, block=block)
    except NewtonConvergenceError as exc:
        logger.warning(f"No equilibrium seed for the census: {exc.msg}")
    if equilibrium is not None and equilibrium.in_block:
        extra_states.append(StateE(np.array(equilibrium.x), np.zeros(ctx.decomp.n_modes)))

    census = detect_bounded_orbits(
        block,
        ctx.decomp,
        ctx.basis,
        ctx.f,
        n_initial=checks.n_initial,
        T=dynamics.T,
        dt=dynamics.dt,
        seed=checks.seed,
        extra_states=extra_states,
        s=dynamics.s,
    )
    write_csv(census_table(census), ctx.out_dir / "census.csv")
    ctx.emit(
        "block",
        {
            "block": block,
            "radii_invariants": block.radii_invariants(),
            "g_report": g_report,
            "verifications": [
                dict(v.to_dict(), total_violations=v.total_violations, valid=v.valid) for v in verifications
            ],
            "equilibrium": equilibrium,
            "census": {
                "n_stayed": census.n_stayed,
                "n_exited": census.n_exited,
                "T": census.T,
                "dt": census.dt,
                "seed": census.seed,
                "s": census.s,
                "lemma_violations": census.lemma_violations,
            },
        },
    )
    print(f"block ({block.which}): R1 = {block.R1:.6g}, R2 = {block.R2:.6g}, R3 = {block.R3:.6g}, R4 = {block.R4:.6g}")
    for v in verifications:
        print(f"s = {v.s:g}: {v.total_violations} violations")
    print(f"census: {census.n_stayed} of {len(census.records)} orbits stayed")
    if any(not v.valid for v in verifications):
        print("block verification found boundary violations; enlarge the R grid", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_index(ctx: RunContext) -> int:
    """Conley index of the maximal bounded invariant set."""
    reports = ctx.condition_reports()
    verdict = decisive_verdict(reports)
    if verdict is Verdict.INCONCLUSIVE:
        raise InconclusiveConditionError("index", "no resonance condition was certified")
    report = conley_index(ctx.decomp, verdict)
    ctx.emit("index", {"index": report, "reports": reports})
    print(f"h(K_infty) = {report.rendered} ({report.condition_used})")
    print("K_infty nonempty: true")
    return EXIT_OK


def _initial_states(ctx: RunContext, count: int) -> List[StateE]:
    rng = np.random.default_rng(ctx.config.checks.seed)
    states = []
    for _ in range(count):
        x = rng.standard_normal(ctx.decomp.n_modes)
        y = rng.standard_normal(ctx.decomp.n_modes)
        scale = float(ctx.decomp.e_norm(x, y))
        states.append(StateE(x / scale, y / scale))
    return states


def cmd_simulate(ctx: RunContext) -> int:
    """Integrate seeded initial states and dump the trajectories."""
    dynamics = ctx.config.dynamics
    summaries = []
    for j, state in enumerate(_initial_states(ctx, ctx.config.checks.n_trajectories)):
        trajectory = integrate(state, ctx.horizon, dynamics.dt, dynamics.s, ctx.decomp, ctx.basis, ctx.f)
        write_csv(trajectory_table(trajectory), ctx.out_dir / f"trajectory_{j}.csv")
        summaries.append(
            {
                "index": j,
                "steps": len(trajectory.times) - 1,
                "initial_Enorm": float(trajectory.e_norm[0]),
                "final_Enorm": float(trajectory.e_norm[-1]),
                "max_Enorm": float(np.max(trajectory.e_norm)),
                "final_w1_norm": float(trajectory.w1_norm[-1]),
                "final_w2_norm": float(trajectory.w2_norm[-1]),
            }
        )
        print(f"trajectory {j}: final ||w||_E = {trajectory.e_norm[-1]:.6g}")
    ctx.emit(
        "simulate",
        {"T": ctx.horizon, "dt": dynamics.dt, "s": dynamics.s, "seed": ctx.config.checks.seed, "trajectories": summaries},
    )
    return EXIT_OK


def cmd_probe_divergence(ctx: RunContext) -> int:
    """Growth rate of the kernel functional under a constant kernel forcing."""
    y0 = np.zeros(ctx.decomp.n_modes)
    y0[ctx.decomp.kernel_modes[0]] = ctx.config.nonlinearity.amplitude
    report = divergence_probe(ctx.decomp, ctx.basis, y0, T=ctx.horizon, dt=ctx.config.dynamics.dt)
    ctx.emit("probe-divergence", report.to_dict())
    print(f"slope = {report.slope:.12g} (expected {report.expected:.12g}, relative error {report.relative_error:.3g})")
    print(f"unbounded: {'true' if report.unbounded else 'false'}")
    return EXIT_OK


def cmd_equilibrium(ctx: RunContext) -> int:
    """Newton solve of the stationary Galerkin system, located against the block when G holds."""
    g_report = ctx.g_report()
    block = None
    if g_report.verdict in (Verdict.G1, Verdict.G2):
        block = ctx.isolating_block(g_report)
    else:
        logger.info("G check inconclusive; equilibrium is not located against a block")
    record = equilibrium_solve(ctx.decomp, ctx.basis, ctx.f, block=block)
    ctx.emit("equilibrium", record.to_dict())
    print(f"equilibrium: residual {record.residual:.3e} after {record.iterations} iterations")
    print(f"||x||_E = {record.e_norm:.6g}, unstable dimension {record.unstable_dimension}")
    if record.in_block is not None:
        print(f"in block: {'true' if record.in_block else 'false'}")
    return EXIT_OK


def cmd_connect(ctx: RunContext) -> int:
    """Connecting-orbit criteria, with an optional unstable-manifold probe."""
    reports = ctx.condition_reports()
    verdict = decisive_verdict(reports)
    criteria = connecting_orbit_criteria(ctx.decomp, ctx.f, verdict, tol=ctx.config.dynamics.tol)
    result: Dict[str, Any] = {"criteria": criteria, "reports": reports, "probe": None}

    checks = ctx.config.checks
    if checks.probe:
        g_report = next((r for r in reports if r.check == "G"), None)
        block = ctx.isolating_block(g_report)
        probe = connecting_orbit_probe(
            block,
            ctx.decomp,
            ctx.basis,
            ctx.f,
            epsilon=checks.probe_epsilon,
            T=ctx.config.dynamics.T,
            dt=ctx.config.dynamics.dt,
        )
        result["probe"] = dict(probe.to_dict(), nonzero_stayers=probe.nonzero_stayers)
        print(f"probe: {probe.nonzero_stayers} of {len(probe.records)} trajectories stayed away from 0")
    ctx.emit("connect", result)
    print(f"lambda + nu = {criteria.shifted:.10g}, clause: {criteria.clause or 'none'}")
    print(criteria.conclusion)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunContext], int]] = {
    "basis": cmd_basis,
    "check": cmd_check,
    "block": cmd_block,
    "index": cmd_index,
    "simulate": cmd_simulate,
    "probe-divergence": cmd_probe_divergence,
    "equilibrium": cmd_equilibrium,
    "connect": cmd_connect,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration; defaults apply when omitted")
    common.add_argument("--seed", type=int, help="override checks.seed")
    common.add_argument("--out", help="override output.directory")
    common.add_argument("--format", choices=[f.value for f in OutputFormat], help="override output.format")

    parser = argparse.ArgumentParser(
        prog="dampwave",
        description="Galerkin simulation and resonance checks for the strongly damped wave equation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {version}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=(fn.__doc__ or "").strip() or None)
    return parser


def run(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else RunConfig.parse({})
    config = with_overrides(config, seed=args.seed, out=args.out, fmt=args.format)
    ctx = RunContext.build(config)
    logger.debug(f"Running {args.command} with seed {config.checks.seed}")
    return COMMANDS[args.command](ctx)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (RunConfigError, DbtValidationError) as exc:
        print(f"error: {exc.msg}", file=sys.stderr)
        return EXIT_CONFIG
    except InconclusiveConditionError as exc:
        print(f"inconclusive: {exc.msg}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (DbtRuntimeError, DbtInternalError) as exc:
        print(f"error: {exc.msg}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
