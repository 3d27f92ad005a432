"""Command-line experiment runner.

Every subcommand reads an INI config, writes CSV results plus a manifest
into the output directory and optionally SVG plots. Exit codes: 0 ok,
2 configuration error, 3 numerical failure, 4 mismatch against a frozen
fixture given with ``--check``.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .binaryctrl import InstantaneousProblem, feedback_boltzmann_run, write_feedback_csv
from .config import ExperimentConfig, load, parse
from .errors import ConfigError, LeadFollowError, NumericalError
from .gamma_limit import TrackingProblem, gamma_sweep, write_gamma_csv
from .kernels import CATALOG, KernelSpec, certify_growth
from .kinetic import KineticControls, KineticEnsemble, quasi_invariant_sweep, write_kinetic_csv
from .meanfield import (MeanFieldProblem, box_sampler, convergence_study, stability_experiment,
                        write_convergence_csv)
from .microdynamics import ControlSignal, SwarmState, integrate
from .optcontrol import CostSpec, optimize, write_control_csv
from .svgplot import line_plot

SUBCOMMANDS = ("simulate", "meanfield-converge", "stability", "optimize", "gamma-sweep",
               "kinetic-sweep", "feedback-control", "certify-kernels")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 2, 3, 4


class Run:
    """Output bookkeeping for one invocation."""

    def __init__(self, cfg: ExperimentConfig, out: Path, seed: int, plots: bool):
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.plots = plots
        self.files: list[Path] = []
        self.seeds_used: list[int] = [seed]
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    def plot(self, name: str, *args, **kwargs) -> None:
        if self.plots:
            line_plot(self.path(name), *args, **kwargs)

    def sampler(self):
        return box_sampler(self.cfg.low, self.cfg.high, self.cfg.d, self.cfg.sampler)

    def control(self) -> ControlSignal:
        return ControlSignal(self.cfg.control_breakpoints(), self.cfg.control_values(), self.cfg.u_max)


def _simulate(run: Run) -> str:
    cfg = run.cfg
    atoms = run.sampler()(run.seed, cfg.N)
    traj = integrate(SwarmState(cfg.leader_array(), atoms), run.control(), cfg.kernels(), cfg.dt, method=cfg.method)
    traj.to_csv(run.path("trajectory.csv"))
    series = {"follower mean": (traj.times, traj.followers[:, :, 0].mean(axis=1))}
    if traj.leaders.shape[1]:
        series["leader mean"] = (traj.times, traj.leaders[:, :, 0].mean(axis=1))
    run.plot("trajectory.svg", series, "first coordinate", "t", "x_1")
    return "trajectory.csv"


def _meanfield_converge(run: Run) -> str:
    cfg = run.cfg
    rows = convergence_study(run.sampler(), cfg.leader_array(), run.control(), cfg.kernels(), cfg.dt,
                             cfg.n_list, cfg.n_ref, seed=run.seed, workers=cfg.workers, w1_stride=cfg.w1_stride)
    write_convergence_csv(run.path("convergence.csv"), rows, timing=cfg.timing)
    run.plot("convergence.svg", {"max W1": ([r.n for r in rows], [r.max_w1 for r in rows])},
             "mean-field convergence", "N", "max_t W1", logx=True, logy=True)
    return "convergence.csv"


def _stability(run: Run) -> str:
    cfg = run.cfg
    problem = MeanFieldProblem(run.sampler()(run.seed, cfg.N), cfg.leader_array(), run.control(),
                               cfg.kernels(), cfg.dt)
    with open(run.path("stability.csv"), "w") as fh:
        fh.write("delta,ratio,chi0,chi_max,rate,bound,within_bound\n")
        for delta in cfg.deltas:
            rep = stability_experiment(problem, delta, delta, seed=run.seed, w1_stride=cfg.w1_stride)
            fh.write(f"{delta:.17g},{rep.ratio:.17g},{rep.chi0:.17g},{rep.chi_max:.17g},{rep.rate:.17g},"
                     f"{rep.bound:.17g},{str(rep.ratio <= rep.bound).lower()}\n")
    return "stability.csv"


def _cost(cfg: ExperimentConfig, scaling: str | None = None) -> CostSpec:
    target = cfg.target_array()
    if target.size != cfg.d:
        target = target.reshape(cfg.N, cfg.d)
    return CostSpec(target, cfg.control_weight, scaling or cfg.scaling)


def _optimize(run: Run) -> str:
    cfg = run.cfg
    initial = SwarmState(cfg.leader_array(), run.sampler()(run.seed, cfg.N))
    u0 = run.control() if cfg.values else None
    res = optimize(initial, _cost(cfg), cfg.kernels(), cfg.T, cfg.dt, n_pieces=cfg.control_breakpoints().size - 1,
                   u_max=cfg.u_max, step=cfg.step, max_iter=cfg.max_iter, tol=cfg.tol, u0=u0)
    write_control_csv(run.path("control.csv"), res.control)
    run.path("summary.txt").write_text(res.summary())
    with open(run.path("cost_history.csv"), "w") as fh:
        fh.write("iteration,cost\n")
        for k, J in enumerate(res.history):
            fh.write(f"{k},{J:.17g}\n")
    run.plot("cost_history.svg", {"cost": (list(range(len(res.history))), res.history)},
             "projected gradient", "iteration", "J")
    return "control.csv"


def _gamma_sweep(run: Run) -> str:
    cfg = run.cfg
    problem = TrackingProblem(run.sampler(), cfg.leader_array(), cfg.kernels(), _cost(cfg, "mean"), T=cfg.T,
                              dt=cfg.dt, n_pieces=cfg.control_breakpoints().size - 1, u_max=cfg.u_max,
                              seed=run.seed, tol=cfg.tol, max_iter=cfg.max_iter, step=cfg.step)
    report = gamma_sweep(problem, cfg.n_list, cfg.n_ref, workers=cfg.workers)
    write_gamma_csv(run.path("gamma_sweep.csv"), report)
    run.plot("gamma_sweep.svg", {"|J_N - J_ref|": ([r.n for r in report.rows], report.cost_gaps()),
                                 "control gap": ([r.n for r in report.rows], [r.control_gap for r in report.rows])},
             "optimal costs and controls", "N", "gap", logx=True, logy=True)
    return "gamma_sweep.csv"


def _kinetic_controls(cfg: ExperimentConfig) -> KineticControls:
    u = cfg.u or [0.0] * cfg.d
    u_star = cfg.u_star or [0.0] * cfg.d
    return KineticControls.constant(u, u_star, cfg.T, cfg.u_max)


def _kinetic_sweep(run: Run) -> str:
    cfg = run.cfg
    seeds = [run.seed + k for k in range(len(cfg.seeds))]
    run.seeds_used = seeds
    table = quasi_invariant_sweep(cfg.eps_list, cfg.M, cfg.p, _kinetic_controls(cfg), cfg.kernels(), cfg.T,
                                  run.sampler(), seeds=seeds, limit_dt=cfg.limit_dt or None, workers=cfg.workers)
    write_kinetic_csv(run.path("kinetic_sweep.csv"), table.rows, timing=cfg.timing)
    med = table.medians()
    run.plot("kinetic_sweep.svg", {"median max W1": (list(med), list(med.values()))},
             "quasi-invariant limit", "eps", "max_t W1", logx=True, logy=True)
    return "kinetic_sweep.csv"


def _feedback(run: Run) -> str:
    cfg = run.cfg
    ens = KineticEnsemble(run.sampler()(run.seed, cfg.M), cfg.p, seed=run.seed)
    kernels = cfg.kernels()
    target = cfg.target_array()

    def problem(gamma):
        return InstantaneousProblem.discounted(target, gamma, cfg.rate, cfg.dt, cfg.p, cfg.u_max)

    on = feedback_boltzmann_run(ens, problem(cfg.gamma), kernels, cfg.T)
    off = feedback_boltzmann_run(ens, problem(cfg.gamma), kernels, cfg.T, control=False)
    write_feedback_csv(run.path("feedback.csv"), on)
    write_feedback_csv(run.path("feedback_uncontrolled.csv"), off)
    with open(run.path("feedback_gamma.csv"), "w") as fh:
        fh.write("gamma,discounted_state_cost,discounted_control_energy,realized_cost\n")
        for g in cfg.gamma_list:
            r = feedback_boltzmann_run(ens, problem(g), kernels, cfg.T)
            fh.write(f"{g:.17g},{r.discounted_state_cost:.17g},{r.discounted_control_energy:.17g},"
                     f"{r.realized_cost:.17g}\n")
    run.plot("feedback.svg", {"feedback": (on.times[1:], on.cumulative), "u = 0": (off.times[1:], off.cumulative)},
             "cumulative discounted cost", "t", "cost")
    return "feedback.csv"


def _certify(run: Run) -> str:
    cfg = run.cfg
    jobs = [("catalog", KernelSpec(kind, (), cfg.d), role)
            for kind in CATALOG if kind != "table" for role in ("h", "g")]
    jobs += [("config", cfg.kernel("h"), "h"), ("config", cfg.kernel("g"), "g")]
    failed = []
    with open(run.path("certificates.csv"), "w") as fh:
        fh.write("source,role,kind,constant,max_ratio,lipschitz_estimate,passed\n")
        for source, spec, role in jobs:
            c = certify_growth(spec, cfg.radius, cfg.n_samples, run.seed, role)
            fh.write(f"{source},{role},{c.kind},{c.constant:.17g},{c.max_ratio:.17g},"
                     f"{c.lipschitz_estimate:.17g},{str(c.passed).lower()}\n")
            if not c.passed:
                failed.append(f"{source}:{c.kind}:{role}")
    if failed:
        raise NumericalError("growth certificate failed for " + ", ".join(failed))
    return "certificates.csv"


_HANDLERS = {"simulate": _simulate, "meanfield-converge": _meanfield_converge, "stability": _stability,
             "optimize": _optimize, "gamma-sweep": _gamma_sweep, "kinetic-sweep": _kinetic_sweep,
             "feedback-control": _feedback, "certify-kernels": _certify}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(run: Run, subcommand: str) -> Path:
    path = run.out / "manifest.txt"
    lines = [f"subcommand={subcommand}", f"config={run.cfg.source}", f"config_sha256={run.cfg.sha256}",
             f"seeds={','.join(str(s) for s in run.seeds_used)}", f"leadfollow={__version__}",
             f"python={platform.python_version()}", f"numpy={np.__version__}", f"scipy={scipy.__version__}"]
    for f in run.files:
        lines.append(f"file {f.name} sha256={_sha256(f)}")
    path.write_text("\n".join(lines) + "\n")
    return path


def _read_table(path: Path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


def compare_to_fixture(produced: Path, fixture: Path, rtol: float = 1e-9, atol: float = 1e-12) -> list[str]:
    """Differences between two CSV tables; runtime columns are ignored."""
    h1, r1 = _read_table(produced)
    h2, r2 = _read_table(fixture)
    if h1 != h2:
        return [f"header differs: {h1} vs {h2}"]
    if len(r1) != len(r2):
        return [f"row count differs: {len(r1)} vs {len(r2)}"]
    problems = []
    for i, (a, b) in enumerate(zip(r1, r2)):
        for name, x, y in zip(h1, a, b):
            if name == "runtime_s":
                continue
            try:
                fx, fy = float(x), float(y)
            except ValueError:
                if x != y:
                    problems.append(f"row {i + 1} {name}: {x!r} vs {y!r}")
                continue
            if not math.isclose(fx, fy, rel_tol=rtol, abs_tol=atol):
                problems.append(f"row {i + 1} {name}: {fx!r} vs {fy!r}")
    return problems


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leadfollow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config entry (repeatable)")
        p.add_argument("--out", help="output directory (default: [output] dir)")
        p.add_argument("--seed", type=int, help="base seed (default: first entry of [study] seeds)")
        p.add_argument("--plots", choices=("on", "off"), help="write SVG plots")
        p.add_argument("--check", metavar="FIXTURE", help="compare the main CSV against a frozen fixture")
    p = sub.add_parser("validate")
    p.add_argument("--config", required=True)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    return parser


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        try:
            diags = parse(Path(args.config).read_text(), args.config, args.overrides)[1]
        except OSError as exc:
            _err(str(exc))
            return EXIT_CONFIG
        for d in diags:
            print(d)
        return EXIT_CONFIG if diags else EXIT_OK
    try:
        cfg = load(args.config, args.overrides)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    seed = args.seed if args.seed is not None else (cfg.seeds[0] if cfg.seeds else 0)
    plots = cfg.plots if args.plots is None else args.plots == "on"
    run = Run(cfg, Path(args.out or cfg.out_dir), seed, plots)
    try:
        main_csv = _HANDLERS[args.command](run)
    except NumericalError as exc:
        _err(f"{args.command}: numerical failure: {exc}")
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        _err(f"{args.command}: {exc}")
        return EXIT_CONFIG
    except (ArithmeticError, LeadFollowError, np.linalg.LinAlgError) as exc:
        _err(f"{args.command}: numerical failure: {exc}")
        return EXIT_NUMERICAL
    write_manifest(run, args.command)
    print(f"wrote {len(run.files)} files to {run.out}")
    if args.check:
        problems = compare_to_fixture(run.out / main_csv, Path(args.check))
        if problems:
            for p in problems:
                print(f"check: {p}", file=sys.stderr)
            return EXIT_CHECK
        print("check: matches fixture")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
