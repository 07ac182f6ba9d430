"""``emcov`` command-line tool.

Exit status: 0 on success, 2 for invalid input (bad flags, scenario or
snapshot file), 3 for numerical failures during a run.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import BEAMFORM_METHODS, ConfigError, load_scenario
from .detection import DETECTION_METHODS, PENALTY_RULES
from .em import EmConfig, IllConditionedSnapshotError, LikelihoodDecreaseError, run_em
from .experiments import (
    BEAMFORM_COLUMNS,
    BEAMPATTERN_COLUMNS,
    CONVERGENCE_COLUMNS,
    DETECT_COLUMNS,
    beamform_sweep,
    beampattern_average,
    convergence_sweep,
    detection_sweep,
    with_missingness,
)
from .linalg import NotHermitianError, NotPositiveDefiniteError
from .mstep import CONSTRAINT_KINDS, ConstraintSet
from .presets import source_power_for_asnr
from .scene import disturbance_covariance, sample_snapshots, source_covariance
from .snapshot_io import SnapshotFileError, read_snapshots, write_estimate, write_snapshots

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

OUTPUTS = f"""\
outputs (all CSV files have a header row):
  beamform     beamform_si.csv    {", ".join(BEAMFORM_COLUMNS)}
               beampattern.csv    {", ".join(BEAMPATTERN_COLUMNS)}
  detect       detect_pd.csv      {", ".join(DETECT_COLUMNS)}
  convergence  convergence.csv    {", ".join(CONVERGENCE_COLUMNS)}
  estimate     estimate.json      n, constraint, estimate (row-major [re, im]),
                                  likelihood_trace, iterations, termination
  simulate     snapshots.jsonl    header {{"n": N}} then {{"observed": [...], "y": [[re, im], ...]}}

avg_si_db is 10 log10 of the trial mean of SINR / (v^H M^-1 v); pd is the
fraction of trials with the correct source count.  Identical command lines
give byte-identical CSV files.

exit status: 0 success, 2 invalid input, 3 numerical failure.
"""


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def _names(allowed):
    def parse(text: str) -> list[str]:
        vals = [x.strip() for x in text.split(",") if x.strip()]
        bad = [v for v in vals if v not in allowed]
        if bad or not vals:
            raise argparse.ArgumentTypeError(f"choose from {', '.join(allowed)}; got {text!r}")
        return vals

    return parse


def _common(sub_defaults: bool) -> argparse.ArgumentParser:
    # the same flags are accepted before and after the subcommand
    d = argparse.SUPPRESS if sub_defaults else None
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=d, help="base seed (default: scenario seed)")
    g.add_argument("--trials", type=int, default=d, help="Monte Carlo trials (default: scenario)")
    g.add_argument("--out-dir", type=Path, default=d, help="output directory (default: .)")
    g.add_argument("--threads", type=int, default=d, help="worker processes (default: 1)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emcov",
        description="EM covariance estimation with missing array data: experiments and one-shot fits.",
        epilog=OUTPUTS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[_common(False)],
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = _common(True)
    fmt = argparse.RawDescriptionHelpFormatter

    p = sub.add_parser("estimate", parents=[common], formatter_class=fmt, epilog=OUTPUTS,
                       help="fit a structured covariance to a snapshot file")
    p.add_argument("input", type=Path, help="snapshot file (JSON lines)")
    p.add_argument("--constraint", choices=CONSTRAINT_KINDS, default="unconstrained")
    p.add_argument("--sigma2", type=float, help="noise floor for the floor constraints")
    p.add_argument("--rank", type=int, help="signal rank for the fixed-rank constraints")
    p.add_argument("--eps-likelihood", type=float, default=1e-7)
    p.add_argument("--eps-param", type=float, default=1e-7)
    p.add_argument("--max-iters", type=int, default=10000)
    p.add_argument("--output", type=Path, help="estimate file (default: OUT_DIR/estimate.json)")

    p = sub.add_parser("simulate", parents=[common], formatter_class=fmt, epilog=OUTPUTS,
                       help="draw one snapshot file from a scenario")
    p.add_argument("scenario", type=Path)
    p.add_argument("--asnr", type=float, help="array SNR in dB for the scenario's sources")
    p.add_argument("--p-m", type=float, help="override with Bernoulli missingness at this rate")
    p.add_argument("--output", type=Path, help="snapshot file (default: OUT_DIR/snapshots.jsonl)")

    p = sub.add_parser("beamform", parents=[common], formatter_class=fmt, epilog=OUTPUTS,
                       help="normalized S/I versus K, and averaged beampatterns")
    p.add_argument("scenario", type=Path)
    p.add_argument("--k-grid", type=_ints, help="comma-separated snapshot counts")
    p.add_argument("--methods", type=_names(BEAMFORM_METHODS), help=", ".join(BEAMFORM_METHODS))
    p.add_argument("--p-m", type=float, help="override with Bernoulli missingness at this rate")
    p.add_argument("--beampattern-k", type=int)
    p.add_argument("--beampattern-trials", type=int)
    p.add_argument("--no-beampattern", action="store_true")

    p = sub.add_parser("detect", parents=[common], formatter_class=fmt, epilog=OUTPUTS,
                       help="probability of correct source-number detection versus ASNR")
    p.add_argument("scenario", type=Path)
    p.add_argument("--asnr", type=_floats, help="comma-separated ASNR grid in dB")
    p.add_argument("--rules", type=_names(PENALTY_RULES), help=", ".join(PENALTY_RULES))
    p.add_argument("--methods", type=_names(DETECTION_METHODS), help=", ".join(DETECTION_METHODS))
    p.add_argument("--p-m", type=float, help="override with Bernoulli missingness at this rate")

    p = sub.add_parser("convergence", parents=[common], formatter_class=fmt, epilog=OUTPUTS,
                       help="rank-one convergence-rate case study")
    p.add_argument("--k-grid", type=_ints, default=[40, 60, 80, 100])
    return parser


def _globals(args, scenario=None) -> dict:
    seed = args.seed if args.seed is not None else (scenario.seed if scenario else 0)
    trials = args.trials if args.trials is not None else (scenario.trials if scenario else 100)
    threads = args.threads if args.threads is not None else 1
    if seed < 0:
        raise UsageError(f"--seed: must be >= 0, got {seed}")
    if trials < 1:
        raise UsageError(f"--trials: must be >= 1, got {trials}")
    if threads < 1:
        raise UsageError(f"--threads: must be >= 1, got {threads}")
    return dict(seed=seed, trials=trials, threads=threads, out_dir=args.out_dir or Path("."))


def _scenario(args):
    sc = load_scenario(args.scenario)
    if getattr(args, "p_m", None) is not None:
        if not 0 <= args.p_m < 1:
            raise UsageError(f"--p-m: must satisfy 0 <= p_m < 1, got {args.p_m}")
        sc = with_missingness(sc, args.p_m)
    g = _globals(args, sc)
    return sc.with_overrides(seed=g["seed"], trials=g["trials"]), g


def cmd_estimate(args) -> int:
    g = _globals(args)
    data = read_snapshots(args.input)
    constraint = ConstraintSet(args.constraint, args.sigma2, args.rank)
    constraint.validate_for(data.n)
    cfg = EmConfig(args.eps_likelihood, args.eps_param, args.max_iters)
    res = run_em(data, constraint, cfg)
    out = args.output or g["out_dir"] / "estimate.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_estimate(out, res.estimate, res.likelihood_trace, res.iterations, res.termination,
                   constraint)
    print(f"{out}: {res.iterations} iterations, {res.termination}, "
          f"log-likelihood {res.log_likelihood:.6f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc, g = _scenario(args)
    m = disturbance_covariance(sc.geometry, sc.jammers, sc.noise_power)
    if sc.source_cosines:
        power = None if args.asnr is None else source_power_for_asnr(args.asnr, sc.n, sc.noise_power)
        m = m + source_covariance(sc.geometry, sc.sources(power), 1.0) - np.eye(sc.n)
    draw = sample_snapshots(m, sc.k, sc.missingness, [sc.seed])
    out = args.output or g["out_dir"] / "snapshots.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_snapshots(out, draw.data)
    print(f"{out}: {sc.k} snapshots, N={sc.n}")
    return EXIT_OK


def cmd_beamform(args) -> int:
    sc, g = _scenario(args)
    if not sc.jammers:
        raise UsageError("jammers: the beamforming experiment needs at least one jammer")
    settings = sc.beamform
    if args.methods:
        settings = type(settings)(**{**settings.__dict__, "methods": tuple(args.methods)})
    sc = sc.with_overrides(beamform=settings)
    table = beamform_sweep(sc, args.k_grid, g["trials"], g["threads"])
    paths = [table.write(g["out_dir"] / "beamform_si.csv")]
    if not args.no_beampattern:
        bp = beampattern_average(sc, args.beampattern_k, args.beampattern_trials,
                                 threads=g["threads"])
        paths.append(bp.write(g["out_dir"] / "beampattern.csv"))
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_detect(args) -> int:
    sc, g = _scenario(args)
    table = detection_sweep(sc, args.rules, args.asnr, g["trials"], args.methods, g["threads"])
    print(table.write(g["out_dir"] / "detect_pd.csv"))
    return EXIT_OK


def cmd_convergence(args) -> int:
    g = _globals(args)
    if min(args.k_grid) < 10:
        raise UsageError(f"--k-grid: every K must be >= 10, got {args.k_grid}")
    table = convergence_sweep(args.k_grid, g["trials"], g["seed"], g["threads"])
    print(table.write(g["out_dir"] / "convergence.csv"))
    return EXIT_OK


COMMANDS = {
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "beamform": cmd_beamform,
    "detect": cmd_detect,
    "convergence": cmd_convergence,
}

VALIDATION_ERRORS = (UsageError, ConfigError, SnapshotFileError, NotHermitianError,
                     FileNotFoundError, ValueError)
RUNTIME_ERRORS = (NotPositiveDefiniteError, IllConditionedSnapshotError, LikelihoodDecreaseError,
                  np.linalg.LinAlgError, FloatingPointError, RuntimeError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except RUNTIME_ERRORS as exc:
        print(f"emcov: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except VALIDATION_ERRORS as exc:
        print(f"emcov: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
