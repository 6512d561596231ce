"""Command-line interface for vogellab.

This module handles argument parsing, command routing, and user interaction.
"""

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO

from .version import __version__

from .analysis import (
    STATUS_INCONCLUSIVE,
    build_report,
    default_nu_grid,
    empirical_char_fn,
    estimate_eta,
    min_samples,
    sample_variance,
    summarize,
    targeted_point,
    vogel_test,
    write_report,
)
from .config import (
    NOTSET,
    RunSettings,
    Verbosity,
    VogelConfig,
    log,
    render_output_path,
    resolve_project_dir,
    resolve_threads,
    validate_settings,
)
from .homodyne import (
    DatasetFormatError,
    DetectorConfig,
    QuadratureDataset,
    Units,
    electronic_noise_from_electrons,
    load_datasets,
    read_dataset,
    resolve_units,
    sample_quadratures,
    simulate_homodyne,
    write_dataset,
)
from .states import (
    FockDiagonalState,
    char_fn,
    make_diosi_state,
    make_photon_vacuum_mixture,
    marginal_pdf,
    nu_opt,
    vacuum_char_fn,
    vogel_gap,
)

# Efficiencies of the measured reference runs
DEFAULT_ETA_LADDER = "0.19,0.28,0.45,0.58,0.61"


class UsageError(Exception):
    """Bad command-line input; reported with exit code 2."""


def get_verbosity(args) -> Verbosity:
    """Convert args to Verbosity level."""
    if args.quiet:
        return Verbosity.QUIET
    elif args.verbose >= 2:
        return Verbosity.VERY_VERBOSE
    elif args.verbose >= 1:
        return Verbosity.VERBOSE
    else:
        return Verbosity.NORMAL


@dataclass(kw_only=True)
class RunManifest:
    """Everything needed to re-run a command."""

    command: str
    parameters: Dict[str, Any]
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    seed: Optional[int] = None
    tool_version: str = __version__
    duration_s: float = 0.0
    argv: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def write(self, path: Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


def parse_state_spec(spec: str) -> FockDiagonalState:
    """Parse mix:<eta> | diosi:<nmax> | fock:<w0,w1,...>."""
    kind, sep, value = spec.partition(":")
    if not sep or not value:
        raise UsageError(
            f"Invalid state spec '{spec}'. Expected mix:ETA, diosi:NMAX or fock:W0,W1,..."
        )
    try:
        if kind == "mix":
            return make_photon_vacuum_mixture(float(value))
        if kind == "diosi":
            return make_diosi_state(int(value))
        if kind == "fock":
            return FockDiagonalState.from_weights([float(w) for w in value.split(",")])
    except ValueError as e:
        raise UsageError(f"Invalid state spec '{spec}': {e}") from None
    raise UsageError(f"Unknown state kind '{kind}' in '{spec}'. Use mix, diosi or fock.")


def _load_settings(args, overrides: Dict[str, Any], detector: Optional[str] = None) -> RunSettings:
    cwd = Path.cwd()
    explicit_configs = [Path(c) for c in args.config] if args.config else None
    config = VogelConfig.load(
        resolve_project_dir(cwd), explicit_config_files=explicit_configs, verbosity=args.verbosity
    )
    cli_settings = RunSettings.from_dict(overrides)
    try:
        validate_settings(cli_settings, "command line")
    except ValueError as e:
        raise UsageError(str(e)) from None
    settings = config.get_settings(detector=detector, overrides=cli_settings)
    if args.verbosity >= Verbosity.VERY_VERBOSE:
        log(args.verbosity, Verbosity.VERY_VERBOSE, "Settings:")
        for key, value in sorted(settings.to_dict().items()):
            log(args.verbosity, Verbosity.VERY_VERBOSE, f"  {key} = {value!r}")
    return settings


def _threads(args, settings: RunSettings) -> int:
    return resolve_threads(settings, getattr(args, "threads", None), os.environ)


def _open_output(path: Optional[str]) -> TextIO:
    if path is None or path == "-":
        return sys.stdout
    return open(path, "w", encoding="utf-8", newline="")


def _write_csv(path: Optional[str], header: List[str], rows: List[List[Any]]) -> None:
    out = _open_output(path)
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    finally:
        if out is not sys.stdout:
            out.close()


def _finish_manifest(args, manifest: RunManifest, started: float) -> None:
    manifest.duration_s = time.perf_counter() - started
    if getattr(args, "manifest", None):
        manifest.write(Path(args.manifest))
        log(args.verbosity, Verbosity.VERBOSE, f"Wrote manifest {args.manifest}")


def cmd_simulate(args):
    """Simulate a quadrature dataset."""
    started = time.perf_counter()
    state = parse_state_spec(args.state)

    settings = _load_settings(
        args,
        {
            "n": args.n,
            "seed": args.seed,
            "efficiency": args.efficiency,
            "electronic_noise_sigma": args.electronic_noise_sigma,
            "lo_mean_count": args.lo_mean_count,
        },
        detector=args.detector,
    )
    threads = _threads(args, settings)

    noise_sigma = settings.electronic_noise_sigma
    if args.electronic_noise_electrons is not None:
        noise_sigma = electronic_noise_from_electrons(
            args.electronic_noise_electrons, settings.lo_mean_count
        )

    detector = DetectorConfig(
        efficiency=settings.efficiency,
        electronic_noise_sigma=noise_sigma,
        lo_mean_count=settings.lo_mean_count,
        seed=settings.seed,
    )

    out = args.out or render_output_path(
        settings.out_template,
        {
            "state": args.state,
            "seed": str(settings.seed),
            "n": str(settings.n),
            "efficiency": repr(settings.efficiency),
        },
    )

    log(args.verbosity, Verbosity.NORMAL, f"simulate {state.describe()} n={settings.n}")
    log(
        args.verbosity,
        Verbosity.VERBOSE,
        f"Detector: efficiency={detector.efficiency} sigma_el={detector.electronic_noise_sigma} "
        f"N0={detector.lo_mean_count} seed={detector.seed} threads={threads}",
    )

    units = Units.RAW if args.raw else Units.NORMALIZED
    dataset = simulate_homodyne(state, detector, settings.n, units=units, threads=threads)
    write_dataset(out, dataset)

    print(f"wrote {out}")
    print(f"n = {dataset.count}")
    if units is Units.NORMALIZED and dataset.count >= 100:
        print(f"variance = {sample_variance(dataset):.6f}")
        print(f"estimated_eta = {estimate_eta(dataset):.4f}")

    manifest = RunManifest(
        command="simulate",
        parameters={
            "state": state.describe(),
            "n": settings.n,
            "efficiency": detector.efficiency,
            "electronic_noise_sigma": detector.electronic_noise_sigma,
            "lo_mean_count": detector.lo_mean_count,
            "units": units.value,
            "detector_hash": detector.config_hash(),
        },
        outputs=[str(out)],
        seed=detector.seed,
        argv=args.argv,
    )
    _finish_manifest(args, manifest, started)


def _write_histogram(path: str, data: QuadratureDataset, bins: int, hist_range: float, eta: float):
    summary = summarize(data, bins, hist_range)
    theory = marginal_pdf(make_photon_vacuum_mixture(eta), summary.centers)
    rows = [
        [float(c), int(n), float(d), float(t)]
        for c, n, d, t in zip(summary.centers, summary.counts, summary.densities, theory)
    ]
    _write_csv(path, ["bin_center", "count", "density", "theory_density"], rows)


def cmd_analyze(args):
    """Analyze one or more datasets with the Vogel test."""
    started = time.perf_counter()
    settings = _load_settings(
        args,
        {
            "nu_max": args.nu_max,
            "nu_step": args.nu_step,
            "k": args.k,
            "bins": args.bins,
            "hist_range": args.hist_range,
        },
    )
    threads = _threads(args, settings)

    datasets = load_datasets(args.inputs)
    vacuum_ref = read_dataset(args.vacuum_ref) if args.vacuum_ref else None
    if vacuum_ref is None and any(ds.units is Units.RAW for ds in datasets):
        raise UsageError("raw photoelectron input requires --vacuum-ref for calibration")

    normalized = [resolve_units(ds, vacuum_ref) for ds in datasets]
    pooled = QuadratureDataset.concatenate(normalized)
    log(
        args.verbosity,
        Verbosity.NORMAL,
        f"analyze {len(datasets)} file(s), n={pooled.count}, threads={threads}",
    )

    grid = default_nu_grid(settings.nu_max, settings.nu_step)
    curve = empirical_char_fn(pooled, grid, threads=threads)
    verdict = vogel_test(curve, settings.k)

    manifest = RunManifest(
        command="analyze",
        parameters={
            "nu_max": settings.nu_max,
            "nu_step": settings.nu_step,
            "k": settings.k,
            "vacuum_ref": args.vacuum_ref,
        },
        inputs=[str(p) for p in args.inputs],
        outputs=[str(args.report)] + ([str(args.histogram)] if args.histogram else []),
        argv=args.argv,
    )
    report = build_report(
        data=pooled,
        inputs=[dict(ds.meta) for ds in normalized],
        curve=curve,
        verdict=verdict,
        manifest=manifest.to_dict(),
    )
    manifest.duration_s = time.perf_counter() - started
    report["manifest"] = manifest.to_dict()
    write_report(args.report, report)

    if args.histogram:
        _write_histogram(
            args.histogram, pooled, settings.bins, settings.hist_range, report["estimated_eta"]
        )

    block = report["verdict"]
    print(
        f"verdict: {block['status']} (best_nu={block['best_nu']:.3f}, "
        f"excess={block['excess']:.4g}, significance={block['significance']:.2f}, "
        f"k={block['k']:g})"
    )
    print(f"estimated_eta = {report['estimated_eta']:.4f}")
    if report["targeted"] is not None:
        target = report["targeted"]
        print(
            f"at nu_opt={target['nu_opt']:.3f}: excess={target['excess']:.4g}, "
            f"significance={target['significance']:.2f}"
        )
    if block["status"] == STATUS_INCONCLUSIVE and report["planning"] is not None:
        plan = report["planning"]
        print(f"min_samples(eta={plan['eta']:.4f}, k={plan['k']:g}) = {plan['n_min']}")


def _eta_values(args) -> List[float]:
    if args.eta is not None:
        if args.eta_min is not None or args.eta_max is not None:
            raise UsageError("--eta cannot be combined with --eta-min/--eta-max")
        etas = [args.eta]
    else:
        if args.eta_min is None or args.eta_max is None:
            raise UsageError("give --eta or both --eta-min and --eta-max")
        if not args.step > 0:
            raise UsageError(f"--step must be positive, got {args.step}")
        if not 0 < args.eta_min <= args.eta_max <= 1:
            raise UsageError("need 0 < eta-min <= eta-max <= 1")
        count = int((args.eta_max - args.eta_min) / args.step + 1e-9)
        etas = [round(args.eta_min + i * args.step, 12) for i in range(count + 1)]
    for eta in etas:
        if not 0 < eta <= 1:
            raise UsageError(f"eta must lie in (0, 1], got {eta}")
    return etas


def cmd_plan(args):
    """Minimum sample counts for the photon/vacuum mixture."""
    started = time.perf_counter()
    settings = _load_settings(args, {"plan_k": args.k})
    etas = _eta_values(args)

    rows = []
    for eta in etas:
        plan = min_samples(eta, settings.plan_k)
        rows.append([eta, nu_opt(eta), vogel_gap(eta), plan.n_min])
    _write_csv(args.out, ["eta", "nu_opt", "gap", "n_min"], rows)

    manifest = RunManifest(
        command="plan",
        parameters={"etas": etas, "k": settings.plan_k},
        outputs=[args.out or "-"],
        argv=args.argv,
    )
    _finish_manifest(args, manifest, started)


def cmd_curves(args):
    """Closed-form characteristic function of a state against the vacuum."""
    started = time.perf_counter()
    state = parse_state_spec(args.state)
    settings = _load_settings(args, {"nu_max": args.nu_max, "nu_step": args.nu_step})

    grid = default_nu_grid(settings.nu_max, settings.nu_step)
    values = char_fn(state, grid)
    vacuum = vacuum_char_fn(grid)
    rows = [
        [float(nu), float(f.real), float(abs(f)), float(v)]
        for nu, f, v in zip(grid, values, vacuum)
    ]
    _write_csv(args.out, ["nu", "f_state", "abs_f_state", "f_vacuum"], rows)

    manifest = RunManifest(
        command="curves",
        parameters={
            "state": state.describe(),
            "nu_max": settings.nu_max,
            "nu_step": settings.nu_step,
        },
        outputs=[args.out or "-"],
        argv=args.argv,
    )
    _finish_manifest(args, manifest, started)


def cmd_ladder(args):
    """Simulate an efficiency ladder and tabulate |F| at nu_opt."""
    started = time.perf_counter()
    settings = _load_settings(args, {"n": args.n, "seed": args.seed})
    threads = _threads(args, settings)
    try:
        etas = [float(v) for v in args.etas.split(",")]
    except ValueError:
        raise UsageError(f"Invalid --eta list '{args.etas}'") from None
    for eta in etas:
        if not 0 < eta <= 1:
            raise UsageError(f"eta must lie in (0, 1], got {eta}")

    rows = []
    for i, eta in enumerate(etas):
        data = sample_quadratures(
            make_photon_vacuum_mixture(eta), settings.n, settings.seed + i, threads=threads
        )
        point = targeted_point(data, eta)
        rows.append(
            [
                eta,
                estimate_eta(data),
                point.nu,
                abs(point.estimate),
                point.std_error,
                point.theory_abs,
                point.vacuum,
                point.excess,
                point.significance,
            ]
        )
        log(args.verbosity, Verbosity.VERBOSE, f"eta={eta}: significance={point.significance:.2f}")

    _write_csv(
        args.out,
        [
            "eta",
            "estimated_eta",
            "nu_opt",
            "abs_estimate",
            "sigma",
            "theory_abs",
            "vacuum",
            "excess",
            "significance",
        ],
        rows,
    )
    manifest = RunManifest(
        command="ladder",
        parameters={"etas": etas, "n": settings.n},
        outputs=[args.out or "-"],
        seed=settings.seed,
        argv=args.argv,
    )
    _finish_manifest(args, manifest, started)


def cmd_replay(args):
    """Re-run the argv recorded in a manifest."""
    try:
        with open(args.manifest_file, "r", encoding="utf-8") as f:
            recorded = json.load(f)
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid manifest {args.manifest_file}: {e}") from e
    argv = recorded.get("argv")
    if not isinstance(argv, list) or not argv:
        raise ValueError(f"Manifest {args.manifest_file} has no recorded argv")
    if "replay" in argv:
        raise ValueError("Refusing to replay a replay")
    log(args.verbosity, Verbosity.NORMAL, f"replay {recorded.get('command', '?')}")
    main([str(a) for a in argv])


def cmd_config_show(args):
    """Show merged defaults and detector presets."""
    cwd = Path.cwd()
    explicit_configs = [Path(c) for c in args.config] if args.config else None
    config = VogelConfig.load(
        resolve_project_dir(cwd), explicit_config_files=explicit_configs, verbosity=args.verbosity
    )

    print("defaults:")
    for key, value in sorted(config.defaults.to_dict().items()):
        print(f"  {key} = {value!r}")
    print()

    print("detectors:")
    if config.detectors:
        for name in sorted(config.detectors):
            print(f"  {name}:")
            source = config.detectors[name]._config_file_path
            if source is not NOTSET:
                print(f"    # from {source}")
            for key, value in sorted(config.detectors[name].to_dict().items()):
                print(f"    {key} = {value!r}")
            print()
    else:
        print("# No detectors defined")


def _add_threads(parser):
    parser.add_argument(
        "--threads",
        type=int,
        help="Worker threads (default: $VOGELLAB_THREADS or config). Never changes results",
    )


def _add_manifest(parser):
    parser.add_argument("--manifest", help="Write a run manifest (JSON) to this path")


def _add_grid(parser):
    parser.add_argument("--nu-max", dest="nu_max", type=float, help="Largest nu (default: 12)")
    parser.add_argument("--nu-step", dest="nu_step", type=float, help="Grid step (default: 0.05)")


def create_parser():
    """Create the main argument parser."""
    parser = argparse.ArgumentParser(
        prog="vogellab",
        description="Simulate homodyne quadrature data and test it with the Vogel criterion",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        allow_abbrev=False,  # Require full option names
    )

    parser.add_argument("--version", action="version", version=f"vogellab {__version__}")

    verbosity_group = parser.add_mutually_exclusive_group()
    verbosity_group.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Increase verbosity (-v verbose, -vv very verbose)",
    )
    verbosity_group.add_argument(
        "-q",
        "--quiet",
        action="store_true",
        help="Suppress non-essential output",
    )
    parser.add_argument(
        "--config",
        action="append",
        help="Path to configuration file (can be used multiple times, order matters)",
    )
    subparsers = parser.add_subparsers(dest="subcommand", help="Available commands")

    # simulate
    sim_parser = subparsers.add_parser(
        "simulate",
        help="Simulate a quadrature dataset",
        description="""Simulate balanced homodyne quadrature data

Examples:
    vogellab simulate --state mix:0.61 --n 100000 --seed 7 --out d61.qdat
    vogellab simulate --state mix:1.0 --efficiency 0.61 --out lossy.qdat
    vogellab simulate --state mix:0 --raw --lo-mean-count 1e6 --out vac.raw""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sim_parser.add_argument(
        "--state", required=True, help="mix:ETA | diosi:NMAX | fock:W0,W1,..."
    )
    sim_parser.add_argument("--n", type=int, help="Number of samples (default: 100000)")
    sim_parser.add_argument("--seed", type=int, help="RNG seed (default: 0)")
    sim_parser.add_argument("--out", help="Output dataset path (default: from out_template)")
    sim_parser.add_argument("--detector", help="Detector preset from config file")
    detector_group = sim_parser.add_argument_group("Detector Options")
    detector_group.add_argument("--efficiency", type=float, help="Overall detection efficiency")
    noise_group = detector_group.add_mutually_exclusive_group()
    noise_group.add_argument(
        "--electronic-noise-sigma",
        dest="electronic_noise_sigma",
        type=float,
        help="Electronic noise std dev in quadrature units",
    )
    noise_group.add_argument(
        "--electronic-noise-electrons",
        dest="electronic_noise_electrons",
        type=float,
        help="Electronic noise in electrons per pulse (converted with N0)",
    )
    detector_group.add_argument(
        "--lo-mean-count",
        dest="lo_mean_count",
        type=float,
        help="Mean photoelectrons per LO pulse N0 (default: 1e6)",
    )
    detector_group.add_argument(
        "--raw", action="store_true", help="Write raw photoelectron units instead of normalized"
    )
    _add_threads(sim_parser)
    _add_manifest(sim_parser)

    # analyze
    analyze_parser = subparsers.add_parser(
        "analyze",
        help="Run the Vogel test on datasets",
        description="""Estimate the characteristic function and run the Vogel test.

Several --in files are pooled before analysis (phase mixture).""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    analyze_parser.add_argument(
        "--in", dest="inputs", action="append", required=True, help="Dataset file (repeatable)"
    )
    analyze_parser.add_argument(
        "--vacuum-ref", dest="vacuum_ref", help="Raw vacuum record for calibrating raw inputs"
    )
    analyze_parser.add_argument("--report", required=True, help="Report output path (JSON)")
    analyze_parser.add_argument("--k", type=float, help="Significance threshold (default: 3)")
    _add_grid(analyze_parser)
    analyze_parser.add_argument("--histogram", help="Also write the histogram CSV here")
    analyze_parser.add_argument("--bins", type=int, help="Histogram bins (default: 81)")
    analyze_parser.add_argument(
        "--hist-range", dest="hist_range", type=float, help="Histogram half-range (default: 2)"
    )
    _add_threads(analyze_parser)

    # plan
    plan_parser = subparsers.add_parser(
        "plan", help="Minimum sample counts", description="Minimum samples for the mixture"
    )
    plan_parser.add_argument("--eta", type=float, help="Single efficiency")
    plan_parser.add_argument("--eta-min", dest="eta_min", type=float, help="Range start")
    plan_parser.add_argument("--eta-max", dest="eta_max", type=float, help="Range end")
    plan_parser.add_argument("--step", type=float, default=0.1, help="Range step (default: 0.1)")
    plan_parser.add_argument("--k", type=float, help="Significance multiple (default: 1)")
    plan_parser.add_argument("--out", help="CSV output path (default: stdout)")
    _add_manifest(plan_parser)

    # curves
    curves_parser = subparsers.add_parser(
        "curves", help="Closed-form characteristic functions", description="State vs vacuum curves"
    )
    curves_parser.add_argument("--state", required=True, help="mix:ETA | diosi:NMAX | fock:...")
    _add_grid(curves_parser)
    curves_parser.add_argument("--out", help="CSV output path (default: stdout)")
    _add_manifest(curves_parser)

    # ladder
    ladder_parser = subparsers.add_parser(
        "ladder",
        help="Simulated efficiency ladder at nu_opt",
        description="Simulate each efficiency and tabulate |F| at nu_opt against theory",
    )
    ladder_parser.add_argument(
        "--eta", dest="etas", default=DEFAULT_ETA_LADDER, help="Comma-separated efficiencies"
    )
    ladder_parser.add_argument("--n", type=int, help="Samples per efficiency")
    ladder_parser.add_argument("--seed", type=int, help="Base seed (incremented per efficiency)")
    ladder_parser.add_argument("--out", help="CSV output path (default: stdout)")
    _add_threads(ladder_parser)
    _add_manifest(ladder_parser)

    # replay
    replay_parser = subparsers.add_parser("replay", help="Re-run a recorded manifest")
    replay_parser.add_argument("manifest_file", help="Manifest JSON written by --manifest")

    # config subcommand group
    config_parser = subparsers.add_parser("config", help="Configuration management commands")
    config_subparsers = config_parser.add_subparsers(
        dest="config_command", help="Config subcommands"
    )
    config_subparsers.add_parser("show", help="Show merged configuration")

    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "plan": cmd_plan,
    "curves": cmd_curves,
    "ladder": cmd_ladder,
    "replay": cmd_replay,
}


def main(argv=None):
    """Main entry point."""
    if argv is None:
        argv = sys.argv[1:]
    argv = list(argv)

    parser = create_parser()
    args = parser.parse_args(argv)
    args.verbosity = get_verbosity(args)
    args.argv = argv

    if args.subcommand == "config":
        if args.config_command not in ("show", None):
            parser.parse_args(["config", "--help"])
        handler = cmd_config_show
    elif args.subcommand in COMMANDS:
        handler = COMMANDS[args.subcommand]
    else:
        parser.print_help()
        sys.exit(2)

    try:
        handler(args)
    except UsageError as e:
        parser.error(str(e))
    except DatasetFormatError as e:
        print(f"Parse error: {e}", file=sys.stderr)
        sys.exit(1)
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)
    except (OSError, RuntimeError, OverflowError) as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)
