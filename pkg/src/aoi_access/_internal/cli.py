# Why does this file exist, and why not put this in `__main__`?
#
# You might be tempted to import things from `__main__` later,
# but that will cause problems: the code will get executed twice:
#
# - When you run `python -m aoi_access` python will execute
#   `__main__.py` as a script. That means there won't be any
#   `aoi_access.__main__` in `sys.modules`.
# - When you import `__main__` it will get executed again (as a module) because
#   there's no `aoi_access.__main__` in `sys.modules`.


from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd

from aoi_access._internal import debug
from aoi_access._internal.exceptions import AoiAccessError, CertificationError, ConfigurationError
from aoi_access._internal.log import configure_logging, get_logger, resolve_log_level

if TYPE_CHECKING:
    from collections.abc import Callable

    from aoi_access._internal.models import ExperimentConfig

_logger = get_logger(__name__)

_EXIT_OK = 0
_EXIT_CONFIG = 1
_EXIT_RUNTIME = 2
_EXIT_CERTIFICATION = 3

_GRADCHECK_TOLERANCE = 1e-5


class _DebugInfo(argparse.Action):
    def __init__(self, nargs: int | str | None = 0, **kwargs: Any) -> None:
        super().__init__(nargs=nargs, **kwargs)

    def __call__(self, *args: Any, **kwargs: Any) -> None:  # noqa: ARG002
        debug._print_debug_info()
        sys.exit(0)


class _PrintPreset(argparse.Action):
    def __call__(self, parser: argparse.ArgumentParser, namespace: argparse.Namespace, values: Any, option_string: str | None = None) -> None:  # noqa: ARG002
        from aoi_access._internal.presets import get_preset_text  # noqa: PLC0415

        try:
            sys.stdout.write(get_preset_text(str(values)))
        except ConfigurationError as e:
            parser.exit(_EXIT_CONFIG, f"error: {e}\n")
        sys.exit(0)


def _add_common(parser: argparse.ArgumentParser, *, out_help: str) -> None:
    parser.add_argument(
        "-c",
        "--config",
        default=None,
        help="Preset name or path to a YAML configuration (default: full-scale).",
    )
    parser.add_argument("-o", "--out", default=None, help=out_help)
    parser.add_argument("--seed", type=int, default=None, help="Override the configured seed.")
    parser.add_argument("--workers", type=int, default=None, help="Parallel worker processes.")


def get_parser() -> argparse.ArgumentParser:
    """Return the CLI argument parser.

    Returns:
        An argparse parser.
    """
    parser = argparse.ArgumentParser(
        prog="aoi-access",
        description="Age-of-information aware grant-free access: parameter optimization, unfolded detectors, simulation",
    )
    parser.add_argument("-V", "--version", action="version", version=f"%(prog)s {debug._get_version()}")
    parser.add_argument("--debug-info", action=_DebugInfo, help="Print debug information.")
    parser.add_argument("--print-preset", metavar="NAME", action=_PrintPreset, help="Print a packaged preset and exit.")
    parser.add_argument(
        "--log-level",
        default=None,
        help="DEBUG, INFO, WARNING, ERROR or CRITICAL (default: $AOI_ACCESS_LOG_LEVEL or WARNING).",
    )
    subcommands = parser.add_subparsers(dest="command", metavar="COMMAND")

    optimize = subcommands.add_parser("optimize", help="Tabulate the optimal (delta, p) per pilot length.")
    _add_common(optimize, out_help="CSV file for the table (default: print only).")
    optimize.set_defaults(handler=_cmd_optimize)

    train = subcommands.add_parser("train", help="Train an unfolded detector and write a checkpoint.")
    _add_common(train, out_help="Checkpoint path (default: checkpoints/<variant>-M<pilot_len>.npz).")
    train.add_argument("--variant", default=None, help="Detector variant, e.g. A-PIAAE or A-LISTA (default: from config).")
    train.add_argument("--pilot-len", type=int, default=None, help="Override the pilot length M.")
    train.add_argument("--resume", default=None, metavar="CHECKPOINT", help="Continue training from a checkpoint.")
    train.add_argument("--dry-run", action="store_true", help="Validate the configuration and print parameter counts.")
    train.set_defaults(handler=_cmd_train)

    simulate = subcommands.add_parser("simulate", help="Run the configured scenario sweep.")
    _add_common(simulate, out_help="Output directory (default: results/<scenario>).")
    simulate.add_argument("--series", action="store_true", help="Also write the per-slot series of every run.")
    simulate.set_defaults(handler=_cmd_simulate)

    certify = subcommands.add_parser("certify", help="Certify the convergence bound on constructed instances.")
    _add_common(certify, out_help="Output directory for the per-layer CSV (default: print only).")
    certify.set_defaults(handler=_cmd_certify)

    gradcheck = subcommands.add_parser("gradcheck", help="Compare analytic and finite-difference gradients.")
    _add_common(gradcheck, out_help="Unused.")
    gradcheck.add_argument("--instances", type=int, default=3, help="Random instances to check (default: 3).")
    gradcheck.set_defaults(handler=_cmd_gradcheck)
    return parser


def main(args: list[str] | None = None) -> int:
    """Run the main program.

    This function is executed when you type `aoi-access` or `python -m aoi_access`.

    Parameters:
        args: Arguments passed from the command line.

    Returns:
        An exit code.
    """
    parser = get_parser()
    if args == []:
        parser.print_help()
        return _EXIT_OK
    opts = parser.parse_args(args=args)
    if opts.command is None:
        parser.print_help()
        return _EXIT_OK

    import yaml  # noqa: PLC0415
    from pydantic import ValidationError  # noqa: PLC0415

    handler: Callable[[argparse.Namespace], int] = opts.handler
    try:
        configure_logging(resolve_log_level(opts.log_level))
        return handler(opts)
    except (ConfigurationError, ValidationError, yaml.YAMLError, FileNotFoundError) as e:
        _error(e)
        return _EXIT_CONFIG
    except CertificationError as e:
        _error(e)
        return _EXIT_CERTIFICATION
    except AoiAccessError as e:
        _error(e)
        return _EXIT_RUNTIME


def _error(problem: object) -> None:
    print(f"error: {problem}", file=sys.stderr)


def _load(opts: argparse.Namespace) -> ExperimentConfig:
    from aoi_access._internal.presets import load_config  # noqa: PLC0415

    return load_config(opts.config)


def _with_system(config: ExperimentConfig, **update: Any) -> ExperimentConfig:
    from aoi_access._internal.models import SystemConfig  # noqa: PLC0415

    system = SystemConfig.model_validate({**config.system.model_dump(), **update})
    return config.model_copy(update={"system": system})


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_optimize(opts: argparse.Namespace) -> int:
    from aoi_access._internal.experiments import optimize_table, write_csv  # noqa: PLC0415

    if opts.seed is not None:
        _logger.info("--seed has no effect on the analytic optimization")
    table = optimize_table(_load(opts))
    if opts.out:
        write_csv(table, opts.out)
    print(table.to_string(index=False))
    return _EXIT_OK


def _cmd_train(opts: argparse.Namespace) -> int:
    from aoi_access._internal.checkpoint import load_checkpoint, save_checkpoint  # noqa: PLC0415
    from aoi_access._internal.experiments import write_csv  # noqa: PLC0415
    from aoi_access._internal.training import TrainState, describe, evaluate, train  # noqa: PLC0415

    config = _load(opts)
    if opts.pilot_len is not None:
        config = _with_system(config, pilot_len=opts.pilot_len)
    tcfg = config.train
    if opts.variant is not None:
        try:
            tcfg = tcfg.with_variant(opts.variant)
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
    system = config.system
    seed = opts.seed if opts.seed is not None else system.seed
    rng = np.random.default_rng(seed)

    resume = None
    if opts.resume:
        checkpoint = load_checkpoint(opts.resume)
        resume = checkpoint.state
        rng = checkpoint.restore_rng() or rng

    if opts.dry_run:
        state = resume if resume is not None else TrainState.initial(system, tcfg, rng)
        counts = describe(state)
        print(f"variant {tcfg.variant}: S={system.n_devices} M={system.pilot_len} L={tcfg.layers}")
        for name, count in counts.items():
            print(f"  {name:<7} {count}")
        return _EXIT_OK

    result = train(system, tcfg, rng, resume=resume)
    out = Path(opts.out or f"checkpoints/{tcfg.variant}-M{system.pilot_len}.npz")
    save_checkpoint(out, result.state, system=system, train=tcfg, rng=rng)
    history = result.state
    curve = pd.DataFrame(
        {
            "step": np.arange(1, len(history.loss_history) + 1),
            "loss": history.loss_history,
            "lr": history.lr_history,
        }
    )
    write_csv(curve, out.with_suffix(".losses.csv"))
    evaluation = evaluate(result.state, system, tcfg, np.random.default_rng(np.random.SeedSequence([seed, 1])))
    final = history.loss_history[-1] if history.loss_history else float("nan")
    print(f"{tcfg.variant}: {history.step} steps, final loss {final:.6g}")
    print(f"held-out mse {evaluation.mse:.6g}, alarm detection rate {evaluation.detection_rate:.4f}")
    print(f"checkpoint: {out}")
    return _EXIT_OK


def _cmd_simulate(opts: argparse.Namespace) -> int:
    from aoi_access._internal.experiments import run_scenario, write_csv  # noqa: PLC0415

    config = _load(opts)
    if config.scenario is None:
        msg = "the configuration has no `scenario` section"
        raise ConfigurationError(msg)
    if opts.seed is not None:
        config = config.model_copy(update={"simulation": config.simulation.model_copy(update={"seeds": [opts.seed]})})
    result = run_scenario(config, workers=opts.workers, keep_series=opts.series)
    out = Path(opts.out or Path("results") / config.scenario.name)
    write_csv(result.runs, out / "runs.csv")
    write_csv(result.aggregate, out / "aggregate.csv")
    for label, frame in result.series.items():
        write_csv(frame, out / "series" / f"{label}.csv")
    print(result.aggregate.to_string(index=False))
    print(f"results: {out}")
    return _EXIT_OK


def _cmd_certify(opts: argparse.Namespace) -> int:
    from aoi_access._internal.experiments import write_csv  # noqa: PLC0415
    from aoi_access._internal.theory import certify_bound, construct_instance, make_dataset  # noqa: PLC0415

    cfg = _load(opts).certify
    rng = np.random.default_rng(opts.seed if opts.seed is not None else cfg.seed)
    frames = []
    failed = 0
    worst = None
    for instance in range(cfg.instances):
        pilot, gated = construct_instance(
            cfg.pilot_len,
            cfg.n_devices,
            cfg.sparsity,
            rng,
            gated_fraction=cfg.gated_fraction,
            max_tries=cfg.max_tries,
        )
        dataset = make_dataset(
            pilot,
            sparsity=cfg.sparsity,
            amplitude=cfg.amplitude,
            sigma=cfg.noise_l1,
            size=cfg.dataset_size,
            gated=gated,
            rng=rng,
        )
        report = certify_bound(pilot, dataset, cfg.layers)
        frame = report.to_frame()
        frame.insert(0, "instance", instance)
        frames.append(frame)
        failed += not report.passed
        if worst is None or report.min_margin < worst.min_margin:
            worst = report
    if worst is not None:
        print(worst.render())
    print(f"certified {cfg.instances - failed}/{cfg.instances} instances")
    if opts.out:
        write_csv(pd.concat(frames, ignore_index=True), Path(opts.out) / "certify.csv")
    return _EXIT_OK if failed == 0 else _EXIT_CERTIFICATION


def _cmd_gradcheck(opts: argparse.Namespace) -> int:
    from aoi_access._internal.training import gradient_check  # noqa: PLC0415

    rng = np.random.default_rng(opts.seed if opts.seed is not None else 0)
    worst = 0.0
    for instance in range(opts.instances):
        errors = gradient_check(rng)
        worst = max(worst, *errors.values())
        print(f"instance {instance}: " + "  ".join(f"{name} {value:.2e}" for name, value in errors.items()))
    if worst >= _GRADCHECK_TOLERANCE:
        _error(f"largest relative error {worst:.2e} exceeds {_GRADCHECK_TOLERANCE:.0e}")
        return _EXIT_RUNTIME
    return _EXIT_OK
