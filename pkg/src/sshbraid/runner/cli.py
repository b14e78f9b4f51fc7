"""Command-line entry point: ``sshbraid <experiment> [options]``."""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError, SSHBraidError
from .config import EXPERIMENTS, FORMATS, build_config, load_config_file, parse_phase
from .emit import dumps, emit
from .experiments import run, worker_count


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat TOML file with ExperimentConfig keys")
    p.add_argument("--model", dest="chains", choices=("double", "triple"))
    p.add_argument("--L", type=int)
    p.add_argument("--w", type=float)
    p.add_argument("--v0", type=float)
    p.add_argument("--coupling", type=float, help="kappa (double) or eta (triple)")
    p.add_argument("--orientation", choices=("forward", "reversed"))
    p.add_argument("--triple-bonds", dest="triple_bonds", choices=("cyclic", "noncyclic"))
    g = p.add_mutually_exclusive_group()
    g.add_argument("--period", type=float)
    g.add_argument("--target-phase", dest="target_phase", type=parse_phase,
                   help="dynamical phase in radians, or e.g. 1.5pi")
    p.add_argument("--steps", type=int)
    p.add_argument("--grid-size", dest="grid_size", type=int)
    p.add_argument("--snapshots", type=int)
    p.add_argument("--symmetry", choices=("spectral", "printed"))
    p.add_argument("--output", "-o")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--workers", type=int, help="parallel scan points (default $SSHBRAID_WORKERS or 1)")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sshbraid", description="Braiding of edge states in driven SSH chains.")
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        _common(p)
        if name in ("transfer", "transport"):
            p.add_argument("--from", dest="initial", help="initial site, e.g. A:left")
        elif name == "hom":
            p.add_argument("--pair", dest="initial", help="two injected sites, e.g. B:left,B:right")
        elif name == "scan-adiabatic":
            p.add_argument("--T-grid", dest="T_grid", help="start:stop:N[log|lin] or comma list")
            p.add_argument("--from", dest="initial", help="initial edge state, e.g. edge:I:+")
    return parser


def _error(exc: BaseException, code: int, **extra) -> int:
    body = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    defect = getattr(exc, "defect", None)
    if defect is not None:
        body["defect"] = defect
    body.update(extra)
    sys.stderr.write(dumps(body))
    return code


def main(argv=None) -> int:
    try:
        args = vars(make_parser().parse_args(argv))
        experiment = args.pop("experiment")
        config_path = args.pop("config")
        workers = worker_count(args.pop("workers"))
        flags = {k: v for k, v in args.items() if v is not None}
        file_values = load_config_file(config_path) if config_path else None
        config = build_config(experiment, file_values, flags)
        summary, tables = run(config, workers)
        summary["outputs"] = emit(config, summary, tables)
    except SSHBraidError as exc:
        return _error(exc, exc.exit_code)
    except OSError as exc:
        return _error(exc, 1, path=exc.filename)
    except ValueError as exc:
        return _error(exc, ConfigError.exit_code)
    sys.stdout.write(dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
