"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

from . import config as cfgmod
from .errors import ConfigError, MetriplexError, NumericalError
from .io import OutputDir, json_bytes
from .systems import get_system, list_systems

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_param(text: str):
    if "=" not in text:
        raise ConfigError(f"--param expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=default, help="master random seed")
    p.add_argument("--threads", type=int, default=default, help="worker threads for particle blocks")
    p.add_argument("--out", default=default, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metriplex", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="run a scenario from a TOML config")
    p.add_argument("--config", required=True, help="TOML run configuration")

    p = sub.add_parser("verify", parents=[common], help="identity checks for a registered system")
    p.add_argument("system")
    p.add_argument("--K", type=int, help="CHM truncation")
    p.add_argument("--c", type=float, help="CHM linear coupling")
    p.add_argument("--param", action="append", default=[], help="system parameter key=value")
    p.add_argument("--states", type=int, default=100)
    p.add_argument("--cells", type=int, help="cells per axis for the bracket suite")
    p.add_argument("--no-brackets", action="store_true")

    p = sub.add_parser("verify-brackets", parents=[common], help="grid bracket axiom suite")
    p.add_argument("system")
    p.add_argument("--param", action="append", default=[])
    p.add_argument("--cells", type=int)
    p.add_argument("--corrupt", action="store_true", help="symmetrize the operator (fault injection)")

    p = sub.add_parser("sde", parents=[common], help="particle ensemble under the perturbed dynamics")
    p.add_argument("--config", help="optional TOML base config")
    p.add_argument("--system", default=None)
    p.add_argument("--param", action="append", default=[])
    p.add_argument("--N", type=int)
    p.add_argument("--D", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--friction", help="fixed:<beta> or adaptive[:<beta0>]")
    p.add_argument("--x0", type=_floats)
    p.add_argument("--spread", type=float)
    p.add_argument("--record-every", type=int)
    p.add_argument("--scheme", choices=["heun", "midpoint"])

    p = sub.add_parser("fpe", parents=[common], help="grid Fokker-Planck relaxation")
    p.add_argument("--config")
    p.add_argument("--system", default=None)
    p.add_argument("--param", action="append", default=[])
    p.add_argument("--min", type=_floats)
    p.add_argument("--max", type=_floats)
    p.add_argument("--cells", type=_ints)
    p.add_argument("--D", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-end", type=float)
    p.add_argument("--beta", help="adaptive or fixed:<value>")
    p.add_argument("--centre", type=_floats)
    p.add_argument("--variance", type=_floats)
    p.add_argument("--record-every", type=int)

    p = sub.add_parser("chm", parents=[common], help="truncated spectral drift-wave model")
    chm_sub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for name, help_text in (
        ("integrate", "deterministic RK4 run"),
        ("thermalize", "stochastic thermalization against the predicted spectrum"),
        ("verify", "spectral identity checks"),
    ):
        q = chm_sub.add_parser(name, parents=[common], help=help_text)
        q.add_argument("--K", type=int)
        q.add_argument("--c", type=float)
        if name == "verify":
            q.add_argument("--states", type=int, default=100)
            continue
        q.add_argument("--config")
        q.add_argument("--dt", type=float)
        q.add_argument("--steps", type=int)
        q.add_argument("--record-every", type=int)
        if name == "integrate":
            q.add_argument("--amplitude", type=float)
        else:
            q.add_argument("--beta", type=float)
            q.add_argument("--mu", type=float)
            q.add_argument("--N", type=int)
            q.add_argument("--D", type=float)
            q.add_argument("--average-from", type=int)

    sub.add_parser("list-systems", parents=[common], help="registered system names")
    sub.add_parser("schema", parents=[common], help="print the run-config JSON schema")
    return parser


# ------------------------------------------------------------------ helpers


def _emit(obj) -> None:
    sys.stdout.write(json_bytes(obj).decode())


def _write_report(args, name: str, report: dict) -> None:
    if args.out:
        out = OutputDir(args.out, {"command": args.command})
        out.write_json(name, report)
        out.finish("ok" if report.get("ok", True) else "verification-failure")


def _base_config(args, scenario: str) -> dict:
    data = cfgmod.load_raw(args.config) if getattr(args, "config", None) else {}
    data["scenario"] = scenario
    return data


def _set(data: dict, dotted: str, value) -> None:
    if value is None:
        return
    *head, last = dotted.split(".")
    cur = data
    for part in head:
        cur = cur.setdefault(part, {})
    cur[last] = value


def _apply_globals(data: dict, args) -> None:
    _set(data, "seed", args.seed)
    _set(data, "threads", args.threads)
    _set(data, "out", args.out)


def _system_overrides(data: dict, args) -> None:
    _set(data, "system.name", args.system)
    for text in args.param:
        k, v = _parse_param(text)
        _set(data, f"system.params.{k}", v)


def _run_config(data: dict) -> int:
    from .scenarios import execute

    cfg = cfgmod.validate(data)
    summary = execute(cfg)
    _emit(summary)
    return EXIT_OK


# ----------------------------------------------------------------- commands


def cmd_run(args) -> int:
    data = cfgmod.load_raw(args.config)
    _apply_globals(data, args)
    return _run_config(data)


def cmd_sde(args) -> int:
    data = _base_config(args, "sde")
    _system_overrides(data, args)
    for key in ("N", "D", "dt", "steps", "friction", "x0", "spread", "record_every", "scheme"):
        _set(data, f"sde.{key}", getattr(args, key))
    _apply_globals(data, args)
    return _run_config(data)


def cmd_fpe(args) -> int:
    data = _base_config(args, "fpe")
    _system_overrides(data, args)
    _set(data, "grid.min", args.min)
    _set(data, "grid.max", args.max)
    _set(data, "grid.cells", args.cells)
    for key in ("D", "dt", "t_end", "beta", "centre", "variance", "record_every"):
        _set(data, f"fpe.{key}", getattr(args, key))
    _apply_globals(data, args)
    return _run_config(data)


def cmd_chm(args) -> int:
    if args.action == "verify":
        params = {"K": args.K or 2, "c": args.c or 0.0}
        return _verify(args, "chm", params, args.states, brackets=False, cells=None)
    scenario = "chm-integrate" if args.action == "integrate" else "chm-thermalize"
    data = _base_config(args, scenario)
    keys = ["K", "c", "dt", "steps", "record_every"]
    keys += ["amplitude"] if args.action == "integrate" else ["beta", "mu", "N", "D", "average_from"]
    for key in keys:
        _set(data, f"chm.{key}", getattr(args, key))
    _apply_globals(data, args)
    return _run_config(data)


def _verify(args, name, params, states, brackets, cells) -> int:
    from .verification import verify_system

    report = verify_system(name, params, states=states, seed=args.seed or 0, brackets=brackets, cells=cells)
    _emit(report)
    _write_report(args, f"verify-{name}.json", report)
    return EXIT_OK if report["ok"] else EXIT_VERIFY


def cmd_verify(args) -> int:
    params = dict(_parse_param(t) for t in args.param)
    if args.K is not None:
        params["K"] = args.K
    if args.c is not None:
        params["c"] = args.c
    return _verify(args, args.system, params, args.states, not args.no_brackets, args.cells)


def cmd_verify_brackets(args) -> int:
    from .verification import bracket_report

    params = dict(_parse_param(t) for t in args.param)
    sys_ = get_system(args.system, **params)
    report = bracket_report(sys_, seed=args.seed or 0, cells=args.cells, corrupt=args.corrupt)
    if "skipped" in report:
        raise ConfigError(report["skipped"])
    _emit(report)
    _write_report(args, f"brackets-{args.system}.json", report)
    return EXIT_OK if report["ok"] else EXIT_VERIFY


def cmd_list_systems(args) -> int:
    for name in list_systems():
        sys.stdout.write(name + "\n")
    return EXIT_OK


def cmd_schema(args) -> int:
    _emit(cfgmod.json_schema())
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "verify": cmd_verify,
    "verify-brackets": cmd_verify_brackets,
    "sde": cmd_sde,
    "fpe": cmd_fpe,
    "chm": cmd_chm,
    "list-systems": cmd_list_systems,
    "schema": cmd_schema,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        msg = f"numerical failure: {exc}"
        if exc.last_good_time is not None:
            msg += f" (last good time {exc.last_good_time:.6g})"
        sys.stderr.write(msg + "\n")
        return EXIT_NUMERIC
    except MetriplexError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
