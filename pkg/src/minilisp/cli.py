"""Command line entry point.

    mls run FILE       elaborate, evaluate, print the program's results
    mls expand FILE    print the elaborated program in canonical form
    mls check FILE     elaborate only, report diagnostics
    mls fmt FILE       reprint the program in canonical form
    mls serve          speak the wire protocol (--stdio or --listen ADDR)

Exit codes: 0 success, 1 program or elaboration error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import reader, visr
from .elaborate import ELABORATION_FUEL, elaborate_program
from .errors import ElaborationError, EvalError, FuelExhausted, ReadError
from .interp import Fuel, Interp, base_env
from .reader import line_col
from .values import print_value

RUN_FUEL = 10_000_000


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mls",
        description="run, expand, and serve programs that mix code with "
                    "interactive syntax")
    parser.add_argument("--path", action="append", default=[], metavar="DIR",
                        help="extension module search path (repeatable, "
                             "default: the file's directory, then .)")
    parser.add_argument("--fuel", type=int, metavar="N",
                        help="evaluation step budget for elaboration and "
                             "runtime (default 1000000 / 10000000)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (("run", "elaborate and evaluate a file"),
                      ("expand", "print the elaborated program"),
                      ("check", "elaborate only and report diagnostics"),
                      ("fmt", "reprint a file in canonical form")):
        p = sub.add_parser(name, help=doc)
        p.add_argument("file", metavar="FILE")
    serve = sub.add_parser("serve", help="speak the wire protocol")
    mode = serve.add_mutually_exclusive_group()
    mode.add_argument("--stdio", action="store_true",
                      help="newline-delimited JSON on stdin/stdout (default)")
    mode.add_argument("--listen", metavar="ADDR",
                      help="listen on HOST:PORT (or just PORT) for protocol "
                           "connections; also serves editor assets under /ui")
    serve.add_argument("--ui", metavar="DIR",
                       help="static asset directory for /ui "
                            "(default: ./frontend/dist when present)")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as err:
        return 0 if err.code in (0, None) else 2
    if args.command == "serve":
        return _serve(args)
    return _file_command(args)


def _module_paths(args, source: Path):
    paths = [str(source.parent)] + (args.path or [])
    if "." not in paths:
        paths.append(".")
    return paths


def _fail(source, span, message, text=""):
    where = str(source)
    if span is not None:
        line, col = line_col(text, span.start)
        where += f":{line}:{col}"
    print(f"{where}: error: {message}", file=sys.stderr)
    return 1


def _report(source, text, pairs, severity="warning"):
    for span, message in pairs:
        where = str(source)
        if span is not None:
            line, col = line_col(text, span.start)
            where += f":{line}:{col}"
        print(f"{where}: {severity}: {message}", file=sys.stderr)


def _file_command(args) -> int:
    source = Path(args.file)
    try:
        text = source.read_text(encoding="utf-8")
    except OSError as err:
        print(f"mls: cannot read {source}: {err.strerror}", file=sys.stderr)
        return 1
    try:
        forms = reader.read_all(text)
    except ReadError as err:
        line, col = line_col(text, err.offset)
        print(f"{source}:{line}:{col}: error: {err.message}",
              file=sys.stderr)
        return 1

    if args.command == "fmt":
        sys.stdout.write(reader.print_program(forms))
        return 0

    registry = visr.Registry(paths=_module_paths(args, source))
    env = base_env()
    registry.attach(env)
    diagnostics = []
    fuel = Fuel(args.fuel or ELABORATION_FUEL)
    try:
        expanded = elaborate_program(forms, registry, env, fuel=fuel,
                                     diagnostics=diagnostics)
    except ElaborationError as err:
        _report(source, text, registry.diagnostics, severity="note")
        _report(source, text, diagnostics)
        return _fail(source, err.span, f"{err.message} [{err.phase}]", text)
    _report(source, text, registry.diagnostics, severity="note")
    _report(source, text, diagnostics)

    if args.command == "expand":
        sys.stdout.write(reader.print_program(expanded))
        return 0
    if args.command == "check":
        print(f"{source}: ok", file=sys.stderr)
        return 0

    interp = Interp(Fuel(args.fuel or RUN_FUEL))
    for form in expanded:
        try:
            result = interp.eval_top(form, env)
        except FuelExhausted:
            return _fail(source, form.span, "program ran out of fuel", text)
        except EvalError as err:
            return _fail(source, err.span, err.message, text)
        if result is not None:
            print(print_value(result))
    return 0


def _parse_addr(addr: str):
    host, _, port = addr.rpartition(":")
    if not host:
        host = "127.0.0.1"
    try:
        return host, int(port)
    except ValueError:
        return None


def _serve(args) -> int:
    from . import server

    paths = (args.path or []) + ["."]
    if args.listen:
        parsed = _parse_addr(args.listen)
        if parsed is None:
            print(f"mls: bad listen address {args.listen!r}, want HOST:PORT",
                  file=sys.stderr)
            return 2
        ui = args.ui
        if ui is None and Path("frontend/dist").is_dir():
            ui = "frontend/dist"
        host, port = parsed
        print(f"listening on {host}:{port}"
              + (f", ui from {ui}" if ui else ""), file=sys.stderr)
        try:
            server.serve_tcp(host, port, paths=paths,
                             fuel_budget=args.fuel, ui_dir=ui)
        except KeyboardInterrupt:
            pass
        return 0
    return server.serve_stdio(paths=paths, fuel_budget=args.fuel)


if __name__ == "__main__":
    sys.exit(main())
