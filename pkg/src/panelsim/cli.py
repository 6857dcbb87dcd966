"""Operator command-line tool: lint, serve, exec, capture, script."""

from __future__ import annotations

import argparse
import os
import socket
import sys

from . import protocol, server
from .netlist import has_errors, lint, parse, render_diagnostics


class CommandError(Exception):
    """Bad arguments for a wire command; reported as BAD_ARG locally."""


class TransportError(Exception):
    pass


class Client:
    """Minimal blocking client speaking one frame at a time."""

    def __init__(self, host: str, port: int, timeout: float = 120.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}")
        self._decoder = protocol.StreamDecoder()

    def close(self):
        self._sock.close()

    def roundtrip(self, opcode: int, payload: bytes = b"") -> protocol.Frame:
        try:
            self._sock.sendall(protocol.encode(protocol.Frame.request(opcode, payload)))
            while True:
                data = self._sock.recv(4096)
                if not data:
                    raise TransportError("server closed the connection")
                for kind, item in self._decoder.feed(data):
                    if kind == "frame":
                        return item
                    raise TransportError(f"garbled response: {item}")
        except OSError as exc:
            raise TransportError(str(exc))


def _int_arg(text: str, lo: int, hi: int) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise CommandError(f"not an integer: {text!r}")
    if not lo <= value <= hi:
        raise CommandError(f"{value} outside {lo}..{hi}")
    return value


def encode_command(name: str, args: list[str]) -> tuple[int, bytes]:
    """Map a human-readable command to (opcode, payload)."""

    def want(n):
        if len(args) != n:
            raise CommandError(f"{name} takes {n} argument(s)")

    if name == "set-dout":
        want(2)
        return protocol.SET_DOUT, bytes([_int_arg(args[0], 0, 3),
                                         _int_arg(args[1], 0, 1)])
    if name == "get-din":
        want(1)
        return protocol.GET_DIN, bytes([_int_arg(args[0], 0, 3)])
    if name == "set-dac":
        want(1)
        return protocol.SET_DAC, bytes([_int_arg(args[0], 0, 255)])
    if name == "get-adc":
        want(1)
        return protocol.GET_ADC, bytes([_int_arg(args[0], 0, 3)])
    if name == "set-pwg":
        want(1)
        try:
            hz = float(args[0])
        except ValueError:
            raise CommandError(f"not a frequency: {args[0]!r}")
        if not 0 <= hz <= 4e6:
            raise CommandError(f"{hz} Hz does not fit the wire encoding")
        return protocol.SET_PWG, protocol.pack_u32(round(hz * 1000))
    if name == "get-cntr":
        want(1)
        return protocol.GET_CNTR, protocol.pack_u16(_int_arg(args[0], 0, 65535))
    if name == "get-cmp":
        want(0)
        return protocol.GET_CMP, b""
    if name == "get-status":
        want(0)
        return protocol.GET_STATUS, b""
    if name == "clear-fault":
        want(0)
        return protocol.CLEAR_FAULT, b""
    if name == "load-patch":
        want(1)
        try:
            text = open(args[0], encoding="utf-8").read()
        except OSError as exc:
            raise CommandError(f"cannot read {args[0]}: {exc}")
        return protocol.LOAD_PATCH, text.encode("utf-8")
    if name == "get-version":
        want(0)
        return protocol.GET_VERSION, b""
    raise CommandError(f"unknown command {name!r}")


def render_response(name: str, frame: protocol.Frame, gate_ms: int = 0) -> str:
    status = protocol.STATUS_NAMES.get(frame.code, f"STATUS_{frame.code:02X}")
    if frame.code != protocol.ST_OK:
        return status
    p = frame.payload
    if name in ("get-din", "get-cmp"):
        return f"OK level={p[0]}"
    if name == "get-adc":
        return f"OK code={protocol.unpack_u16(p)}"
    if name == "set-pwg":
        return f"OK actual_hz={protocol.unpack_u32(p) / 1000.0:.3f}"
    if name == "get-cntr":
        count = protocol.unpack_u32(p)
        hz = count / (gate_ms / 1000.0) if gate_ms else 0.0
        return f"OK count={count} hz={hz:.3f}"
    if name == "get-status":
        return f"OK faults=0x{p[0]:02X}"
    if name == "load-patch":
        return f"OK diagnostics={protocol.unpack_u16(p)}"
    if name == "get-version":
        return f'OK version="{p.decode("ascii", "replace")}"'
    return "OK"


def run_command(client: Client, name: str, args: list[str]) -> tuple[bool, str]:
    opcode, payload = encode_command(name, args)
    gate_ms = int(args[0]) if name == "get-cntr" else 0
    frame = client.roundtrip(opcode, payload)
    return frame.code == protocol.ST_OK, render_response(name, frame, gate_ms)


# ---- subcommands -------------------------------------------------------


def cmd_lint(ns) -> int:
    try:
        source = open(ns.path, encoding="utf-8").read()
    except OSError as exc:
        print(f"cannot read {ns.path}: {exc}", file=sys.stderr)
        return 2
    result = parse(source)
    diags = result.diagnostics + lint(result.netlist)
    sys.stdout.write(render_diagnostics(diags, ns.path))
    return 1 if has_errors(diags) else 0


def cmd_serve(ns) -> int:
    return server.serve(ns.patch, port=ns.port, seed=ns.seed,
                        pace=ns.pace, host=ns.host, ready_fd=ns.ready_fd)


def cmd_exec(ns) -> int:
    try:
        client = Client(ns.host, ns.port)
    except TransportError as exc:
        print(exc, file=sys.stderr)
        return 3
    try:
        ok, line = run_command(client, ns.name, ns.args)
    except CommandError:
        print("BAD_ARG")
        return 1
    except TransportError as exc:
        print(exc, file=sys.stderr)
        return 3
    finally:
        client.close()
    print(line)
    return 0 if ok else 1


def cmd_capture(ns) -> int:
    try:
        client = Client(ns.host, ns.port)
    except TransportError as exc:
        print(exc, file=sys.stderr)
        return 3
    payload = (bytes([ns.channel]) + protocol.pack_u16(ns.count)
               + protocol.pack_u32(ns.dt_us))
    try:
        frame = client.roundtrip(protocol.CAPTURE, payload)
    except TransportError as exc:
        print(exc, file=sys.stderr)
        return 3
    finally:
        client.close()
    if frame.code != protocol.ST_OK:
        print(protocol.STATUS_NAMES.get(frame.code, f"STATUS_{frame.code:02X}"))
        return 1
    codes = [protocol.unpack_u16(frame.payload, i)
             for i in range(0, len(frame.payload), 2)]
    with open(ns.out, "w", encoding="utf-8", newline="") as f:
        f.write("t_us,code,volts\n")
        for i, code in enumerate(codes):
            f.write(f"{i * ns.dt_us},{code},{code * 5.0 / 1023:.4f}\n")
    print(f"OK samples={len(codes)}")
    return 0


def cmd_script(ns) -> int:
    try:
        lines = open(ns.path, encoding="utf-8").read().splitlines()
    except OSError as exc:
        print(f"cannot read {ns.path}: {exc}", file=sys.stderr)
        return 2
    try:
        client = Client(ns.host, ns.port)
    except TransportError as exc:
        print(exc, file=sys.stderr)
        return 3
    all_ok = True
    try:
        for raw in lines:
            words = raw.split("#", 1)[0].split()
            if not words:
                continue
            try:
                ok, line = run_command(client, words[0], words[1:])
            except CommandError:
                ok, line = False, "BAD_ARG"
            except TransportError as exc:
                print(exc, file=sys.stderr)
                return 3
            print(line)
            all_ok = all_ok and ok
    finally:
        client.close()
    return 0 if all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelsim",
        description="Virtual lab-instrument front panel: linter, emulator "
                    "server and wire-protocol client.",
        epilog="Wire commands for exec/script: set-dout PIN LEVEL | "
               "get-din PIN | set-dac CODE | get-adc CH | set-pwg HZ | "
               "get-cntr GATE_MS | get-cmp | get-status | clear-fault | "
               "load-patch FILE | get-version")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=server.port_from_env())
    # accept the global flags after the subcommand as well
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--host", default=argparse.SUPPRESS)
    common.add_argument("--port", type=int, default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lint", parents=[common],
                       help="check a patch file against the wiring rules")
    p.add_argument("path")
    p.set_defaults(func=cmd_lint)

    p = sub.add_parser("serve", parents=[common], help="run the emulator server")
    p.add_argument("--patch", default=None, help="patch file to load at start")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pace", action="store_true",
                   help="sleep the simulated duration of measurements")
    p.add_argument("--ready-fd", type=int, default=None,
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("exec", parents=[common], help="send one command and print the response")
    p.add_argument("name")
    p.add_argument("args", nargs="*")
    p.set_defaults(func=cmd_exec)

    p = sub.add_parser("capture", parents=[common], help="capture ADC samples to a CSV file")
    p.add_argument("channel", type=int)
    p.add_argument("count", type=int)
    p.add_argument("dt_us", type=int)
    p.add_argument("out")
    p.set_defaults(func=cmd_capture)

    p = sub.add_parser("script", parents=[common], help="run a file of commands, one per line")
    p.add_argument("path")
    p.set_defaults(func=cmd_script)

    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    return ns.func(ns)


if __name__ == "__main__":
    sys.exit(main())
