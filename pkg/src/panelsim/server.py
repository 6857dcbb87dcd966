"""Stream transport hosting one emulated device.

One session is active at a time; further connections wait in the accept
queue until the current client disconnects. Frames are executed strictly
in arrival order and every response is flushed before the next read, so a
recorded request stream always replays to the same response stream.
"""

from __future__ import annotations

import os
import signal
import socket
import sys
import time

from . import protocol
from .device import Device
from .netlist import has_errors, lint, parse, render_diagnostics

EXIT_OK = 0
EXIT_LINT = 2
EXIT_BIND = 3

DEFAULT_PORT = 8765


def port_from_env(default: int = DEFAULT_PORT) -> int:
    value = os.environ.get("PANELSIM_PORT")
    if value:
        try:
            return int(value)
        except ValueError:
            pass
    return default


class EmulatorServer:
    def __init__(self, device: Device, host: str = "127.0.0.1",
                 port: int = 0, pace: bool = False):
        self.device = device
        self.pace = pace
        self._stop = False
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(8)
        self._sock.settimeout(0.2)
        self.host, self.port = self._sock.getsockname()

    def stop(self):
        self._stop = True

    def serve_forever(self):
        try:
            while not self._stop:
                try:
                    conn, _ = self._sock.accept()
                except socket.timeout:
                    continue
                except OSError:
                    break
                with conn:
                    self._serve_session(conn)
        finally:
            self._sock.close()

    def _serve_session(self, conn: socket.socket):
        conn.settimeout(0.2)
        decoder = protocol.StreamDecoder()
        while not self._stop:
            try:
                data = conn.recv(4096)
            except socket.timeout:
                continue
            except OSError:
                return
            if not data:
                return
            for kind, item in decoder.feed(data):
                if kind == "error":
                    resp = protocol.Frame.response(protocol.ST_CRC_ERROR)
                    elapsed_us = 0
                else:
                    frame = item
                    if frame.magic != protocol.MAGIC_REQUEST:
                        resp = protocol.Frame.response(protocol.ST_BAD_OPCODE)
                        elapsed_us = 0
                    else:
                        result = self.device.execute(frame.code, frame.payload)
                        resp = protocol.Frame.response(result.status,
                                                       result.payload)
                        elapsed_us = result.elapsed_us
                try:
                    conn.sendall(protocol.encode(resp))
                except OSError:
                    return
                if self.pace and elapsed_us:
                    time.sleep(elapsed_us / 1e6)


def serve(patch_path: str | None, port: int, seed: int = 0,
          pace: bool = False, host: str = "127.0.0.1",
          ready_fd: int | None = None) -> int:
    """Run a server until SIGINT/SIGTERM; returns the process exit code."""
    netlist = None
    if patch_path is not None:
        try:
            source = open(patch_path, encoding="utf-8").read()
        except OSError as exc:
            print(f"cannot read {patch_path}: {exc}", file=sys.stderr)
            return EXIT_LINT
        result = parse(source)
        diags = result.diagnostics + lint(result.netlist)
        if has_errors(diags):
            sys.stderr.write(render_diagnostics(diags, patch_path))
            return EXIT_LINT
        if diags:
            sys.stderr.write(render_diagnostics(diags, patch_path))
        netlist = result.netlist

    device = Device(netlist, seed=seed)
    try:
        server = EmulatorServer(device, host=host, port=port, pace=pace)
    except OSError as exc:
        print(f"cannot bind {host}:{port}: {exc}", file=sys.stderr)
        return EXIT_BIND

    signals_seen = 0

    def handle(signum, frame):
        nonlocal signals_seen
        signals_seen += 1
        if signals_seen > 1:
            os._exit(1)
        server.stop()

    signal.signal(signal.SIGINT, handle)
    signal.signal(signal.SIGTERM, handle)

    if ready_fd is not None:
        # announce the bound port to a parent process
        os.write(ready_fd, f"{server.port}\n".encode())
        os.close(ready_fd)
    else:
        print(f"listening on {server.host}:{server.port}", file=sys.stderr)

    server.serve_forever()
    return EXIT_OK
