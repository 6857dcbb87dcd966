import threading
from pathlib import Path

import pytest

from panelsim.device import Device
from panelsim.netlist import parse
from panelsim.server import EmulatorServer

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
BENCH_PATCH = FIXTURES / "bench.patch"
GOLDEN_SCRIPT = FIXTURES / "golden.script"
GOLDEN_TRANSCRIPT = FIXTURES / "golden_transcript.txt"
CRC_FRAMES = FIXTURES / "crc_frames.hex"


def bench_netlist():
    result = parse(BENCH_PATCH.read_text())
    assert result.ok
    return result.netlist


@pytest.fixture
def bench_device():
    return Device(bench_netlist(), seed=42)


class RunningServer:
    def __init__(self, device, pace=False):
        self.server = EmulatorServer(device, port=0, pace=pace)
        self.port = self.server.port
        self._thread = threading.Thread(target=self.server.serve_forever,
                                        daemon=True)
        self._thread.start()

    def stop(self):
        self.server.stop()
        self._thread.join(timeout=5)


@pytest.fixture
def bench_server(bench_device):
    srv = RunningServer(bench_device)
    yield srv
    srv.stop()
