"""The emulated instrument: command semantics over the simulation engine.

One Device services one decoded command at a time; every command is
atomic. Measurement commands advance simulated time themselves; the
device is quiescent between commands.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import engine, protocol
from .blocks import DEFAULT_CONSTANTS, CalibrationSet, PanelConstants
from .engine import Fault, SignalGraph
from .netlist import Netlist, has_errors, lint, parse

VERSION = "panelsim 0.1.0"

# commands that refuse to run while a fault is latched
_MEASUREMENTS = {protocol.GET_DIN, protocol.GET_ADC, protocol.CAPTURE,
                 protocol.GET_CNTR, protocol.GET_CMP}

_FAULT_BITS = (
    (Fault.SUPPLY_OVERLOAD, 0x01),
    (Fault.OVERCURRENT, 0x02),
    (Fault.NEGATIVE_SIGNAL_AT_COUNTER, 0x04),
)


@dataclass(frozen=True)
class CommandResult:
    status: int
    payload: bytes = b""

    # simulated microseconds the command consumed; used for pacing
    elapsed_us: int = 0

    @property
    def ok(self) -> bool:
        return self.status == protocol.ST_OK


class Device:
    def __init__(self, netlist: Netlist | None = None, seed: int = 0,
                 constants: PanelConstants = DEFAULT_CONSTANTS,
                 noise_sigma: float = 0.0):
        self.seed = seed
        self.constants = constants
        self.cal = CalibrationSet.from_seed(seed)
        self.noise_sigma = noise_sigma
        self.graph = SignalGraph(netlist or Netlist(), self.cal, constants,
                                 noise_sigma=noise_sigma, noise_seed=seed)

    # ---- command dispatch ----------------------------------------------

    def execute(self, opcode: int, payload: bytes) -> CommandResult:
        handler = _HANDLERS.get(opcode)
        if handler is None:
            return CommandResult(protocol.ST_BAD_OPCODE)
        if opcode in _MEASUREMENTS and self.graph.faults:
            return CommandResult(protocol.ST_FAULT_ACTIVE)
        return handler(self, payload)

    def execute_frame(self, frame: protocol.Frame) -> protocol.Frame:
        result = self.execute(frame.code, frame.payload)
        return protocol.Frame.response(result.status, result.payload)

    def fault_mask(self) -> int:
        return sum(bit for flag, bit in _FAULT_BITS if flag in self.graph.faults)

    # ---- handlers ------------------------------------------------------

    def _set_dout(self, payload: bytes) -> CommandResult:
        if len(payload) != 2 or payload[0] > 3 or payload[1] > 1:
            return CommandResult(protocol.ST_BAD_ARG)
        self.graph.set_dout(payload[0], bool(payload[1]))
        return CommandResult(protocol.ST_OK)

    def _get_din(self, payload: bytes) -> CommandResult:
        if len(payload) != 1 or payload[0] > 3:
            return CommandResult(protocol.ST_BAD_ARG)
        level = self.graph.read_din(payload[0])
        return CommandResult(protocol.ST_OK, bytes([level.value]))

    def _set_dac(self, payload: bytes) -> CommandResult:
        if len(payload) != 1:
            return CommandResult(protocol.ST_BAD_ARG)
        self.graph.set_dac(payload[0])
        return CommandResult(protocol.ST_OK)

    def _get_adc(self, payload: bytes) -> CommandResult:
        if len(payload) != 1 or payload[0] > 3:
            return CommandResult(protocol.ST_BAD_ARG)
        code = self.graph.read_adc(payload[0])
        return CommandResult(protocol.ST_OK, protocol.pack_u16(code))

    def _capture(self, payload: bytes) -> CommandResult:
        if len(payload) != 7:
            return CommandResult(protocol.ST_BAD_ARG)
        ch = payload[0]
        n = protocol.unpack_u16(payload, 1)
        dt_us = protocol.unpack_u32(payload, 3)
        try:
            buf = self.graph.capture(ch, n, dt_us)
        except engine.BadCaptureArgs:
            return CommandResult(protocol.ST_LIMIT)
        data = b"".join(protocol.pack_u16(c) for c in buf.samples)
        return CommandResult(protocol.ST_OK, data, elapsed_us=n * dt_us)

    def _set_pwg(self, payload: bytes) -> CommandResult:
        if len(payload) != 4:
            return CommandResult(protocol.ST_BAD_ARG)
        f_req = protocol.unpack_u32(payload) / 1000.0  # wire carries mHz
        try:
            actual = self.graph.set_pwg(f_req)
        except engine.FreqOutOfRange:
            return CommandResult(protocol.ST_BAD_ARG)
        return CommandResult(protocol.ST_OK,
                             protocol.pack_u32(round(actual * 1000.0)))

    def _get_cntr(self, payload: bytes) -> CommandResult:
        if len(payload) != 2:
            return CommandResult(protocol.ST_BAD_ARG)
        gate_ms = protocol.unpack_u16(payload)
        try:
            _, count = self.graph.measure_frequency(gate_ms)
        except engine.BadCaptureArgs:
            return CommandResult(protocol.ST_BAD_ARG)
        except engine.NegativeSignalAtCounter:
            return CommandResult(protocol.ST_FAULT_ACTIVE,
                                 elapsed_us=gate_ms * 1000)
        return CommandResult(protocol.ST_OK, protocol.pack_u32(count),
                             elapsed_us=gate_ms * 1000)

    def _get_cmp(self, payload: bytes) -> CommandResult:
        if payload:
            return CommandResult(protocol.ST_BAD_ARG)
        return CommandResult(protocol.ST_OK,
                             bytes([self.graph.read_cmp().value]))

    def _get_status(self, payload: bytes) -> CommandResult:
        if payload:
            return CommandResult(protocol.ST_BAD_ARG)
        return CommandResult(protocol.ST_OK, bytes([self.fault_mask()]))

    def _clear_fault(self, payload: bytes) -> CommandResult:
        if payload:
            return CommandResult(protocol.ST_BAD_ARG)
        self.graph.clear_faults()
        return CommandResult(protocol.ST_OK)

    def _load_patch(self, payload: bytes) -> CommandResult:
        try:
            source = payload.decode("utf-8")
        except UnicodeDecodeError:
            return CommandResult(protocol.ST_BAD_ARG)
        result = parse(source)
        diags = result.diagnostics + lint(result.netlist, self.constants)
        if has_errors(diags):
            return CommandResult(protocol.ST_LINT_ERROR,
                                 protocol.pack_u16(len(diags)))
        try:
            self._rewire(result.netlist)
        except engine.CycleDetected:
            return CommandResult(protocol.ST_LINT_ERROR, protocol.pack_u16(1))
        return CommandResult(protocol.ST_OK, protocol.pack_u16(len(diags)))

    def _get_version(self, payload: bytes) -> CommandResult:
        if payload:
            return CommandResult(protocol.ST_BAD_ARG)
        return CommandResult(protocol.ST_OK, VERSION.encode("ascii"))

    def _rewire(self, netlist: Netlist):
        """Swap wiring, carrying registers, clock and faults over."""
        old = self.graph
        new = SignalGraph(netlist, self.cal, self.constants,
                          noise_sigma=self.noise_sigma, noise_seed=self.seed)
        new.t_us = old.t_us
        new.dout = list(old.dout)
        new.dac_code = old.dac_code
        new.pwg_divider = old.pwg_divider
        new.faults = old.faults
        new._d0_pending = old._d0_pending
        new._din_state = list(old._din_state)
        new.supply_audit()
        self.graph = new

    # ---- in-process extras (not on the wire) ---------------------------

    def calibrate_amplifier(self, which: str) -> float:
        return self.graph.calibrate_amplifier(which)


_HANDLERS = {
    protocol.SET_DOUT: Device._set_dout,
    protocol.GET_DIN: Device._get_din,
    protocol.SET_DAC: Device._set_dac,
    protocol.GET_ADC: Device._get_adc,
    protocol.CAPTURE: Device._capture,
    protocol.SET_PWG: Device._set_pwg,
    protocol.GET_CNTR: Device._get_cntr,
    protocol.GET_CMP: Device._get_cmp,
    protocol.GET_STATUS: Device._get_status,
    protocol.CLEAR_FAULT: Device._clear_fault,
    protocol.LOAD_PATCH: Device._load_patch,
    protocol.GET_VERSION: Device._get_version,
}
