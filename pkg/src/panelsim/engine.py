"""Signal-flow simulation over a linted netlist.

Time is discrete and exact: the clock counts integer microseconds, and the
waveform generator phase is derived from an 8 MHz tick count, so identical
inputs always reproduce identical sample streams. Evaluation is a single
pass in topological order; feedback wiring is rejected at build time.

Node evaluation is polymorphic over scalars and numpy time arrays, which
lets captures and counter gates run vectorized instead of stepping the
graph once per microsecond.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Flag, auto

import numpy as np

from . import blocks
from .blocks import DEFAULT_CONSTANTS, CalibrationSet, LogicLevel, PanelConstants
from .netlist import (
    AmpParam,
    Connection,
    Netlist,
    SocketId,
    has_errors,
    lint,
    oriented,
)


class SimError(Exception):
    pass


class CycleDetected(SimError):
    def __init__(self, sockets):
        self.sockets = list(sockets)
        names = " -> ".join(s.value for s in self.sockets)
        super().__init__(f"feedback wiring is not supported: {names}")


class LintErrorsPresent(SimError):
    pass


class FreqOutOfRange(SimError):
    pass


class BadCaptureArgs(SimError):
    pass


class NegativeSignalAtCounter(SimError):
    pass


class InputNotGrounded(SimError):
    pass


class OpenLoop(SimError):
    pass


class Fault(Flag):
    SUPPLY_OVERLOAD = auto()
    OVERCURRENT = auto()
    NEGATIVE_SIGNAL_AT_COUNTER = auto()


DT_US = 1                 # engine step, microseconds
MAX_CAPTURE_SAMPLES = 2000
MIN_CAPTURE_DT_US = 4
PWG_DIVIDER_MIN = 40
PWG_DIVIDER_MAX = 4_000_000
PWG_FREQ_MIN = 1.0
PWG_FREQ_MAX = 100_000.0
GATE_MS_MAX = 60_000
_CHUNK = 1 << 20          # counter gate evaluation chunk, samples

_DOUT = (SocketId.DOUT0, SocketId.DOUT1, SocketId.DOUT2, SocketId.DOUT3)
_DIN = (SocketId.DIN0, SocketId.DIN1, SocketId.DIN2, SocketId.DIN3)
_ADC = (SocketId.ADC0, SocketId.ADC1, SocketId.ADC2, SocketId.ADC3)

# internal block edges: input socket evaluates before the output socket
_BLOCK_EDGES = (
    (SocketId.INV1_IN, SocketId.INV1_OUT),
    (SocketId.INV2_IN, SocketId.INV2_OUT),
    (SocketId.NONINV_IN, SocketId.NONINV_OUT),
    (SocketId.OFF1_IN, SocketId.OFF1_OUT),
    (SocketId.OFF2_IN, SocketId.OFF2_OUT),
)


@dataclass
class CaptureBuffer:
    channel: int
    dt_us: int
    t0_us: int
    samples: list[int]

    def rows(self, c: PanelConstants = DEFAULT_CONSTANTS):
        """(t_us, code, volts) per sample, relative to capture start."""
        for i, code in enumerate(self.samples):
            yield i * self.dt_us, code, code * c.v_adc_full / c.adc_max_code


@dataclass
class SignalGraph:
    """One wired-up virtual panel: wiring, registers, clock and faults."""

    netlist: Netlist
    cal: CalibrationSet
    constants: PanelConstants = DEFAULT_CONSTANTS
    noise_sigma: float = 0.0
    noise_seed: int = 0
    check_rules: bool = True

    t_us: int = 0
    dout: list[bool] = field(default_factory=lambda: [False] * 4)
    dac_code: int = 0
    pwg_divider: int = 4000            # 1 kHz until programmed
    faults: Fault = Fault(0)

    def __post_init__(self):
        if self.check_rules and has_errors(lint(self.netlist, self.constants)):
            raise LintErrorsPresent("netlist has lint errors")
        self._d0_pending: tuple[bool, int] | None = None
        self._din_state = [LogicLevel.LOW] * 4
        self._rng = np.random.default_rng(self.noise_seed)
        self._ticks_per_us = int(round(self.constants.f_clk / 1e6))
        self._d0_delay_us = int(round(self.constants.d0_delay_s * 1e6))
        self._build()
        self.supply_audit()

    # ---- graph construction -------------------------------------------

    def _build(self):
        self.drivers: dict[SocketId, tuple[SocketId, float]] = {}
        edges: dict[SocketId, set[SocketId]] = {}
        nodes: set[SocketId] = set()

        def add_edge(u, v):
            nodes.add(u)
            nodes.add(v)
            edges.setdefault(u, set()).add(v)

        referenced: set[SocketId] = set()
        for conn in self.netlist.connections:
            referenced.update((conn.a, conn.b))
            src, dst = oriented(conn)
            if src is None:
                continue
            add_edge(src, dst)
            self.drivers[dst] = (src, conn.series_r)
        for load in self.netlist.loads:
            referenced.add(load.socket)
            nodes.add(load.socket)
        for a, b in _BLOCK_EDGES:
            if a in referenced or b in referenced:
                add_edge(a, b)

        self.order = self._toposort(nodes, edges)

        self.ccs_load = next(
            (l.r_to_gnd for l in self.netlist.loads if l.socket is SocketId.CCS),
            None)
        self.v5_loads = [l.r_to_gnd for l in self.netlist.loads
                         if l.socket is SocketId.V5]
        self.ccs_voltage, self.ccs_compliance = blocks.ccs_node_voltage(
            self.ccs_load, self.constants)
        # connections feeding a digital input, for the clamp-current check
        self._din_feeds = []
        for conn in self.netlist.connections:
            src, dst = oriented(conn)
            if src is not None and dst in _DIN:
                self._din_feeds.append((src, max(conn.series_r, 1.0)))

    @staticmethod
    def _toposort(nodes, edges):
        indeg = {n: 0 for n in nodes}
        for vs in edges.values():
            for v in vs:
                indeg[v] += 1
        ready = sorted((n for n in nodes if indeg[n] == 0),
                       key=lambda s: s.value)
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for v in sorted(edges.get(n, ()), key=lambda s: s.value):
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
            ready.sort(key=lambda s: s.value)
        if len(order) != len(nodes):
            leftover = {n for n in nodes if n not in order}
            raise CycleDetected(sorted(leftover, key=lambda s: s.value))
        return order

    # ---- registers -----------------------------------------------------

    def set_dout(self, pin: int, level: bool):
        if not 0 <= pin <= 3:
            raise blocks.PinOutOfRange(f"digital output pin {pin}")
        if pin == 0:
            self._d0_pending = (bool(level), self.t_us + self._d0_delay_us)
        else:
            self.dout[pin] = bool(level)

    def set_dac(self, code: int):
        if not 0 <= code <= self.constants.dac_max_code:
            raise blocks.CodeOutOfRange(f"DAC code {code}")
        self.dac_code = code

    def set_pwg(self, f_req: float) -> float:
        """Program the waveform generator; returns the quantized frequency."""
        if not PWG_FREQ_MIN <= f_req <= PWG_FREQ_MAX:
            raise FreqOutOfRange(f"{f_req} Hz outside "
                                 f"{PWG_FREQ_MIN:.0f}..{PWG_FREQ_MAX:.0f} Hz")
        n = round(self.constants.f_clk / (2.0 * f_req))
        n = max(PWG_DIVIDER_MIN, min(n, PWG_DIVIDER_MAX))
        self.pwg_divider = n
        return self.constants.f_clk / (2.0 * n)

    @property
    def pwg_actual_hz(self) -> float:
        return self.constants.f_clk / (2.0 * self.pwg_divider)

    # ---- evaluation ----------------------------------------------------

    def _d0_level(self, t):
        base = self.dout[0]
        if self._d0_pending is None:
            lvl = base
        else:
            pend, due = self._d0_pending
            lvl = np.where(np.asarray(t) >= due, pend, base)
        return lvl

    def _source_value(self, s: SocketId, t):
        c = self.constants
        if s is SocketId.GND:
            return 0.0
        if s is SocketId.V5:
            return 0.0 if Fault.SUPPLY_OVERLOAD in self.faults else 5.0
        if s is SocketId.DAC:
            return blocks.dac_output(self.dac_code, c)
        if s is SocketId.CCS:
            return self.ccs_voltage
        if s is SocketId.PWG:
            ticks = np.asarray(t, dtype=np.int64) * self._ticks_per_us
            half = (ticks // self.pwg_divider) % 2
            return np.where(half == 0, 5.0, 0.0)
        if s in _DOUT:
            pin = _DOUT.index(s)
            if pin == 0:
                return np.where(self._d0_level(t), c.v_logic_d0, 0.0)
            return c.v_logic_d13 if self.dout[pin] else 0.0
        return None

    def _eval_node(self, s: SocketId, t, vals):
        c = self.constants
        v = self._source_value(s, t)
        if v is not None:
            return v
        ins = self.netlist.inserted
        if s in (SocketId.INV1_OUT, SocketId.INV2_OUT):
            which = "INV1" if s is SocketId.INV1_OUT else "INV2"
            v_in = vals.get(SocketId[f"{which}_IN"], 0.0)
            r_in = ins.get(AmpParam[f"{which}_RIN"])
            r_f = ins.get(AmpParam[f"{which}_RF"])
            if r_in is None or r_f is None:
                return c.v_rail_pos  # open loop slams to a rail
            off = (self.cal.invamp1_offset if which == "INV1"
                   else self.cal.invamp2_offset)
            return np.clip(-(r_f / r_in) * v_in + off, c.v_rail_neg, c.v_rail_pos)
        if s is SocketId.NONINV_OUT:
            v_in = vals.get(SocketId.NONINV_IN, 0.0)
            r_g = ins.get(AmpParam.NONINV_RG)
            gain = 1.0 if r_g is None else 1.0 + c.r_f_internal / r_g
            return np.clip(gain * v_in + self.cal.noninv_offset,
                           c.v_rail_neg, c.v_rail_pos)
        if s in (SocketId.OFF1_OUT, SocketId.OFF2_OUT):
            v_in = vals.get(
                SocketId.OFF1_IN if s is SocketId.OFF1_OUT else SocketId.OFF2_IN,
                0.0)
            err = (self.cal.offset1_err if s is SocketId.OFF1_OUT
                   else self.cal.offset2_err)
            return np.clip(0.5 * v_in + c.v_adc_full / 2 + err,
                           0.0, c.v_adc_full)
        driver = self.drivers.get(s)
        if driver is not None:
            return vals.get(driver[0], 0.0)
        return 0.0

    def eval_at(self, t):
        """Node voltages at time t (scalar or int64 array of microseconds)."""
        vals: dict[SocketId, object] = {}
        for s in self.order:
            vals[s] = self._eval_node(s, t, vals)
        self._latch_clamp_faults(vals)
        return vals

    def voltages_at(self, t_us: int) -> dict[SocketId, float]:
        return {s: float(v) for s, v in self.eval_at(t_us).items()}

    def _latch_clamp_faults(self, vals):
        c = self.constants
        for src, r in self._din_feeds:
            v = vals.get(src)
            if v is None:
                continue
            i = (np.maximum(0.0, c.v_clamp_low - np.asarray(v))
                 + np.maximum(0.0, np.asarray(v) - c.v_clamp_high)) / r
            if np.any(i > c.i_clamp_max):
                self.faults |= Fault.OVERCURRENT

    def _advance_to(self, t_us: int):
        if self._d0_pending is not None and self._d0_pending[1] <= t_us:
            self.dout[0] = self._d0_pending[0]
            self._d0_pending = None
        self.t_us = t_us

    def step(self) -> dict[SocketId, float]:
        """Evaluate every node once, then advance the clock one step."""
        vals = self.voltages_at(self.t_us)
        self._advance_to(self.t_us + DT_US)
        return vals

    # ---- measurements --------------------------------------------------

    def _quantize(self, v):
        c = self.constants
        if self.noise_sigma > 0.0:
            v = v + self._rng.normal(0.0, self.noise_sigma, np.shape(v) or None)
        scaled = np.asarray(v) / c.v_adc_full * c.adc_max_code
        rounded = np.where(scaled >= 0, np.floor(scaled + 0.5),
                           np.ceil(scaled - 0.5))
        return np.clip(rounded, 0, c.adc_max_code).astype(np.int64)

    def read_adc(self, channel: int) -> int:
        if not 0 <= channel <= 3:
            raise BadCaptureArgs(f"ADC channel {channel}")
        vals = self.eval_at(self.t_us)
        return int(self._quantize(vals.get(_ADC[channel], 0.0)))

    def read_din(self, pin: int) -> LogicLevel:
        if not 0 <= pin <= 3:
            raise blocks.PinOutOfRange(f"digital input pin {pin}")
        vals = self.eval_at(self.t_us)
        v = float(np.asarray(vals.get(_DIN[pin], 0.0)))
        self._din_state[pin] = blocks.digital_in_read(
            v, self._din_state[pin], self.constants)
        return self._din_state[pin]

    def read_cmp(self) -> LogicLevel:
        vals = self.eval_at(self.t_us)
        return blocks.comparator(float(np.asarray(vals.get(SocketId.CMP, 0.0))),
                                 self.constants)

    def capture(self, channel: int, n: int, dt_us: int) -> CaptureBuffer:
        """Sample one ADC channel n times, dt_us apart, advancing the clock."""
        if not 0 <= channel <= 3:
            raise BadCaptureArgs(f"ADC channel {channel}")
        if not 1 <= n <= MAX_CAPTURE_SAMPLES:
            raise BadCaptureArgs(f"sample count {n} outside 1..{MAX_CAPTURE_SAMPLES}")
        if dt_us < MIN_CAPTURE_DT_US:
            raise BadCaptureArgs(f"dt_us {dt_us} below {MIN_CAPTURE_DT_US}")
        t0 = self.t_us
        t = t0 + np.arange(n, dtype=np.int64) * dt_us
        vals = self.eval_at(t)
        v = np.broadcast_to(np.asarray(vals.get(_ADC[channel], 0.0), dtype=float),
                            (n,))
        codes = self._quantize(v)
        self._advance_to(t0 + n * dt_us)
        return CaptureBuffer(channel, dt_us, t0, [int(x) for x in codes])

    def measure_frequency(self, gate_ms: int) -> tuple[float, int]:
        """Count rising edges at CNTR over the gate; returns (hertz, count)."""
        if not 1 <= gate_ms <= GATE_MS_MAX:
            raise BadCaptureArgs(f"gate {gate_ms} ms outside 1..{GATE_MS_MAX}")
        gate_us = gate_ms * 1000
        t0 = self.t_us
        c = self.constants
        count = 0
        # hysteresis detector state: -1 below, +1 above, 0 unknown
        state = 0
        negative = False
        for start in range(0, gate_us, _CHUNK):
            nchunk = min(_CHUNK, gate_us - start)
            t = t0 + start + np.arange(nchunk, dtype=np.int64)
            vals = self.eval_at(t)
            v = np.broadcast_to(
                np.asarray(vals.get(SocketId.CNTR, 0.0), dtype=float), (nchunk,))
            if np.min(v) < c.v_clamp_low:
                negative = True
                break
            ind = np.where(v > c.v_th_high, 1, np.where(v < c.v_th_low, -1, 0))
            ind = ind[ind != 0]
            if ind.size:
                ind = np.concatenate(([state], ind)) if state else ind
                count += int(np.count_nonzero((ind[1:] == 1) & (ind[:-1] == -1)))
                state = int(ind[-1])
        self._advance_to(t0 + gate_us)
        if negative:
            self.faults |= Fault.NEGATIVE_SIGNAL_AT_COUNTER
            raise NegativeSignalAtCounter(
                "signal at CNTR went below the clamp window during the gate")
        return count / (gate_ms / 1000.0), count

    def supply_audit(self) -> tuple[float, bool]:
        """Total estimated 5 V load current; latches overload above budget."""
        total = sum(5.0 / r for r in self.v5_loads)
        if total > self.constants.i_supply_max:
            self.faults |= Fault.SUPPLY_OVERLOAD
        return total, Fault.SUPPLY_OVERLOAD in self.faults

    def clear_faults(self):
        self.faults = Fault(0)
        self.supply_audit()

    # ---- calibration ---------------------------------------------------

    def calibrate_amplifier(self, which: str) -> float:
        """Measure an amplifier's offset by reading its output with the
        input grounded (unwired). Does not modify state."""
        which = which.upper()
        inputs = {"INV1": SocketId.INV1_IN, "INV2": SocketId.INV2_IN,
                  "NONINV": SocketId.NONINV_IN}
        if which not in inputs:
            raise ValueError(f"unknown amplifier {which!r}")
        drv = self.drivers.get(inputs[which])
        if drv is not None and drv[0] is not SocketId.GND:
            raise InputNotGrounded(
                f"{which} input is driven by {drv[0].value}")
        ins = self.netlist.inserted
        if which in ("INV1", "INV2"):
            r_in = ins.get(AmpParam[f"{which}_RIN"])
            r_f = ins.get(AmpParam[f"{which}_RF"])
            if r_in is None or r_f is None:
                raise OpenLoop(f"{which} has no inserted resistors")
            off = (self.cal.invamp1_offset if which == "INV1"
                   else self.cal.invamp2_offset)
            return blocks.inverting_amp(0.0, r_in, r_f, off, self.constants)
        return blocks.noninverting_amp(0.0, ins.get(AmpParam.NONINV_RG),
                                       self.cal.noninv_offset, self.constants)


def build(netlist: Netlist, cal: CalibrationSet, **kwargs) -> SignalGraph:
    """Build a simulation graph from a netlist with no lint errors."""
    return SignalGraph(netlist, cal, **kwargs)
