"""Transfer-function models for every front-panel block.

All functions here are pure and operate on plain floats in SI units.
Stateful behavior (waveform phase, delays, fault latching) lives in the
simulation engine; this module only knows the DC transfer curves.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum


@dataclass(frozen=True)
class PanelConstants:
    """Every numeric constant quoted by the panel documentation.

    Single source of truth; nothing else in the package hard-codes a
    panel voltage or limit.
    """

    v_logic_d0: float = 4.57      # buffered D0 HIGH level
    v_logic_d13: float = 5.0      # D1..D3 HIGH level
    i_supply_max: float = 0.100   # regulated 5 V budget
    r_series_min: float = 1000.0  # mandatory series resistor for bipolar sources
    v_ref_cmp: float = 1.23       # comparator internal reference
    i_ccs: float = 0.001          # constant current source
    dac_bits: int = 8
    adc_bits: int = 10
    v_adc_full: float = 5.0
    v_rail_pos: float = 5.0
    v_rail_neg: float = -5.0
    v_adapter: float = 9.0

    # values below are emulator policy, not quoted by the documentation
    r_f_internal: float = 10_000.0   # non-inverting amp internal feedback R
    v_ccs_compliance: float = 4.5    # CCS stops regulating above this
    v_clamp_low: float = -0.5        # input protection diode window
    v_clamp_high: float = 5.5
    i_clamp_max: float = 0.005       # overcurrent threshold into the clamp
    v_th_low: float = 0.8            # digital input hysteresis thresholds
    v_th_high: float = 2.0
    offset_max: float = 0.010        # op-amp offset magnitude bound
    f_clk: float = 8e6               # waveform generator master clock
    d0_delay_s: float = 1.0e-3       # D0 buffer latency

    def __post_init__(self):
        if self.adc_bits < 1 or self.dac_bits < 1:
            raise ValueError("converter bit counts must be >= 1")
        if not 0.0 <= self.v_ref_cmp <= self.v_adc_full:
            raise ValueError("comparator reference outside ADC range")
        for name in ("v_logic_d0", "v_logic_d13", "i_supply_max", "r_series_min",
                     "i_ccs", "v_adc_full", "v_rail_pos", "v_adapter"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def adc_max_code(self) -> int:
        return (1 << self.adc_bits) - 1

    @property
    def dac_max_code(self) -> int:
        return (1 << self.dac_bits) - 1

    @property
    def adc_lsb(self) -> float:
        return self.v_adc_full / self.adc_max_code


DEFAULT_CONSTANTS = PanelConstants()


class SignalClass(Enum):
    UNIPOLAR05 = "unipolar-0-5"
    BIPOLAR55 = "bipolar-5-5"
    SUPPLY_RAIL = "supply-rail"
    GROUND = "ground"
    INPUT_ONLY = "input-only"


class LogicLevel(Enum):
    LOW = 0
    HIGH = 1


@dataclass(frozen=True)
class CalibrationSet:
    """Per-device op-amp offsets, fixed for the lifetime of an instance.

    Drawn once from a seeded generator so that the same seed always yields
    a bit-identical set on every platform.
    """

    invamp1_offset: float
    invamp2_offset: float
    noninv_offset: float
    offset1_err: float
    offset2_err: float

    def __post_init__(self):
        for name, v in vars(self).items():
            if not math.isfinite(v) or abs(v) > DEFAULT_CONSTANTS.offset_max:
                raise ValueError(f"{name} out of range: {v}")

    @classmethod
    def from_seed(cls, seed: int, limit: float = DEFAULT_CONSTANTS.offset_max) -> "CalibrationSet":
        rng = random.Random(seed)
        return cls(*(rng.uniform(-limit, limit) for _ in range(5)))


class CodeOutOfRange(ValueError):
    pass


class PinOutOfRange(ValueError):
    pass


def _round_half_away(x: float) -> int:
    if x >= 0:
        return math.floor(x + 0.5)
    return math.ceil(x - 0.5)


def clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def adc_quantize(v: float, c: PanelConstants = DEFAULT_CONSTANTS) -> int:
    """Convert a node voltage to an ADC code; out-of-range inputs clamp."""
    code = _round_half_away(v / c.v_adc_full * c.adc_max_code)
    return max(0, min(code, c.adc_max_code))


def dac_output(code: int, c: PanelConstants = DEFAULT_CONSTANTS) -> float:
    """DAC code to output voltage; full scale at the top code."""
    if not 0 <= code <= c.dac_max_code:
        raise CodeOutOfRange(f"DAC code {code} outside 0..{c.dac_max_code}")
    return code * c.v_adc_full / c.dac_max_code


def inverting_amp(v_in: float, r_in: float, r_f: float, offset: float = 0.0,
                  c: PanelConstants = DEFAULT_CONSTANTS) -> float:
    """Inverting amplifier with user-inserted input/feedback resistors."""
    return clamp(-(r_f / r_in) * v_in + offset, c.v_rail_neg, c.v_rail_pos)


def noninverting_amp(v_in: float, r_g: float | None, offset: float = 0.0,
                     c: PanelConstants = DEFAULT_CONSTANTS) -> float:
    """Non-inverting amplifier; gain set by a resistor to ground.

    An open gain socket gives unity gain (voltage follower).
    """
    gain = 1.0 if r_g is None else 1.0 + c.r_f_internal / r_g
    return clamp(gain * v_in + offset, c.v_rail_neg, c.v_rail_pos)


def offset_amp(v_in: float, err: float = 0.0,
               c: PanelConstants = DEFAULT_CONSTANTS) -> float:
    """Level shifter mapping -5..+5 V onto the 0..5 V ADC range."""
    return clamp(0.5 * v_in + c.v_adc_full / 2 + err, 0.0, c.v_adc_full)


def comparator(v_neg: float, c: PanelConstants = DEFAULT_CONSTANTS) -> LogicLevel:
    """Comparator against the internal reference; equality reads LOW."""
    return LogicLevel.HIGH if v_neg < c.v_ref_cmp else LogicLevel.LOW


def ccs_node_voltage(r_load: float | None,
                     c: PanelConstants = DEFAULT_CONSTANTS) -> tuple[float, bool]:
    """Constant current source node voltage and compliance flag.

    Returns (volts, out_of_compliance). An open load saturates at the
    compliance voltage.
    """
    if r_load is None:
        return c.v_ccs_compliance, True
    v = c.i_ccs * r_load
    if v > c.v_ccs_compliance:
        return c.v_ccs_compliance, True
    return v, False


def digital_out_level(pin: int, state: bool,
                      c: PanelConstants = DEFAULT_CONSTANTS) -> float:
    """Logic HIGH level per output pin; D0 is transistor-buffered and lower."""
    if not 0 <= pin <= 3:
        raise PinOutOfRange(f"digital output pin {pin}")
    if not state:
        return 0.0
    return c.v_logic_d0 if pin == 0 else c.v_logic_d13


def digital_in_read(v: float, previous: LogicLevel,
                    c: PanelConstants = DEFAULT_CONSTANTS) -> LogicLevel:
    """Digital input with hysteresis: holds state inside the threshold band."""
    if v < c.v_th_low:
        return LogicLevel.LOW
    if v > c.v_th_high:
        return LogicLevel.HIGH
    return previous


def clamp_current(v_src: float, r_series: float,
                  c: PanelConstants = DEFAULT_CONSTANTS) -> tuple[float, bool]:
    """Current pushed into the input protection clamp by an external source.

    Returns (amps, overcurrent). A 1 kOhm series resistor keeps a -5 V
    source at 4.5 mA, just under the threshold.
    """
    if r_series < 1.0:
        r_series = 1.0  # bare-wire floor
    if v_src < c.v_clamp_low:
        i = (c.v_clamp_low - v_src) / r_series
    elif v_src > c.v_clamp_high:
        i = (v_src - c.v_clamp_high) / r_series
    else:
        i = 0.0
    return i, abs(i) > c.i_clamp_max
