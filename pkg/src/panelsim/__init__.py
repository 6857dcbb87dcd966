"""Software twin of a multi-function lab-instrument front panel.

Block transfer models, a wiring DSL with an electrical-rule linter, a
discrete-time signal-flow simulator, a framed binary wire protocol and a
TCP emulator service, plus an operator CLI.
"""

from .blocks import (
    CalibrationSet,
    LogicLevel,
    PanelConstants,
    SignalClass,
    adc_quantize,
    ccs_node_voltage,
    clamp_current,
    comparator,
    dac_output,
    digital_in_read,
    digital_out_level,
    inverting_amp,
    noninverting_amp,
    offset_amp,
)
from .device import Device
from .engine import CaptureBuffer, Fault, SignalGraph, build
from .netlist import Diagnostic, Netlist, SocketId, format_netlist, lint, parse

__version__ = "0.1.0"

__all__ = [
    "CalibrationSet", "LogicLevel", "PanelConstants", "SignalClass",
    "adc_quantize", "ccs_node_voltage", "clamp_current", "comparator",
    "dac_output", "digital_in_read", "digital_out_level", "inverting_amp",
    "noninverting_amp", "offset_amp",
    "Device", "CaptureBuffer", "Fault", "SignalGraph", "build",
    "Diagnostic", "Netlist", "SocketId", "format_netlist", "lint", "parse",
]
