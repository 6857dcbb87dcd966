"""Patch-file wiring language: parser, electrical-rule linter, formatter.

Grammar (one statement per line, '#' comments):

    connect  SOCKET SOCKET ["series" OHMS]
    resistor OHMS SOCKET SOCKET
    insert   PARAM OHMS

OHMS accepts decimal values with optional k/M suffixes ("1k" = 1000).
Socket names are case-insensitive and canonicalized to upper case.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .blocks import DEFAULT_CONSTANTS, SignalClass


class Direction(Enum):
    SOURCE = "source"
    SINK = "sink"
    BIDIRECTIONAL = "bidirectional"


class SocketId(Enum):
    DOUT0 = "DOUT0"
    DOUT1 = "DOUT1"
    DOUT2 = "DOUT2"
    DOUT3 = "DOUT3"
    DIN0 = "DIN0"
    DIN1 = "DIN1"
    DIN2 = "DIN2"
    DIN3 = "DIN3"
    ADC0 = "ADC0"
    ADC1 = "ADC1"
    ADC2 = "ADC2"
    ADC3 = "ADC3"
    PWG = "PWG"
    DAC = "DAC"
    CMP = "CMP"
    CNTR = "CNTR"
    CCS = "CCS"
    V5 = "V5"
    GND = "GND"
    INV1_IN = "INV1.IN"
    INV1_OUT = "INV1.OUT"
    INV2_IN = "INV2.IN"
    INV2_OUT = "INV2.OUT"
    NONINV_IN = "NONINV.IN"
    NONINV_OUT = "NONINV.OUT"
    NONINV_RG = "NONINV.RG"
    OFF1_IN = "OFF1.IN"
    OFF1_OUT = "OFF1.OUT"
    OFF2_IN = "OFF2.IN"
    OFF2_OUT = "OFF2.OUT"

    @classmethod
    def parse(cls, name: str) -> "SocketId | None":
        return _SOCKET_BY_NAME.get(name.upper())


_SOCKET_BY_NAME = {s.value: s for s in SocketId}

# (signal class, direction) for every socket
SOCKET_TRAITS: dict[SocketId, tuple[SignalClass, Direction]] = {
    SocketId.DOUT0: (SignalClass.UNIPOLAR05, Direction.SOURCE),
    SocketId.DOUT1: (SignalClass.UNIPOLAR05, Direction.SOURCE),
    SocketId.DOUT2: (SignalClass.UNIPOLAR05, Direction.SOURCE),
    SocketId.DOUT3: (SignalClass.UNIPOLAR05, Direction.SOURCE),
    SocketId.DIN0: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.DIN1: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.DIN2: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.DIN3: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.ADC0: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.ADC1: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.ADC2: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.ADC3: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.PWG: (SignalClass.UNIPOLAR05, Direction.SOURCE),
    SocketId.DAC: (SignalClass.UNIPOLAR05, Direction.SOURCE),
    SocketId.CMP: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.CNTR: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.CCS: (SignalClass.UNIPOLAR05, Direction.SOURCE),
    SocketId.V5: (SignalClass.SUPPLY_RAIL, Direction.SOURCE),
    SocketId.GND: (SignalClass.GROUND, Direction.BIDIRECTIONAL),
    SocketId.INV1_IN: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.INV1_OUT: (SignalClass.BIPOLAR55, Direction.SOURCE),
    SocketId.INV2_IN: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.INV2_OUT: (SignalClass.BIPOLAR55, Direction.SOURCE),
    SocketId.NONINV_IN: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.NONINV_OUT: (SignalClass.BIPOLAR55, Direction.SOURCE),
    SocketId.NONINV_RG: (SignalClass.INPUT_ONLY, Direction.BIDIRECTIONAL),
    SocketId.OFF1_IN: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.OFF1_OUT: (SignalClass.UNIPOLAR05, Direction.SOURCE),
    SocketId.OFF2_IN: (SignalClass.INPUT_ONLY, Direction.SINK),
    SocketId.OFF2_OUT: (SignalClass.UNIPOLAR05, Direction.SOURCE),
}


def signal_class(s: SocketId) -> SignalClass:
    return SOCKET_TRAITS[s][0]


def is_source(s: SocketId) -> bool:
    return SOCKET_TRAITS[s][1] is Direction.SOURCE


class AmpParam(Enum):
    INV1_RIN = "INV1.RIN"
    INV1_RF = "INV1.RF"
    INV2_RIN = "INV2.RIN"
    INV2_RF = "INV2.RF"
    NONINV_RG = "NONINV.RG"

    @classmethod
    def parse(cls, name: str) -> "AmpParam | None":
        return _PARAM_BY_NAME.get(name.upper())


_PARAM_BY_NAME = {p.value: p for p in AmpParam}


class Severity(Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    rule: str          # R1..R8 or SYN; stable across releases
    message: str
    line: int          # 1-based
    column: int        # 1-based

    def render(self, filename: str = "<patch>") -> str:
        return (f"{filename}:{self.line}:{self.column}: "
                f"{self.severity.value}[{self.rule}]: {self.message}")


@dataclass(frozen=True)
class Connection:
    a: SocketId
    b: SocketId
    series_r: float = 1.0   # a bare wire, modeled as 1 ohm
    line: int = 0
    column: int = 0


@dataclass(frozen=True)
class Insert:
    param: AmpParam
    ohms: float
    line: int = 0
    column: int = 0


@dataclass(frozen=True)
class Load:
    socket: SocketId
    r_to_gnd: float
    line: int = 0
    column: int = 0


Statement = Connection | Insert | Load


@dataclass
class Netlist:
    """Parsed wiring description; statement order matches source order."""

    statements: list[Statement] = field(default_factory=list)

    @property
    def connections(self) -> list[Connection]:
        return [s for s in self.statements if isinstance(s, Connection)]

    @property
    def inserted(self) -> dict[AmpParam, float]:
        return {s.param: s.ohms for s in self.statements if isinstance(s, Insert)}

    @property
    def loads(self) -> list[Load]:
        return [s for s in self.statements if isinstance(s, Load)]

    def structurally_equal(self, other: "Netlist") -> bool:
        def shape(n: Netlist):
            return [
                (type(s).__name__,) + _stmt_key(s) for s in n.statements
            ]
        return shape(self) == shape(other)


def _stmt_key(s: Statement):
    if isinstance(s, Connection):
        return (s.a, s.b, s.series_r)
    if isinstance(s, Insert):
        return (s.param, s.ohms)
    return (s.socket, s.r_to_gnd)


_OHMS_RE = re.compile(r"^(\d+(?:\.\d+)?|\.\d+)([kM])?$")


def parse_ohms(token: str) -> float | None:
    m = _OHMS_RE.match(token)
    if not m:
        return None
    value = float(m.group(1))
    if m.group(2) == "k":
        value *= 1e3
    elif m.group(2) == "M":
        value *= 1e6
    if value <= 0:
        return None
    return value


def format_ohms(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return repr(value)


@dataclass
class ParseResult:
    netlist: Netlist
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return not self.diagnostics


_TOKEN_RE = re.compile(r"\S+")


def parse(source: str) -> ParseResult:
    """Parse patch text; recovers to the next line after any error."""
    netlist = Netlist()
    diags: list[Diagnostic] = []
    seen_pairs: set[frozenset[SocketId]] = set()
    seen_params: set[AmpParam] = set()

    for lineno, raw in enumerate(source.splitlines(), start=1):
        text = raw.split("#", 1)[0]
        tokens = [(m.group(0), m.start() + 1) for m in _TOKEN_RE.finditer(text)]
        if not tokens:
            continue

        def syn(msg: str, col: int = tokens[0][1]):
            diags.append(Diagnostic(Severity.ERROR, "SYN", msg, lineno, col))

        word, col0 = tokens[0]
        keyword = word.lower()

        if keyword == "connect":
            stmt = _parse_connect(tokens, lineno, syn)
            if stmt is None:
                continue
            pair = frozenset((stmt.a, stmt.b))
            if pair in seen_pairs:
                syn(f"duplicate connection {stmt.a.value} {stmt.b.value}")
                continue
            seen_pairs.add(pair)
            netlist.statements.append(stmt)
        elif keyword == "resistor":
            stmt = _parse_resistor(tokens, lineno, syn)
            if stmt is None:
                continue
            if isinstance(stmt, Connection):
                pair = frozenset((stmt.a, stmt.b))
                if pair in seen_pairs:
                    syn(f"duplicate connection {stmt.a.value} {stmt.b.value}")
                    continue
                seen_pairs.add(pair)
            if isinstance(stmt, Insert):
                if stmt.param in seen_params:
                    syn(f"duplicate insert for {stmt.param.value}")
                    continue
                seen_params.add(stmt.param)
            netlist.statements.append(stmt)
        elif keyword == "insert":
            stmt = _parse_insert(tokens, lineno, syn)
            if stmt is None:
                continue
            if stmt.param in seen_params:
                syn(f"duplicate insert for {stmt.param.value}")
                continue
            seen_params.add(stmt.param)
            netlist.statements.append(stmt)
        else:
            syn(f"unknown statement '{word}'", col0)

    return ParseResult(netlist, diags)


def _socket_at(tokens, idx, lineno, syn) -> SocketId | None:
    if idx >= len(tokens):
        syn("missing socket name", tokens[-1][1] + len(tokens[-1][0]))
        return None
    name, col = tokens[idx]
    sock = SocketId.parse(name)
    if sock is None:
        syn(f"unknown socket '{name}'", col)
        return None
    return sock


def _ohms_at(tokens, idx, lineno, syn) -> float | None:
    if idx >= len(tokens):
        syn("missing resistance value", tokens[-1][1] + len(tokens[-1][0]))
        return None
    text, col = tokens[idx]
    value = parse_ohms(text)
    if value is None:
        syn(f"malformed resistance '{text}'", col)
        return None
    return value


def _parse_connect(tokens, lineno, syn) -> Connection | None:
    a = _socket_at(tokens, 1, lineno, syn)
    if a is None:
        return None
    b = _socket_at(tokens, 2, lineno, syn)
    if b is None:
        return None
    series = 1.0
    if len(tokens) > 3:
        word, col = tokens[3]
        if word.lower() != "series":
            syn(f"expected 'series', got '{word}'", col)
            return None
        series_val = _ohms_at(tokens, 4, lineno, syn)
        if series_val is None:
            return None
        series = series_val
        if len(tokens) > 5:
            syn(f"unexpected token '{tokens[5][0]}'", tokens[5][1])
            return None
    if a == b:
        syn(f"socket {a.value} connected to itself", tokens[1][1])
        return None
    return Connection(a, b, series, lineno, tokens[0][1])


def _parse_resistor(tokens, lineno, syn) -> Statement | None:
    ohms = _ohms_at(tokens, 1, lineno, syn)
    if ohms is None:
        return None
    a = _socket_at(tokens, 2, lineno, syn)
    if a is None:
        return None
    b = _socket_at(tokens, 3, lineno, syn)
    if b is None:
        return None
    if len(tokens) > 4:
        syn(f"unexpected token '{tokens[4][0]}'", tokens[4][1])
        return None
    col = tokens[0][1]
    if a is SocketId.GND and b is SocketId.GND:
        syn("resistor from GND to GND")
        return None
    if SocketId.GND in (a, b):
        other = b if a is SocketId.GND else a
        if other is SocketId.NONINV_RG:
            return Insert(AmpParam.NONINV_RG, ohms, lineno, col)
        return Load(other, ohms, lineno, col)
    # between two live sockets: acts as the series element of a connection
    return Connection(a, b, ohms, lineno, col)


def _parse_insert(tokens, lineno, syn) -> Insert | None:
    if len(tokens) < 2:
        syn("missing amplifier parameter")
        return None
    name, col = tokens[1]
    param = AmpParam.parse(name)
    if param is None:
        syn(f"unknown amplifier parameter '{name}'", col)
        return None
    ohms = _ohms_at(tokens, 2, lineno, syn)
    if ohms is None:
        return None
    if len(tokens) > 3:
        syn(f"unexpected token '{tokens[3][0]}'", tokens[3][1])
        return None
    return Insert(param, ohms, lineno, tokens[0][1])


_DIN_SOCKETS = {SocketId.DIN0, SocketId.DIN1, SocketId.DIN2, SocketId.DIN3}
_ADC_SOCKETS = {SocketId.ADC0, SocketId.ADC1, SocketId.ADC2, SocketId.ADC3}

# sockets the engine actually models a resistive load on
_MODELED_LOADS = {SocketId.V5, SocketId.CCS}


def lint(n: Netlist, c=DEFAULT_CONSTANTS) -> list[Diagnostic]:
    """Apply wiring rules R1-R8; deterministic order (line, then rule)."""
    diags: list[Diagnostic] = []

    def emit(sev, rule, msg, line, col):
        diags.append(Diagnostic(sev, rule, msg, line, col))

    inv_referenced: dict[str, Statement] = {}
    for stmt in n.statements:
        if isinstance(stmt, Connection):
            for s in (stmt.a, stmt.b):
                if s in (SocketId.INV1_IN, SocketId.INV1_OUT):
                    inv_referenced.setdefault("INV1", stmt)
                if s in (SocketId.INV2_IN, SocketId.INV2_OUT):
                    inv_referenced.setdefault("INV2", stmt)

    for stmt in n.statements:
        if isinstance(stmt, Connection):
            src, dst = oriented(stmt)
            if src is not None and signal_class(src) is SignalClass.BIPOLAR55:
                if dst in _DIN_SOCKETS and stmt.series_r < c.r_series_min:
                    emit(Severity.ERROR, "R1",
                         f"bipolar source {src.value} into {dst.value} needs "
                         f">= {int(c.r_series_min)} ohm in series (have "
                         f"{format_ohms(stmt.series_r)})",
                         stmt.line, stmt.column)
                if dst is SocketId.CNTR:
                    emit(Severity.ERROR, "R2",
                         f"counter input accepts 0..5 V pulses only; "
                         f"{src.value} swings negative",
                         stmt.line, stmt.column)
                if dst in _ADC_SOCKETS:
                    emit(Severity.WARNING, "R3",
                         f"{src.value} swings below 0 V; route it through an "
                         f"offset amplifier (OFF1/OFF2) before {dst.value}",
                         stmt.line, stmt.column)
            if is_source(stmt.a) and is_source(stmt.b):
                emit(Severity.ERROR, "R6",
                     f"output contention: {stmt.a.value} and {stmt.b.value} "
                     f"are both sources",
                     stmt.line, stmt.column)
        elif isinstance(stmt, Load):
            if stmt.socket is SocketId.CCS and stmt.r_to_gnd > c.v_ccs_compliance / c.i_ccs:
                emit(Severity.WARNING, "R7",
                     f"CCS load {format_ohms(stmt.r_to_gnd)} ohm exceeds the "
                     f"{format_ohms(c.v_ccs_compliance / c.i_ccs)} ohm "
                     f"compliance limit at 1 mA",
                     stmt.line, stmt.column)
            if stmt.socket not in _MODELED_LOADS:
                emit(Severity.WARNING, "R8",
                     f"unmodeled network: resistor at {stmt.socket.value} "
                     f"is ignored by the simulator",
                     stmt.line, stmt.column)

    # R5: amplifier wired with a missing inserted resistor runs open loop
    inserted = n.inserted
    for amp, stmt in sorted(inv_referenced.items()):
        rin = AmpParam[f"{amp}_RIN"]
        rf = AmpParam[f"{amp}_RF"]
        missing = [p.value for p in (rin, rf) if p not in inserted]
        if missing:
            emit(Severity.ERROR, "R5",
                 f"{amp} used with no inserted {' and '.join(missing)}: "
                 f"open loop",
                 stmt.line, stmt.column)

    # R4: total estimated current from the 5 V supply
    v5_loads = [l for l in n.loads if l.socket is SocketId.V5]
    total = sum(5.0 / l.r_to_gnd for l in v5_loads)
    if total > c.i_supply_max:
        last = max(v5_loads, key=lambda l: l.line)
        emit(Severity.WARNING, "R4",
             f"declared 5 V loads draw {total * 1e3:.1f} mA, over the "
             f"{c.i_supply_max * 1e3:.0f} mA budget",
             last.line, last.column)

    diags.sort(key=lambda d: (d.line, d.rule))
    return diags


def oriented(conn: Connection) -> tuple[SocketId | None, SocketId | None]:
    """Return (driver, driven) for a connection, or (None, None) if neither
    endpoint can drive."""
    a_src = is_source(conn.a) or conn.a is SocketId.GND
    b_src = is_source(conn.b) or conn.b is SocketId.GND
    if a_src and not b_src:
        return conn.a, conn.b
    if b_src and not a_src:
        return conn.b, conn.a
    if a_src and b_src:
        # contention (R6) or a short to ground; no usable orientation
        return None, None
    return None, None


def has_errors(diags: list[Diagnostic]) -> bool:
    return any(d.severity is Severity.ERROR for d in diags)


def format_netlist(n: Netlist) -> str:
    """Canonical text; parse(format_netlist(n)) is structurally equal to n."""
    lines = []
    for stmt in n.statements:
        if isinstance(stmt, Connection):
            line = f"connect {stmt.a.value} {stmt.b.value}"
            if stmt.series_r != 1.0:
                line += f" series {format_ohms(stmt.series_r)}"
        elif isinstance(stmt, Insert):
            line = f"insert {stmt.param.value} {format_ohms(stmt.ohms)}"
        else:
            line = f"resistor {format_ohms(stmt.r_to_gnd)} {stmt.socket.value} GND"
        lines.append(line + "\n")
    return "".join(lines)


def render_diagnostics(diags: list[Diagnostic], filename: str) -> str:
    return "".join(d.render(filename) + "\n" for d in diags)
