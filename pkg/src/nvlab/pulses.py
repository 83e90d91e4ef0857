"""Pulse-sequence language, canonical builders and the timing compiler.

Source text is a semicolon-separated list of elements::

    sequence := element (";" element)* ;
    element  := laser | "camera" "(" duration ")" | "tau"
              | "delay" "(" span ")" | mw ;
    laser    := ("pump" | "readout") [ "(" duration ")" ] ;
    mw       := ("pi" | "pi/2" | "mw" "(" span ")") [ "@" number ] ;
    span     := duration | name ;
    duration := number unit ;   unit := "ns" | "us" | "ms" ;

A bare ``pump``/``readout`` takes its duration from the hardware profile at
compile time.  ``name`` is a symbolic sweep variable (``tau`` by convention);
a sequence may use only one.  The MW phase after ``@`` is in degrees.

Durations in the AST are in ns.  Compiled tables are quantized to the pulse
generator tick.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, replace
from typing import Union

Span = Union[float, str]

UNITS = {"ns": 1.0, "us": 1e3, "ms": 1e6}


class SequenceSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CompileError(ValueError):
    pass


# ---------------------------------------------------------------- AST


@dataclass(frozen=True)
class MwPulse:
    angle: str | None = None  # "pi", "pi/2" or None for an explicit duration
    duration: Span | None = None
    phase_deg: float = 0.0

    @property
    def phase(self) -> float:
        return math.radians(self.phase_deg)


@dataclass(frozen=True)
class Delay:
    tau: Span


@dataclass(frozen=True)
class LaserPulse:
    purpose: str  # "pump" | "readout"
    duration: float | None = None


@dataclass(frozen=True)
class CameraWindow:
    duration: float


Element = Union[MwPulse, Delay, LaserPulse, CameraWindow]


@dataclass(frozen=True)
class PulseSequence:
    elements: tuple

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if not self.elements:
            raise ValueError("a pulse sequence needs at least one element")
        names = self.symbols()
        if len(names) > 1:
            raise ValueError(f"multiple sweep variables: {sorted(names)}")

    def symbols(self) -> set[str]:
        spans = [el.tau if isinstance(el, Delay) else getattr(el, "duration", None)
                 for el in self.elements]
        return {s for s in spans if isinstance(s, str)}

    def resolve(self, t_pi: float | None = None, **values: float) -> "PulseSequence":
        """Substitute sweep variables and convert pi/pi-2 angles to durations (ns)."""
        out = []
        for el in self.elements:
            if isinstance(el, Delay):
                el = Delay(_bind(el.tau, values))
            elif isinstance(el, MwPulse):
                if el.angle is not None:
                    if t_pi is None:
                        raise ValueError("t_pi is required to resolve angle pulses")
                    dur = t_pi if el.angle == "pi" else t_pi / 2.0
                    el = MwPulse(None, dur, el.phase_deg)
                else:
                    el = MwPulse(None, _bind(el.duration, values), el.phase_deg)
            out.append(el)
        return PulseSequence(tuple(out))

    @property
    def is_resolved(self) -> bool:
        return not self.symbols() and not any(
            isinstance(el, MwPulse) and el.angle is not None for el in self.elements
        )

    def mw_pulses(self) -> list[MwPulse]:
        return [el for el in self.elements if isinstance(el, MwPulse)]

    def __str__(self):
        return render(self)


def _bind(span: Span, values: dict) -> Span:
    if isinstance(span, str):
        if span not in values:
            raise ValueError(f"no value given for sweep variable {span!r}")
        return float(values[span])
    return span


# ---------------------------------------------------------------- parser

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<number>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*(?:/2)?)
  | (?P<punct>[;()@])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SequenceSyntaxError(f"unknown token {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        else:
            for i, ch in enumerate(m.group()):
                if ch == "\n":
                    line += 1
                    line_start = pos + i + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    KEYWORDS = {"pump", "readout", "camera", "delay", "mw", "pi", "pi/2"}

    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        return SequenceSyntaxError(msg, tok.line, tok.col)

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text:
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        tok = self.tok
        self.i += 1
        return tok

    def sequence(self) -> PulseSequence:
        elements = [self.element()]
        while self.tok.text == ";":
            self.i += 1
            elements.append(self.element())
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")
        try:
            return PulseSequence(tuple(elements))
        except ValueError as exc:
            raise SequenceSyntaxError(str(exc), 1, 1) from None

    def element(self) -> Element:
        tok = self.tok
        if tok.kind != "name":
            raise self.error(f"expected a sequence element, found {tok.text or 'end of input'!r}")
        word = tok.text
        self.i += 1
        if word in ("pump", "readout"):
            duration = None
            if self.tok.text == "(":
                self.i += 1
                duration = self.duration()
                self.expect(")")
            return LaserPulse(word, duration)
        if word == "camera":
            self.expect("(")
            d = self.duration()
            self.expect(")")
            return CameraWindow(d)
        if word == "tau":
            return Delay("tau")
        if word == "delay":
            self.expect("(")
            span = self.span()
            self.expect(")")
            return Delay(span)
        if word in ("pi", "pi/2"):
            return MwPulse(word, None, self.phase())
        if word == "mw":
            self.expect("(")
            span = self.span()
            self.expect(")")
            return MwPulse(None, span, self.phase())
        raise self.error(f"unknown element {word!r}", tok)

    def phase(self) -> float:
        if self.tok.text != "@":
            return 0.0
        self.i += 1
        if self.tok.kind != "number":
            raise self.error("expected a phase in degrees after '@'")
        value = float(self.tok.text)
        self.i += 1
        return value

    def span(self) -> Span:
        if self.tok.kind == "name":
            if self.tok.text in self.KEYWORDS:
                raise self.error(f"{self.tok.text!r} cannot be a sweep variable")
            name = self.tok.text
            self.i += 1
            return name
        return self.duration()

    def duration(self) -> float:
        num = self.tok
        if num.kind != "number":
            raise self.error("expected a duration such as '44ns'")
        self.i += 1
        unit = self.tok
        if unit.kind != "name" or unit.text not in UNITS:
            raise self.error("expected a unit (ns, us, ms)")
        self.i += 1
        value = float(num.text) * UNITS[unit.text]
        if value <= 0:
            raise self.error("durations must be positive", num)
        return value


def parse(text: str) -> PulseSequence:
    """Parse sequence source into a :class:`PulseSequence`."""
    return _Parser(text).sequence()


# ---------------------------------------------------------------- renderer


def _fmt_number(x: float) -> str:
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def _fmt_duration(ns: float) -> str:
    for unit in ("ms", "us"):
        scaled = ns / UNITS[unit]
        if scaled >= 1 and float(repr(scaled)) * UNITS[unit] == ns and scaled == round(scaled, 6):
            return _fmt_number(scaled) + unit
    return _fmt_number(ns) + "ns"


def _fmt_span(span: Span) -> str:
    return span if isinstance(span, str) else _fmt_duration(span)


def _fmt_phase(deg: float) -> str:
    return "" if deg == 0 else "@" + _fmt_number(deg)


def render(seq: PulseSequence) -> str:
    parts = []
    for el in seq.elements:
        if isinstance(el, LaserPulse):
            parts.append(el.purpose if el.duration is None else f"{el.purpose}({_fmt_duration(el.duration)})")
        elif isinstance(el, CameraWindow):
            parts.append(f"camera({_fmt_duration(el.duration)})")
        elif isinstance(el, Delay):
            parts.append("tau" if el.tau == "tau" else f"delay({_fmt_span(el.tau)})")
        elif isinstance(el, MwPulse):
            head = el.angle if el.angle is not None else f"mw({_fmt_span(el.duration)})"
            parts.append(head + _fmt_phase(el.phase_deg))
        else:  # pragma: no cover
            raise TypeError(f"unknown element {el!r}")
    return "; ".join(parts)


# ---------------------------------------------------------------- builders


class SequenceKind(enum.Enum):
    RABI = "rabi"
    T1 = "t1"
    HAHN_ECHO = "echo"
    ODMR = "odmr"

    @classmethod
    def parse(cls, value) -> "SequenceKind":
        if isinstance(value, cls):
            return value
        aliases = {"hahnecho": "echo", "hahn_echo": "echo", "hahn": "echo"}
        v = str(value).lower()
        return cls(aliases.get(v, v))


@dataclass(frozen=True)
class HardwareProfile:
    tick: float = 3.3  # ns
    aom_delay: float = 130.0  # ns
    aom_rise: float = 35.0  # ns
    pump_duration: float = 350_000.0  # ns
    readout_duration: float = 10_000.0  # ns, modelling default
    mw_switch_delay: float = 0.0  # ns

    def __post_init__(self):
        if self.tick <= 0:
            raise ValueError("tick must be > 0")
        if min(self.aom_delay, self.aom_rise, self.mw_switch_delay) < 0:
            raise ValueError("delays must be >= 0")
        if self.pump_duration <= 0 or self.readout_duration <= 0:
            raise ValueError("laser durations must be > 0")


def build(kind, t_pi: float | None = None, tau: Span = "tau",
          hw: HardwareProfile | None = None) -> PulseSequence:
    """Canonical sequence for one experiment kind.

    ``t_pi`` is the calibrated pi-pulse in ns.  For Rabi the MW duration is
    the sweep variable itself and ``t_pi`` is unused.  For ODMR the MW pulse
    is a pi-pulse at the scanned frequency.
    """
    kind = SequenceKind.parse(kind)
    hw = hw or HardwareProfile()
    pump = LaserPulse("pump", hw.pump_duration)
    readout = LaserPulse("readout")
    if kind is SequenceKind.RABI:
        return PulseSequence((pump, MwPulse(None, tau), readout))
    if t_pi is None or not t_pi > 0:
        raise ValueError("t_pi must be > 0")
    if isinstance(tau, (int, float)) and tau < 0:
        raise ValueError("tau must be >= 0")
    pi = MwPulse(None, float(t_pi))
    half = MwPulse(None, float(t_pi) / 2.0)
    if kind is SequenceKind.T1:
        block = (pi, Delay(tau))
    elif kind is SequenceKind.HAHN_ECHO:
        block = (half, Delay(tau), pi, Delay(tau), half)
    else:
        block = (pi,)
    block = tuple(el for el in block if not (isinstance(el, Delay) and el.tau == 0))
    return PulseSequence((pump, *block, readout))


# ---------------------------------------------------------------- compiler

CHANNELS = ("MW", "LASER", "CAMERA")


def quantize(t: float, tick: float) -> int:
    """Nearest tick index, ties toward +infinity."""
    return math.floor(t / tick + 0.5)


@dataclass(frozen=True)
class TimingTable:
    tick: float
    channels: dict = field(default_factory=dict)  # name -> tuple of (start, end) ticks
    total_ticks: int = 0
    # requested optical (start, end) in ns for each LASER interval
    optical_requests: tuple = ()

    def intervals(self, channel: str) -> tuple:
        return self.channels.get(channel, ())

    def durations_ns(self, channel: str) -> list[float]:
        return [(b - a) * self.tick for a, b in self.intervals(channel)]

    def to_text(self) -> str:
        lines = [f"# tick_ns {self.tick!r}", f"# total_ticks {self.total_ticks}",
                 "channel,start_tick,end_tick,start_ns,end_ns"]
        for ch in CHANNELS:
            for a, b in self.intervals(ch):
                lines.append(f"{ch},{a},{b},{a * self.tick:.2f},{b * self.tick:.2f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TimingTable":
        tick, total = None, 0
        chans: dict[str, list] = {}
        for line in text.splitlines():
            if line.startswith("# tick_ns"):
                tick = float(line.split()[2])
            elif line.startswith("# total_ticks"):
                total = int(line.split()[2])
            elif line and not line.startswith(("#", "channel")):
                ch, a, b, *_ = line.split(",")
                chans.setdefault(ch, []).append((int(a), int(b)))
        if tick is None:
            raise ValueError("timing table has no tick header")
        return cls(tick, {k: tuple(v) for k, v in chans.items()}, total)


def compile(seq: PulseSequence, hw: HardwareProfile | None = None,
            offset: float = 0.0) -> TimingTable:
    """Place a resolved sequence on the tick grid.

    Each element starts on the tick nearest its requested time (elements run
    back to back from ``offset`` ns), and its duration is rounded on its own,
    so a 44 ns pulse is always 13 ticks at 3.3 ns.  A MW pulse that would
    overlap the previous one by a rounding tick is pushed back by that tick.
    LASER commands are issued ``aom_delay`` early so light arrives on
    schedule, and held ``aom_rise`` longer so the whole requested interval is
    illuminated.  A readout pulse also opens the camera for its optical window.
    """
    hw = hw or HardwareProfile()
    if not seq.is_resolved:
        raise CompileError("sequence has unresolved sweep variables or angle pulses")

    def ticks(ns):
        return quantize(ns, hw.tick)

    aom_rise = ticks(hw.aom_rise)
    raw: dict[str, list] = {ch: [] for ch in CHANNELS}
    optical = []
    t = float(offset)
    end_tick = ticks(t)
    for el in seq.elements:
        start = ticks(t)
        if isinstance(el, LaserPulse):
            dur = el.duration
            if dur is None:
                dur = hw.pump_duration if el.purpose == "pump" else hw.readout_duration
            if t < hw.aom_delay:
                raise CompileError(
                    f"laser pulse at {t:g} ns cannot absorb the {hw.aom_delay:g} ns AOM delay"
                )
            n = ticks(dur)
            cmd = ticks(t - hw.aom_delay)
            raw["LASER"].append((cmd, cmd + n + aom_rise))
            optical.append((t, t + dur))
            if el.purpose == "readout":
                raw["CAMERA"].append((start, start + n))
        elif isinstance(el, MwPulse):
            dur = el.duration
            if dur <= 0:
                raise CompileError("MW pulses need a positive duration")
            if t < hw.mw_switch_delay:
                raise CompileError("MW pulse cannot absorb the switch delay")
            n = max(ticks(dur), 1)
            a = ticks(t - hw.mw_switch_delay)
            if raw["MW"] and a < raw["MW"][-1][1]:
                a = raw["MW"][-1][1]
            raw["MW"].append((a, a + n))
        elif isinstance(el, Delay):
            dur = el.tau
            if dur < 0:
                raise CompileError("negative delay")
            n = ticks(dur)
        elif isinstance(el, CameraWindow):
            dur = el.duration
            n = ticks(dur)
            raw["CAMERA"].append((start, start + n))
        else:  # pragma: no cover
            raise TypeError(f"unknown element {el!r}")
        t += dur
        end_tick = max(end_tick, start + n, ticks(t))

    channels = {}
    for ch, ivs in raw.items():
        ivs.sort()
        for prev, cur in zip(ivs, ivs[1:]):
            if cur[0] < prev[1]:
                raise CompileError(f"overlapping {ch} intervals near {cur[0] * hw.tick:.1f} ns")
        channels[ch] = tuple(ivs)
        if ivs:
            end_tick = max(end_tick, ivs[-1][1])
    return TimingTable(hw.tick, channels, end_tick, tuple(optical))


def suppress(seq: PulseSequence, mw: bool = True, laser: bool = False) -> PulseSequence:
    """Same timing with MW (and optionally laser) pulses replaced by idle time.

    Used to build the reference (no MW) and background (no MW, no laser)
    variants of a measurement block.  With the laser suppressed the camera
    still exposes during the readout window.
    """
    out = []
    for el in seq.elements:
        if mw and isinstance(el, MwPulse):
            if el.angle is not None:
                raise ValueError("resolve angle pulses before suppressing them")
            out.append(Delay(el.duration))
        elif laser and isinstance(el, LaserPulse):
            if el.duration is None:
                raise ValueError("laser pulses need explicit durations to be suppressed")
            out.append(CameraWindow(el.duration) if el.purpose == "readout" else Delay(el.duration))
        else:
            out.append(el)
    return PulseSequence(tuple(out))


def block_variants(seq: PulseSequence, hw: HardwareProfile | None = None,
                   offset: float = 0.0) -> dict[str, TimingTable]:
    """Compile the signal / reference / background variants of ``seq``."""
    hw = hw or HardwareProfile()
    seq = _fill_laser(seq, hw)
    return {
        "signal": compile(seq, hw, offset),
        "reference": compile(suppress(seq), hw, offset),
        "background": compile(suppress(seq, laser=True), hw, offset),
    }


def _fill_laser(seq: PulseSequence, hw: HardwareProfile) -> PulseSequence:
    out = []
    for el in seq.elements:
        if isinstance(el, LaserPulse) and el.duration is None:
            dur = hw.pump_duration if el.purpose == "pump" else hw.readout_duration
            el = replace(el, duration=dur)
        out.append(el)
    return PulseSequence(tuple(out))
