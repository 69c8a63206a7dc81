"""Conveyor handshake, cycle-time model, and line simulation.

The station talks to its neighbors over a two-wire handshake per side:
the upstream machine raises BoardAvailable when it has a board to push,
and we raise MachineReady toward it when willing to receive; the same
pair, with roles swapped, runs on the downstream side. ``step`` is the
entire protocol: a pure function from (state, event) to (state, emitted
signal changes), so every reachable behavior can be enumerated and
property-tested without hardware.

Timing comes from an affine model of cycle time against board area,
fitted to bench measurements; the simulator charges each stage from the
model so logged cycle totals are exactly reproducible.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .inspector import BoardMeta, InspectionEngine, InspectionRecord


class LineError(ValueError):
    pass


# -- handshake state machine -------------------------------------------------


class StationState(enum.Enum):
    IDLE = "Idle"
    REQUESTING_BOARD = "RequestingBoard"
    TRANSFER_IN = "TransferIn"
    INSPECTING = "Inspecting"
    HOLDING_FOR_DOWNSTREAM = "HoldingForDownstream"
    TRANSFER_OUT = "TransferOut"
    FAULT = "Fault"


class EventKind(enum.Enum):
    UPSTREAM_BOARD_AVAILABLE = "UpstreamBoardAvailable"  # level on upstream BA
    DOWNSTREAM_MACHINE_READY = "DownstreamMachineReady"  # level on downstream MR
    TRANSFER_DONE = "TransferDone"
    INSPECTION_DONE = "InspectionDone"
    FAULT_SIGNAL = "FaultSignal"
    RESET = "Reset"


@dataclass(frozen=True)
class LineEvent:
    kind: EventKind
    level: Optional[bool] = None  # required for the two level events
    serial: str = ""              # board id riding on a BA rising edge
    reason: str = ""              # fault description

    def __post_init__(self):
        needs_level = self.kind in (EventKind.UPSTREAM_BOARD_AVAILABLE,
                                    EventKind.DOWNSTREAM_MACHINE_READY)
        if needs_level and self.level is None:
            raise LineError(f"{self.kind.value} event needs a level")


@dataclass(frozen=True)
class SmemaSignal:
    """One output line change. channel UP faces the feeding machine,
    channel DOWN faces the receiving machine."""

    channel: str  # "UP" | "DOWN"
    line: str     # "MR" | "BA"
    level: bool


def format_signal(epoch_ms: int, sig: SmemaSignal) -> str:
    return f"{epoch_ms} {sig.channel} {sig.line} {int(sig.level)}"


def parse_signal(text: str) -> tuple[int, SmemaSignal]:
    parts = text.split()
    if (len(parts) != 4 or not parts[0].lstrip("-").isdigit()
            or parts[1] not in ("UP", "DOWN")
            or parts[2] not in ("MR", "BA") or parts[3] not in ("0", "1")):
        raise LineError(f"bad signal line: {text!r}")
    return int(parts[0]), SmemaSignal(channel=parts[1], line=parts[2],
                                      level=parts[3] == "1")


@dataclass(frozen=True)
class LineState:
    """Full station snapshot: FSM state, latched input levels, and the
    two output lines we drive. A fresh station is Idle with MachineReady
    asserted upstream, i.e. armed to receive."""

    state: StationState = StationState.IDLE
    board_serial: str = ""
    upstream_ba: bool = False
    downstream_mr: bool = False
    mr_up_out: bool = True
    ba_down_out: bool = False
    fault_reason: str = ""


def _drive(state: LineState, signals: list[SmemaSignal],
           mr_up: Optional[bool] = None,
           ba_down: Optional[bool] = None) -> LineState:
    # emit only on actual change so the log is edge-triggered
    if mr_up is not None and mr_up != state.mr_up_out:
        signals.append(SmemaSignal("UP", "MR", mr_up))
        state = replace(state, mr_up_out=mr_up)
    if ba_down is not None and ba_down != state.ba_down_out:
        signals.append(SmemaSignal("DOWN", "BA", ba_down))
        state = replace(state, ba_down_out=ba_down)
    return state


def step(state: LineState, event: LineEvent
         ) -> tuple[LineState, list[SmemaSignal]]:
    """Advance the handshake one event. Total over every (state, event)
    pair: anything not listed below latches input levels and otherwise
    does nothing, so an unexpected edge can never crash the station."""
    signals: list[SmemaSignal] = []
    s = state.state

    if event.kind is EventKind.FAULT_SIGNAL:
        nxt = replace(state, state=StationState.FAULT,
                      fault_reason=event.reason or "external fault")
        return _drive(nxt, signals, mr_up=False, ba_down=False), signals

    if event.kind is EventKind.RESET:
        # manual recovery: any trapped board has been removed by hand
        nxt = replace(state, state=StationState.IDLE, board_serial="",
                      fault_reason="")
        return _drive(nxt, signals, mr_up=True, ba_down=False), signals

    if s is StationState.FAULT:
        # latched until reset; still track neighbor levels
        return _latch_levels(state, event), signals

    if event.kind is EventKind.UPSTREAM_BOARD_AVAILABLE:
        rising = event.level and not state.upstream_ba
        state = replace(state, upstream_ba=bool(event.level))
        if rising and s in (StationState.IDLE, StationState.REQUESTING_BOARD):
            nxt = replace(state, state=StationState.TRANSFER_IN,
                          board_serial=event.serial or "unknown")
            return nxt, signals
        if rising and s is StationState.TRANSFER_IN:
            # a second board offered mid-transfer means the upstream
            # machine lost track of the handoff; stop before they collide
            nxt = replace(state, state=StationState.FAULT,
                          fault_reason="board offered during active transfer")
            return _drive(nxt, signals, mr_up=False, ba_down=False), signals
        return state, signals

    if event.kind is EventKind.DOWNSTREAM_MACHINE_READY:
        rising = event.level and not state.downstream_mr
        state = replace(state, downstream_mr=bool(event.level))
        if rising and s is StationState.HOLDING_FOR_DOWNSTREAM:
            nxt = replace(state, state=StationState.TRANSFER_OUT)
            return _drive(nxt, signals, ba_down=True), signals
        return state, signals

    if event.kind is EventKind.TRANSFER_DONE:
        if s is StationState.TRANSFER_IN:
            nxt = replace(state, state=StationState.INSPECTING)
            return _drive(nxt, signals, mr_up=False), signals
        if s is StationState.TRANSFER_OUT:
            nxt = replace(state, state=StationState.REQUESTING_BOARD,
                          board_serial="")
            return _drive(nxt, signals, mr_up=True, ba_down=False), signals
        return state, signals

    if event.kind is EventKind.INSPECTION_DONE:
        if s is StationState.INSPECTING:
            if state.downstream_mr:
                nxt = replace(state, state=StationState.TRANSFER_OUT)
                return _drive(nxt, signals, ba_down=True), signals
            nxt = replace(state, state=StationState.HOLDING_FOR_DOWNSTREAM)
            return nxt, signals
        return state, signals

    return state, signals


def _latch_levels(state: LineState, event: LineEvent) -> LineState:
    if event.kind is EventKind.UPSTREAM_BOARD_AVAILABLE:
        return replace(state, upstream_ba=bool(event.level))
    if event.kind is EventKind.DOWNSTREAM_MACHINE_READY:
        return replace(state, downstream_mr=bool(event.level))
    return state


# -- cycle-time model --------------------------------------------------------


class LineMode(enum.Enum):
    INLINE = "inline"
    STANDALONE = "standalone"


# bench points: (board area in^2, observed end-to-end cycle seconds)
_CYCLE_POINTS = ((64.0, 20.0), (140.0, 25.0), (400.0, 40.0))
_TRANSFER_STAGE_S = 4.0
_STANDALONE_HANDLING_S = 30.0


def fit_cycle_model(points: Sequence[tuple[float, float]] = _CYCLE_POINTS
                    ) -> tuple[float, float]:
    """Least-squares affine fit t = intercept + slope * area."""
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    slope, intercept = np.polyfit(xs, ys, 1)
    return float(intercept), float(slope)


_CYCLE_INTERCEPT_S, _CYCLE_SLOPE_S = fit_cycle_model()


@dataclass(frozen=True)
class CycleBreakdown:
    transfer_in_s: float
    capture_s: float
    inference_s: float
    transfer_out_s: float
    handling_s: float = 0.0

    @property
    def total_s(self) -> float:
        return (self.transfer_in_s + self.capture_s + self.inference_s
                + self.transfer_out_s + self.handling_s)

    def to_dict(self) -> dict:
        return {
            "transfer_in_s": self.transfer_in_s,
            "capture_s": self.capture_s,
            "inference_s": self.inference_s,
            "transfer_out_s": self.transfer_out_s,
            "handling_s": self.handling_s,
            "total_s": self.total_s,
        }


def cycle_breakdown(width_in: float, height_in: float,
                    mode: LineMode = LineMode.INLINE) -> CycleBreakdown:
    """Stage-level cycle budget for a board of the given size.

    The area-independent part of the model covers the two conveyor
    transfers plus image capture; the area term is inference. Standalone
    operation adds fixed manual load/unload handling on top.
    """
    if width_in <= 0 or height_in <= 0:
        raise LineError("board dimensions must be positive")
    area = width_in * height_in
    capture = _CYCLE_INTERCEPT_S - 2 * _TRANSFER_STAGE_S
    return CycleBreakdown(
        transfer_in_s=_TRANSFER_STAGE_S,
        capture_s=capture,
        inference_s=_CYCLE_SLOPE_S * area,
        transfer_out_s=_TRANSFER_STAGE_S,
        handling_s=_STANDALONE_HANDLING_S if mode is LineMode.STANDALONE else 0.0,
    )


def cycle_time_s(width_in: float, height_in: float,
                 mode: LineMode = LineMode.INLINE) -> float:
    return cycle_breakdown(width_in, height_in, mode).total_s


# -- line simulation ---------------------------------------------------------


@dataclass(frozen=True)
class LineBoard:
    serial: str
    image: np.ndarray
    work_order: str = ""


@dataclass(frozen=True)
class LineRunReport:
    mode: LineMode
    records: tuple[InspectionRecord, ...]
    cycles: tuple[CycleBreakdown, ...]
    signal_log: tuple[str, ...]
    faults: tuple[str, ...]
    final_state: LineState
    sim_duration_s: float

    @property
    def boards_per_hour(self) -> float:
        if self.sim_duration_s <= 0:
            return 0.0
        return len(self.records) * 3600.0 / self.sim_duration_s

    def summary(self) -> dict:
        return {
            "mode": self.mode.value,
            "boards": len(self.records),
            "defective_boards": sum(1 for r in self.records if r.defective),
            "needs_review": sum(1 for r in self.records
                                if r.status == "needs_review"),
            "faults": list(self.faults),
            "sim_duration_s": self.sim_duration_s,
            "boards_per_hour": self.boards_per_hour,
            "final_state": self.final_state.state.value,
        }


def run_line(engine: InspectionEngine, boards: Sequence[LineBoard],
             width_in: float, height_in: float,
             mode: LineMode = LineMode.INLINE, line_id: str = "line-1",
             on_record: Optional[Callable[[InspectionRecord], None]] = None,
             ) -> LineRunReport:
    """Feed boards through the station under a simulated clock.

    Every stage is charged from the cycle model, so the simulated
    duration matches ``cycle_time_s`` per board exactly. Boards the
    engine cannot register come back as needs-review records and the
    line keeps moving; only a handshake violation trips a fault.
    """
    budget = cycle_breakdown(width_in, height_in, mode)
    state = LineState()
    log: list[str] = []
    records: list[InspectionRecord] = []
    cycles: list[CycleBreakdown] = []
    faults: list[str] = []
    clock_ms = 0

    def fire(event: LineEvent) -> None:
        nonlocal state
        state, sigs = step(state, event)
        for sig in sigs:
            log.append(format_signal(clock_ms, sig))

    def advance(seconds: float) -> None:
        nonlocal clock_ms
        clock_ms += int(round(seconds * 1000))

    # downstream neighbor starts ready to accept
    fire(LineEvent(EventKind.DOWNSTREAM_MACHINE_READY, level=True))

    for board in boards:
        if mode is LineMode.STANDALONE:
            advance(_STANDALONE_HANDLING_S / 2)
        fire(LineEvent(EventKind.UPSTREAM_BOARD_AVAILABLE, level=True,
                       serial=board.serial))
        if state.state is StationState.FAULT:
            faults.append(f"{board.serial}: {state.fault_reason}")
            fire(LineEvent(EventKind.RESET))
            continue
        advance(budget.transfer_in_s)
        fire(LineEvent(EventKind.UPSTREAM_BOARD_AVAILABLE, level=False))
        fire(LineEvent(EventKind.TRANSFER_DONE))

        advance(budget.capture_s + budget.inference_s)
        meta = BoardMeta(serial=board.serial, work_order=board.work_order,
                         line_id=line_id)
        try:
            record = engine.inspect_board(board.image, meta)
        except Exception as exc:  # board leaves the zone either way
            faults.append(f"{board.serial}: {exc}")
            fire(LineEvent(EventKind.FAULT_SIGNAL, reason=str(exc)))
            fire(LineEvent(EventKind.RESET))
            continue
        records.append(record)
        cycles.append(budget)
        if on_record is not None:
            on_record(record)
        fire(LineEvent(EventKind.INSPECTION_DONE))

        advance(budget.transfer_out_s)
        fire(LineEvent(EventKind.TRANSFER_DONE))
        if mode is LineMode.STANDALONE:
            advance(_STANDALONE_HANDLING_S / 2)

    return LineRunReport(
        mode=mode, records=tuple(records), cycles=tuple(cycles),
        signal_log=tuple(log), faults=tuple(faults), final_state=state,
        sim_duration_s=clock_ms / 1000.0)
