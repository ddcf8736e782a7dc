"""Discrete-time heat-exchanger / compressor stage.

First-order lumped thermal model with explicit Euler updates:

    T <- T + dt * (q(t) - k * u * (T - T_cool)) / C

Heat input q(t) is q_run while the compressor runs, decays exponentially
toward q_stop while it is stopping, and equals q_stop once stopped.
Scripted abnormal spikes add extra heat and force the alarm sensors.
Valve commands are clamped to [0, 1] and take effect one tick after they
are issued.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .terms import Struct

RUNNING = "running"
STOPPING = "stopping"
STOPPED = "stopped"

# a stopping transient is considered complete after this many decay constants
_STOP_SETTLE_TAUS = 5.0


class PlantError(ValueError):
    pass


@dataclass(frozen=True)
class PlantParams:
    heat_capacity: float = 10.0          # energy / degC
    cooling_gain: float = 0.5            # 1 / (flow * s)
    coolant_temp: float = 25.0           # degC
    heat_input_running: float = 8.0      # energy / s
    heat_input_stopped: float = 1.0      # energy / s
    stop_decay_tau: float = 20.0         # s
    tick_dt: float = 0.1                 # s
    T_abnormal: float = 60.0             # alarm threshold, degC
    T_setpoint: float = 45.0             # degC

    def __post_init__(self):
        if self.heat_capacity <= 0 or self.cooling_gain <= 0 or self.tick_dt <= 0:
            raise PlantError("C, k, and tick_dt must be positive")
        if not (self.heat_input_running > self.heat_input_stopped >= 0):
            raise PlantError("require q_run > q_stop >= 0")
        if not (self.T_abnormal > self.T_setpoint > self.coolant_temp):
            raise PlantError("require T_abnormal > T_setpoint > T_cool")


@dataclass
class Injection:
    kind: str                     # compressor_stop | compressor_start | abnormal_spike
    at: float                     # s
    duration: float = 0.0         # abnormal_spike only
    magnitude: float = 0.0        # extra heat input during a spike, energy / s


@dataclass
class PlantState:
    T: float
    valve_flow: float = 0.8
    compressor: str = RUNNING
    stop_elapsed: float = 0.0
    switch: str = "open"
    cond_op: str = "normal"
    clock: float = 0.0
    pending_valve: Optional[float] = None
    spike_until: float = -1.0
    spike_magnitude: float = 0.0
    pending_injections: list = field(default_factory=list)
    faults: list = field(default_factory=list)


def make_state(params: PlantParams, T0: Optional[float] = None, valve0: float = 0.8) -> PlantState:
    return PlantState(T=params.T_setpoint if T0 is None else T0, valve_flow=valve0)


def heat_input(state: PlantState, params: PlantParams) -> float:
    if state.compressor == RUNNING:
        q = params.heat_input_running
    elif state.compressor == STOPPING:
        q = params.heat_input_stopped + (
            params.heat_input_running - params.heat_input_stopped
        ) * math.exp(-state.stop_elapsed / params.stop_decay_tau)
    else:
        q = params.heat_input_stopped
    if spike_active(state):
        q += state.spike_magnitude
    return q


def spike_active(state: PlantState) -> bool:
    return state.clock < state.spike_until


def inject(state: PlantState, event: Injection) -> PlantState:
    """Schedule a scripted event; applied when the clock reaches its time."""
    if event.kind not in ("compressor_stop", "compressor_start", "abnormal_spike"):
        raise PlantError(f"unknown scripted event {event.kind!r}")
    if event.at < state.clock:
        raise PlantError(f"event {event.kind} at {event.at} is in the past (clock {state.clock})")
    state.pending_injections.append(event)
    state.pending_injections.sort(key=lambda e: e.at)
    return state


def apply_due_injections(state: PlantState, params: PlantParams) -> list[Injection]:
    """Apply scripted events whose time has come; returns those applied."""
    applied = []
    eps = params.tick_dt * 1e-6
    while state.pending_injections and state.pending_injections[0].at <= state.clock + eps:
        ev = state.pending_injections.pop(0)
        applied.append(ev)
        if ev.kind == "compressor_stop":
            if state.compressor == RUNNING:
                state.compressor = STOPPING
                state.stop_elapsed = 0.0
            else:
                state.faults.append(f"stop ignored at {state.clock}: compressor {state.compressor}")
        elif ev.kind == "compressor_start":
            if state.compressor == RUNNING:
                state.faults.append(f"start ignored at {state.clock}: already running")
            else:
                state.compressor = RUNNING
                state.stop_elapsed = 0.0
        elif ev.kind == "abnormal_spike":
            state.spike_until = state.clock + ev.duration
            state.spike_magnitude = ev.magnitude
            state.cond_op = "abnormal"
    return applied


def actuate_valve(state: PlantState, commanded_flow: float) -> PlantState:
    """Clamp and latch a valve command; it is applied from the next step."""
    if not math.isfinite(commanded_flow):
        state.faults.append(f"non-finite valve command at {state.clock}")
        return state
    state.pending_valve = min(1.0, max(0.0, float(commanded_flow)))
    return state


def step(state: PlantState, params: PlantParams) -> PlantState:
    """Advance the thermal model by one tick."""
    if state.pending_valve is not None:
        state.valve_flow = state.pending_valve
        state.pending_valve = None

    q = heat_input(state, params)
    dT = params.tick_dt * (
        q - params.cooling_gain * state.valve_flow * (state.T - params.coolant_temp)
    ) / params.heat_capacity
    state.T += dT
    state.clock = round(state.clock + params.tick_dt, 9)

    if state.compressor == STOPPING:
        state.stop_elapsed += params.tick_dt
        if state.stop_elapsed >= _STOP_SETTLE_TAUS * params.stop_decay_tau:
            state.compressor = STOPPED
            state.stop_elapsed = 0.0

    if not spike_active(state) and state.cond_op == "abnormal" and state.T < params.T_abnormal:
        state.cond_op = "normal"
        state.spike_magnitude = 0.0
    return state


def alarm_active(state: PlantState, params: PlantParams) -> bool:
    return state.T >= params.T_abnormal or spike_active(state)


class SensorReader:
    """Turns plant state changes into belief percept deltas.

    The compressor-stopped signal asserts as soon as the compressor leaves
    the running state (the trip itself, not the end of the thermal
    transient), which anchors latency measurements at the stop time.
    """

    def __init__(self):
        self._last: Optional[dict] = None

    @staticmethod
    def _beliefs(state: PlantState, params: PlantParams) -> dict[Struct, None]:
        out: dict[Struct, None] = {}
        if state.compressor != RUNNING:
            out[Struct("compressor_stopped")] = None
        out[Struct("switch", (state.switch,))] = None
        out[Struct("cond_op", (state.cond_op,))] = None
        if alarm_active(state, params):
            out[Struct("abnormal_temperature")] = None
        return out

    def read(self, state: PlantState, params: PlantParams) -> list[tuple[str, Struct]]:
        current = self._beliefs(state, params)
        if self._last is None:
            delta = [("+", b) for b in current]
        else:
            delta = [("-", b) for b in self._last if b not in current]
            delta += [("+", b) for b in current if b not in self._last]
        self._last = current
        return delta


def snapshot(state: PlantState, params: PlantParams, settle_band: float = 1.0) -> dict:
    """Variable snapshot for the polled SFC baseline."""
    return {
        "compressor_stopped": state.compressor != RUNNING,
        "switch_on": state.switch == "open",
        "under_operation": True,
        "abnormal_temperature": alarm_active(state, params),
        "temperature": state.T,
        "temperature_settled": abs(state.T - params.T_setpoint) <= settle_band,
    }
