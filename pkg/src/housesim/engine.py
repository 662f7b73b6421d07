"""Deterministic discrete-event executor for tasks and scenarios.

Scenarios are delay chains over scheduled tasks, anchored at a first-fire
datetime, optionally repeating at a fixed rate, and nestable. The engine
expands launches into concrete events on a virtual millisecond clock and
applies them to the house in a single, fully reproducible total order.

Event ordering: events sort by fire time, then standalone tasks before
scenario events, then definition order, instance index, and entry path.
The global sequence number enumerates that order.
"""

from __future__ import annotations

import heapq
import itertools
import threading
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable, Iterator, Mapping, Optional, Sequence

from . import model
from .errors import (
    ClockRegression,
    CycleDetected,
    HouseSimError,
    InvalidValue,
    NegativeDelay,
    UnknownScenario,
    UnknownTarget,
)
from .timeutil import to_virtual_ms

TARGET_TASK = "task"
TARGET_SCENARIO = "scenario"


@dataclass(frozen=True)
class TaskAction:
    """One concrete thing to do: set a device's sensor to a value."""

    device_id: str
    sensor_id: str
    value: model.SensorValue


@dataclass
class ScheduledTask:
    id: str
    name: str
    action: TaskAction
    absolute_time: Optional[datetime] = None  # None: only usable in scenarios


@dataclass(frozen=True)
class ScenarioEntry:
    delay_ms: int
    target_kind: str  # TARGET_TASK | TARGET_SCENARIO
    target_id: str


@dataclass
class Scenario:
    id: str
    name: str
    first_time: datetime
    repeat_ms: Optional[int] = None
    enabled: bool = True
    entries: list[ScenarioEntry] = field(default_factory=list)


@dataclass(frozen=True)
class Provenance:
    """Where an event came from: a scenario instance, a task, or outside."""

    source: str  # "scenario" | "task" | "remote" | "manual"
    source_id: str
    instance: int = 0
    entry_path: tuple[int, ...] = ()

    def text(self) -> str:
        if self.source == "scenario":
            path = "/".join(str(i) for i in self.entry_path)
            return f"scenario:{self.source_id}:{self.instance}:{path}"
        return f"{self.source}:{self.source_id}"


@dataclass(frozen=True)
class SimEvent:
    fire_time: int  # virtual ms
    seq: int  # global sequence number; refines fire_time order
    object_id: str
    sensor_id: str
    value_text: str
    provenance: Provenance
    action: Optional[TaskAction] = None  # set for scheduler-sourced events


OUTCOME_APPLIED = "applied"
OUTCOME_SUPPRESSED = "suppressed"


@dataclass(frozen=True)
class LoggedEvent:
    event: SimEvent
    outcome: str  # applied | suppressed | rejected:<ErrorName>

    @property
    def applied(self) -> bool:
        return self.outcome == OUTCOME_APPLIED


# -- definition-time validation ----------------------------------------------


def validate_action(house: model.House, action: TaskAction) -> None:
    """Raise unless the action resolves and its value fits the format."""
    fmt = house.sensor_format(action.device_id, action.sensor_id)
    problem = model.validate_value(fmt, action.value)
    if problem is not None:
        raise InvalidValue(f"sensor {action.sensor_id}: {problem}")


def find_inclusion_cycle(
    scenarios: Mapping[str, Scenario], start_id: str
) -> Optional[list[str]]:
    """DFS over scenario-inclusion edges; returns a cycle path if one exists."""
    path: list[str] = []
    on_path: set[str] = set()
    done: set[str] = set()

    def visit(sid: str) -> Optional[list[str]]:
        if sid in on_path:
            return path[path.index(sid):] + [sid]
        if sid in done:
            return None
        on_path.add(sid)
        path.append(sid)
        scn = scenarios.get(sid)
        if scn is not None:
            for entry in scn.entries:
                if entry.target_kind == TARGET_SCENARIO:
                    cycle = visit(entry.target_id)
                    if cycle is not None:
                        return cycle
        on_path.discard(sid)
        path.pop()
        done.add(sid)
        return None

    return visit(start_id)


def _expand_chain(
    entries: Sequence[ScenarioEntry],
    start: int,
    tasks: Mapping[str, ScheduledTask],
    scenarios: Mapping[str, Scenario],
    prefix: tuple[int, ...] = (),
) -> Iterator[tuple[int, tuple[int, ...], TaskAction]]:
    """Yield (fire_time, entry_path, action) for one chain launched at start.

    The cursor advances by each entry's delay; a task entry fires at the
    cursor; a sub-scenario entry starts its own cursor there while the
    parent's cursor continues unchanged (launch is instantaneous). A nested
    scenario's own first_time/repeat/enabled are ignored: only its chain is
    inlined, under the launching scenario's identity.
    """
    cursor = start
    for i, entry in enumerate(entries):
        cursor += entry.delay_ms
        if entry.target_kind == TARGET_TASK:
            yield cursor, prefix + (i,), tasks[entry.target_id].action
        else:
            sub = scenarios[entry.target_id]
            yield from _expand_chain(
                sub.entries, cursor, tasks, scenarios, prefix + (i,)
            )


# Sort-key ranks: standalone tasks come before scenario events at equal times.
_RANK_TASK = 0
_RANK_SCENARIO = 1


def compile_timeline(
    tasks: Sequence[ScheduledTask],
    scenarios: Sequence[Scenario],
    epoch: datetime,
    horizon_ms: int,
) -> list[SimEvent]:
    """Statically expand every event with fire_time <= horizon.

    Pure function; assumes definitions are already valid and that no
    runtime toggles or remote commands occur. Scenarios whose first fire
    maps before the run epoch never launch; scenarios defined disabled
    contribute nothing.
    """
    tasks_by_id = {t.id: t for t in tasks}
    scenarios_by_id = {s.id: s for s in scenarios}
    items: list[tuple[tuple, TaskAction, Provenance]] = []

    for di, task in enumerate(tasks):
        if task.absolute_time is None:
            continue
        vt = to_virtual_ms(task.absolute_time, epoch)
        if 0 <= vt <= horizon_ms:
            key = (vt, _RANK_TASK, di, 0, ())
            items.append((key, task.action, Provenance("task", task.id)))

    for di, scn in enumerate(scenarios):
        if not scn.enabled:
            continue
        first = to_virtual_ms(scn.first_time, epoch)
        if first < 0:
            continue
        for k in itertools.count():
            launch = first + k * (scn.repeat_ms or 0)
            if launch > horizon_ms:
                break
            for fire, entry_path, action in _expand_chain(
                scn.entries, launch, tasks_by_id, scenarios_by_id
            ):
                if fire <= horizon_ms:
                    key = (fire, _RANK_SCENARIO, di, k, entry_path)
                    prov = Provenance("scenario", scn.id, k, entry_path)
                    items.append((key, action, prov))
            if not scn.repeat_ms:
                break

    items.sort(key=lambda item: item[0])
    return [
        SimEvent(
            fire_time=key[0],
            seq=seq,
            object_id=action.device_id,
            sensor_id=action.sensor_id,
            value_text=model.value_to_text(action.value),
            provenance=prov,
            action=action,
        )
        for seq, (key, action, prov) in enumerate(items)
    ]


# -- runtime ------------------------------------------------------------------


@dataclass
class _ScenarioRuntime:
    def_index: int
    next_k: int = 0
    next_launch: Optional[int] = None  # virtual ms; None: exhausted / pre-epoch
    toggles: list[tuple[int, bool]] = field(default_factory=list)


class Engine:
    """Single-writer executor over a house, a task list, and scenarios.

    All mutating and reading entry points serialize through one lock, so
    the engine can be driven from a service thread while observers attach
    stream listeners. Listeners receive every logged event.
    """

    def __init__(self, house: model.House, epoch: datetime):
        self.house = house
        self.epoch = epoch
        self.tasks: dict[str, ScheduledTask] = {}
        self.scenarios: dict[str, Scenario] = {}
        self.log: list[LoggedEvent] = []
        self.clock: int = 0
        self._lock = threading.RLock()
        self._seq = 0
        self._push_index = 0
        self._manual_count = 0
        self._heap: list[tuple[tuple, int, TaskAction, Provenance]] = []
        self._runtimes: dict[str, _ScenarioRuntime] = {}
        self._task_index: dict[str, int] = {}
        self._listeners: list[Callable[[LoggedEvent], None]] = []

    # -- wiring -----------------------------------------------------------

    @property
    def now(self) -> int:
        return self.clock

    def add_listener(self, fn: Callable[[LoggedEvent], None]) -> None:
        self._listeners.append(fn)

    def _notify(self, logged: LoggedEvent) -> None:
        for fn in self._listeners:
            fn(logged)

    # -- definitions --------------------------------------------------------

    def define_task(
        self,
        name: str,
        action: TaskAction,
        absolute_time: Optional[datetime] = None,
        task_id: Optional[str] = None,
    ) -> str:
        """Register a task; with an absolute time it also fires standalone."""
        with self._lock:
            validate_action(self.house, action)
            if task_id is None:
                task_id = f"task-{len(self.tasks) + 1}"
            task = ScheduledTask(task_id, name, action, absolute_time)
            self._task_index[task_id] = len(self.tasks)
            self.tasks[task_id] = task
            if absolute_time is not None:
                vt = to_virtual_ms(absolute_time, self.epoch)
                if vt >= self.clock:
                    key = (vt, _RANK_TASK, self._task_index[task_id], 0, ())
                    self._push(key, action, Provenance("task", task_id))
            return task_id

    def define_scenario(
        self,
        name: str,
        first_time: datetime,
        repeat_ms: Optional[int] = None,
        entries: Sequence[ScenarioEntry] = (),
        enabled: bool = True,
        scenario_id: Optional[str] = None,
    ) -> str:
        """Register (or redefine) a scenario; enabled by default.

        Redefinition with an existing id supports interactive editing; it
        resets that scenario's launch state.
        """
        with self._lock:
            if repeat_ms is not None and repeat_ms <= 0:
                raise ValueError("repeat_ms must be positive")
            entries = list(entries)
            for entry in entries:
                if entry.delay_ms < 0:
                    raise NegativeDelay(
                        f"entry delay {entry.delay_ms} in scenario {name!r}"
                    )
                if entry.target_kind == TARGET_TASK:
                    if entry.target_id not in self.tasks:
                        raise UnknownTarget(f"task {entry.target_id}")
                elif entry.target_kind == TARGET_SCENARIO:
                    if (
                        entry.target_id not in self.scenarios
                        and entry.target_id != scenario_id
                    ):
                        raise UnknownTarget(f"scenario {entry.target_id}")
                else:
                    raise UnknownTarget(f"bad target kind {entry.target_kind!r}")
            if scenario_id is None:
                scenario_id = f"scn-{len(self.scenarios) + 1}"
            scenario = Scenario(
                scenario_id, name, first_time, repeat_ms, enabled, entries
            )
            trial = dict(self.scenarios)
            trial[scenario_id] = scenario
            cycle = find_inclusion_cycle(trial, scenario_id)
            if cycle is not None:
                raise CycleDetected(cycle)
            if scenario_id in self.scenarios:
                def_index = self._runtimes[scenario_id].def_index
            else:
                def_index = len(self.scenarios)
            self.scenarios[scenario_id] = scenario
            runtime = _ScenarioRuntime(def_index)
            first = to_virtual_ms(first_time, self.epoch)
            if first >= 0:
                runtime.next_launch = first
            self._runtimes[scenario_id] = runtime
            return scenario_id

    def set_enabled(
        self, scenario_id: str, enabled: bool, at: Optional[int] = None
    ) -> None:
        """Record an enable/disable toggle effective from virtual time ``at``.

        Launches and event firings consult the toggle history at their own
        times, so toggles may be scheduled ahead of the run. Decisions the
        engine already took are not revisited.
        """
        with self._lock:
            if scenario_id not in self.scenarios:
                raise UnknownScenario(scenario_id)
            if at is None:
                at = self.clock
            self._runtimes[scenario_id].toggles.append((at, enabled))

    def _enabled_at(self, scenario_id: str, at: int) -> bool:
        state = self.scenarios[scenario_id].enabled
        best = None
        for when, value in self._runtimes[scenario_id].toggles:
            if when <= at and (best is None or when >= best):
                best = when
                state = value
        return state

    # -- event plumbing ------------------------------------------------------

    def _push(self, key: tuple, action: TaskAction, prov: Provenance) -> None:
        self._push_index += 1
        heapq.heappush(self._heap, (key, self._push_index, action, prov))

    def _peek_launch(self) -> Optional[tuple[int, int, str]]:
        """Earliest pending instance launch as (time, def_index, scenario_id)."""
        best: Optional[tuple[int, int, str]] = None
        for sid, rt in self._runtimes.items():
            if rt.next_launch is None:
                continue
            cand = (rt.next_launch, rt.def_index, sid)
            if best is None or cand < best:
                best = cand
        return best

    def _process_launch(self, scenario_id: str) -> None:
        rt = self._runtimes[scenario_id]
        scn = self.scenarios[scenario_id]
        launch = rt.next_launch
        assert launch is not None
        k = rt.next_k
        rt.next_k += 1
        rt.next_launch = launch + scn.repeat_ms if scn.repeat_ms else None
        if not self._enabled_at(scenario_id, launch):
            return  # boundary consumed; a disabled scenario does not launch
        for fire, entry_path, action in _expand_chain(
            scn.entries, launch, self.tasks, self.scenarios
        ):
            key = (fire, _RANK_SCENARIO, rt.def_index, k, entry_path)
            self._push(key, action, Provenance("scenario", scenario_id, k, entry_path))

    def _pop_apply(self) -> LoggedEvent:
        key, _, action, prov = heapq.heappop(self._heap)
        fire_time = key[0]
        self.clock = fire_time
        event = SimEvent(
            fire_time=fire_time,
            seq=self._next_seq(),
            object_id=action.device_id,
            sensor_id=action.sensor_id,
            value_text=model.value_to_text(action.value),
            provenance=prov,
            action=action,
        )
        if prov.source == "scenario" and not self._enabled_at(
            prov.source_id, fire_time
        ):
            outcome = OUTCOME_SUPPRESSED
        else:
            outcome = self._apply_action(action, fire_time)
        return self._log(LoggedEvent(event, outcome))

    def _apply_action(self, action: TaskAction, at: int) -> str:
        try:
            self.house.set_sensor_value(
                action.device_id, action.sensor_id, action.value, at
            )
            return OUTCOME_APPLIED
        except HouseSimError as exc:
            # rejected applications are logged, they never abort the run
            return f"rejected:{type(exc).__name__}"

    def _next_seq(self) -> int:
        seq = self._seq
        self._seq += 1
        return seq

    def _log(self, logged: LoggedEvent) -> LoggedEvent:
        self.log.append(logged)
        self._notify(logged)
        return logged

    # -- external inputs -----------------------------------------------------

    def apply_remote(
        self, command_id: str, object_id: str, sensor_id: str, value_text: str
    ) -> LoggedEvent:
        """Apply a remote command at the current virtual time.

        Unresolvable targets and invalid values are logged as rejections;
        the run always continues.
        """
        with self._lock:
            prov = Provenance("remote", command_id)
            outcome, action = self._apply_text(object_id, sensor_id, value_text)
            event = SimEvent(
                fire_time=self.clock,
                seq=self._next_seq(),
                object_id=object_id,
                sensor_id=sensor_id,
                value_text=value_text,
                provenance=prov,
                action=action,
            )
            return self._log(LoggedEvent(event, outcome))

    def set_sensor_now(
        self, device_id: str, sensor_id: str, value: model.SensorValue
    ) -> LoggedEvent:
        """Manual (operator/UI) sensor write at the current virtual time.

        Raises on bad references or values; a refused input never reaches
        the event log.
        """
        with self._lock:
            fmt = self.house.sensor_format(device_id, sensor_id)
            problem = model.validate_value(fmt, value)
            if problem is not None:
                raise InvalidValue(f"sensor {sensor_id}: {problem}")
            self._manual_count += 1
            prov = Provenance("manual", f"m{self._manual_count}")
            action = TaskAction(device_id, sensor_id, value)
            outcome = self._apply_action(action, self.clock)
            event = SimEvent(
                fire_time=self.clock,
                seq=self._next_seq(),
                object_id=device_id,
                sensor_id=sensor_id,
                value_text=model.value_to_text(value),
                provenance=prov,
                action=action,
            )
            return self._log(LoggedEvent(event, outcome))

    def _apply_text(
        self, object_id: str, sensor_id: str, value_text: str
    ) -> tuple[str, Optional[TaskAction]]:
        try:
            fmt = self.house.sensor_format(object_id, sensor_id)
            value = model.value_from_text(fmt, value_text)
            action = TaskAction(object_id, sensor_id, value)
        except HouseSimError as exc:
            return f"rejected:{type(exc).__name__}", None
        return self._apply_action(action, self.clock), action

    # -- execution -------------------------------------------------------------

    def run_until(self, t: int) -> list[LoggedEvent]:
        """Apply every due event with fire_time <= t, then set the clock to t.

        Returns the newly appended log slice. Calling again with the same t
        applies nothing; splitting a run across calls yields the same log
        as one call.
        """
        with self._lock:
            if t < self.clock:
                raise ClockRegression(f"run_until({t}) but clock is {self.clock}")
            start = len(self.log)
            while True:
                launch = self._peek_launch()
                event_time = self._heap[0][0][0] if self._heap else None
                if launch is not None and (
                    event_time is None or launch[0] <= event_time
                ):
                    if launch[0] > t:
                        break
                    self._process_launch(launch[2])
                elif event_time is not None:
                    if event_time > t:
                        break
                    self._pop_apply()
                else:
                    break
            self.clock = t
            return self.log[start:]

    def step(self) -> Optional[LoggedEvent]:
        """Apply exactly the next due event, advancing the clock to it.

        Returns None (clock unchanged) when nothing can ever fire without
        further external input.
        """
        with self._lock:
            while True:
                launch = self._peek_launch()
                event_time = self._heap[0][0][0] if self._heap else None
                if event_time is None and not self._any_future_event():
                    return None
                if launch is not None and (
                    event_time is None or launch[0] <= event_time
                ):
                    self._process_launch(launch[2])
                elif event_time is not None:
                    return self._pop_apply()
                else:
                    return None

    def _any_future_event(self) -> bool:
        """Can more launches ever put an event on the queue?

        Guards step() against scanning launch boundaries forever when every
        remaining scenario is disabled for good or has an empty chain.
        """
        for sid, rt in self._runtimes.items():
            if rt.next_launch is None:
                continue
            if not self._chain_has_task(sid):
                continue
            toggles = rt.toggles
            if not toggles:
                if self.scenarios[sid].enabled:
                    return True
                continue
            last_toggle = max(when for when, _ in toggles)
            if self._enabled_at(sid, last_toggle):
                return True
            launch = rt.next_launch
            repeat = self.scenarios[sid].repeat_ms
            while launch is not None and launch <= last_toggle:
                if self._enabled_at(sid, launch):
                    return True
                launch = launch + repeat if repeat else None
        return False

    def _chain_has_task(self, scenario_id: str) -> bool:
        seen: set[str] = set()

        def walk(sid: str) -> bool:
            if sid in seen:
                return False
            seen.add(sid)
            for entry in self.scenarios[sid].entries:
                if entry.target_kind == TARGET_TASK:
                    return True
                if walk(entry.target_id):
                    return True
            return False

        return walk(scenario_id)

    # -- summaries ---------------------------------------------------------

    def outcome_counts(self) -> dict[str, int]:
        counts = {"applied": 0, "rejected": 0, "suppressed": 0}
        for logged in self.log:
            if logged.outcome == OUTCOME_APPLIED:
                counts["applied"] += 1
            elif logged.outcome == OUTCOME_SUPPRESSED:
                counts["suppressed"] += 1
            else:
                counts["rejected"] += 1
        return counts
