"""Scenario-based smart-house simulator.

Model a house with typed virtual sensors and devices, run repeatable
delay-chained scenarios on a deterministic virtual clock, and exchange
status packets and commands with a remote-controlling server.
"""

from .engine import (
    Engine,
    LoggedEvent,
    Provenance,
    Scenario,
    ScenarioEntry,
    ScheduledTask,
    SimEvent,
    TaskAction,
    compile_timeline,
)
from .model import (
    DataFormat,
    Device,
    DeviceStatus,
    House,
    HousePlan,
    MultiState,
    Number,
    Numeral,
    Placement,
    PointFormat,
    Position,
    Rect,
    SensorInstance,
    SensorKind,
    SensorValue,
    State,
    validate_value,
)
from .persistence import (
    ProjectDocument,
    export_event_log,
    load_project,
    save_project,
)
from .wire import RemoteCommand, StatusPacket

__version__ = "0.1.0"

__all__ = [
    "DataFormat",
    "Device",
    "DeviceStatus",
    "Engine",
    "House",
    "HousePlan",
    "LoggedEvent",
    "MultiState",
    "Number",
    "Numeral",
    "Placement",
    "PointFormat",
    "Position",
    "ProjectDocument",
    "Provenance",
    "Rect",
    "RemoteCommand",
    "Scenario",
    "ScenarioEntry",
    "ScheduledTask",
    "SensorInstance",
    "SensorKind",
    "SensorValue",
    "SimEvent",
    "State",
    "StatusPacket",
    "TaskAction",
    "compile_timeline",
    "export_event_log",
    "load_project",
    "save_project",
    "validate_value",
]
