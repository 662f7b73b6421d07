"""Domain model of the simulated house.

Plan geometry, the sensor type system (numeral / multi-state / point data
formats), devices with attached sensor instances, placements on the 2D
plan, and validated state mutation with status queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .errors import (
    EmptySensorList,
    InvalidFormat,
    InvalidValue,
    OutOfBounds,
    TimestampRegression,
    UnknownDevice,
    UnknownSensor,
    UnknownSensorKind,
)

# -- geometry ----------------------------------------------------------------


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in plan coordinates (meters)."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    def contains(self, x: float, y: float) -> bool:
        """Inclusive on all edges."""
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y


def _segments_intersect(p1, p2, q1, q2) -> bool:
    """True if segments p1-p2 and q1-q2 properly cross."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if v > 0:
            return 1
        if v < 0:
            return -1
        return 0

    o1 = orient(p1, p2, q1)
    o2 = orient(p1, p2, q2)
    o3 = orient(q1, q2, p1)
    o4 = orient(q1, q2, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def polygon_is_simple(vertices: list[tuple[float, float]]) -> bool:
    """True if no two non-adjacent polygon edges cross each other."""
    n = len(vertices)
    if n < 3:
        return False
    edges = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # adjacent edges share a vertex
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


# -- sensor data formats -----------------------------------------------------


@dataclass(frozen=True)
class Numeral:
    """Bounded decimal range, e.g. a temperature in 0..40 °C."""

    min_value: float
    max_value: float
    unit: str = ""


@dataclass(frozen=True)
class MultiState:
    """Ordered enumeration of distinct state names, e.g. On/Off."""

    states: tuple[str, ...]


@dataclass(frozen=True)
class PointFormat:
    """2D coordinate constrained to a rectangle in plan coordinates."""

    bounds: Rect


DataFormat = Union[Numeral, MultiState, PointFormat]


def check_format(fmt: DataFormat) -> None:
    """Raise InvalidFormat unless ``fmt`` satisfies its invariants."""
    if isinstance(fmt, Numeral):
        if not (math.isfinite(fmt.min_value) and math.isfinite(fmt.max_value)):
            raise InvalidFormat("numeral bounds must be finite")
        if fmt.min_value >= fmt.max_value:
            raise InvalidFormat(
                f"numeral range is empty: min {fmt.min_value} >= max {fmt.max_value}"
            )
    elif isinstance(fmt, MultiState):
        if len(fmt.states) < 2:
            raise InvalidFormat("multi-state needs at least 2 states")
        if any(not s for s in fmt.states):
            raise InvalidFormat("state names must be non-empty")
        if len(set(fmt.states)) != len(fmt.states):
            raise InvalidFormat("state names must be unique (case-sensitive)")
    elif isinstance(fmt, PointFormat):
        if not (fmt.bounds.width > 0 and fmt.bounds.height > 0):
            raise InvalidFormat("point bounds must have positive width and height")
    else:
        raise InvalidFormat(f"unknown data format: {fmt!r}")


# -- sensor values -----------------------------------------------------------


@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class State:
    name: str


@dataclass(frozen=True)
class Position:
    x: float
    y: float


SensorValue = Union[Number, State, Position]


def validate_value(fmt: DataFormat, value: SensorValue) -> Optional[str]:
    """Check a value against a data format.

    Returns None when the value fits, otherwise a description of the
    violation. Total: never raises.
    """
    if isinstance(fmt, Numeral):
        if not isinstance(value, Number):
            return f"expected a number, got {type(value).__name__}"
        if not math.isfinite(value.value):
            return "number must be finite"
        if not (fmt.min_value <= value.value <= fmt.max_value):
            return (
                f"{value.value} outside range "
                f"[{fmt.min_value}, {fmt.max_value}]"
            )
        return None
    if isinstance(fmt, MultiState):
        if not isinstance(value, State):
            return f"expected a state name, got {type(value).__name__}"
        if value.name not in fmt.states:
            return f"unknown state {value.name!r} (known: {', '.join(fmt.states)})"
        return None
    if isinstance(fmt, PointFormat):
        if not isinstance(value, Position):
            return f"expected a position, got {type(value).__name__}"
        if not (math.isfinite(value.x) and math.isfinite(value.y)):
            return "position must be finite"
        if not fmt.bounds.contains(value.x, value.y):
            return f"({value.x}, {value.y}) outside point bounds"
        return None
    return f"unknown data format: {fmt!r}"


def value_to_text(value: SensorValue) -> str:
    """Flat text encoding used on the wire and in event logs."""
    if isinstance(value, Number):
        return format_decimal(value.value)
    if isinstance(value, State):
        return value.name
    if isinstance(value, Position):
        return f"{format_decimal(value.x)},{format_decimal(value.y)}"
    raise TypeError(f"not a sensor value: {value!r}")


def value_from_text(fmt: DataFormat, text: str) -> SensorValue:
    """Parse the flat text encoding according to the sensor's format.

    Raises InvalidValue when the text cannot be interpreted; the caller
    still runs validate_value on the result.
    """
    if isinstance(fmt, Numeral):
        try:
            return Number(float(text))
        except ValueError:
            raise InvalidValue(f"not a number: {text!r}") from None
    if isinstance(fmt, MultiState):
        return State(text)
    if isinstance(fmt, PointFormat):
        parts = text.split(",")
        if len(parts) != 2:
            raise InvalidValue(f"not an x,y pair: {text!r}")
        try:
            return Position(float(parts[0]), float(parts[1]))
        except ValueError:
            raise InvalidValue(f"not an x,y pair: {text!r}") from None
    raise InvalidValue(f"unknown data format: {fmt!r}")


def format_decimal(v: float) -> str:
    """Integer-valued floats print without a fraction part."""
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


# -- house entities ----------------------------------------------------------


@dataclass
class SensorKind:
    id: str
    name: str
    format: DataFormat


@dataclass
class SensorInstance:
    id: str
    kind_id: str
    current: Optional[SensorValue] = None
    last_update: Optional[int] = None  # virtual ms; present iff current is


@dataclass
class Device:
    id: str
    name: str
    icon_id: str
    sensors: list[SensorInstance]


@dataclass
class Room:
    name: str
    polygon: list[tuple[float, float]]


@dataclass
class Opening:
    kind: str  # "door" | "window"
    segment: tuple[tuple[float, float], tuple[float, float]]


@dataclass
class Background:
    image_path: str  # opaque reference; raster decoding is a UI concern
    meters_per_pixel: float


@dataclass
class HousePlan:
    bounds: Rect
    rooms: list[Room] = field(default_factory=list)
    openings: list[Opening] = field(default_factory=list)
    background: Optional[Background] = None


@dataclass
class Placement:
    device_id: str
    x: float
    y: float


@dataclass(frozen=True)
class StatusEntry:
    sensor_id: str
    value: Optional[SensorValue]
    last_update: Optional[int]


@dataclass(frozen=True)
class DeviceStatus:
    """Snapshot of all sensors of one device, in declaration order."""

    device_id: str
    entries: tuple[StatusEntry, ...]


@dataclass(frozen=True)
class Violation:
    entity: str
    message: str

    def __str__(self) -> str:
        return f"{self.entity}: {self.message}"


# -- the house ----------------------------------------------------------------


class House:
    """Catalog of sensor kinds, devices and placements over a plan.

    All mutations validate their inputs; a house assembled purely through
    these operations always passes validate().
    """

    def __init__(self, plan: HousePlan):
        self.plan = plan
        self.sensor_kinds: dict[str, SensorKind] = {}
        self.devices: dict[str, Device] = {}
        self.placements: dict[str, Placement] = {}
        self._counters: dict[str, int] = {}

    # -- id generation --------------------------------------------------

    def _fresh_id(self, prefix: str) -> str:
        n = self._counters.get(prefix, 0) + 1
        self._counters[prefix] = n
        return f"{prefix}-{n}"

    def _bump_counter(self, existing_id: str) -> None:
        prefix, sep, tail = existing_id.rpartition("-")
        if sep and tail.isdigit():
            n = int(tail)
            if n > self._counters.get(prefix, 0):
                self._counters[prefix] = n

    # -- catalog operations ----------------------------------------------

    def add_sensor_kind(self, name: str, fmt: DataFormat) -> str:
        """Register a sensor kind; duplicate names are fine, ids disambiguate."""
        if not name:
            raise ValueError("sensor kind name must be non-empty")
        check_format(fmt)
        kind_id = self._fresh_id("sk")
        self.sensor_kinds[kind_id] = SensorKind(kind_id, name, fmt)
        return kind_id

    def add_device(self, name: str, kind_ids: Iterable[str], icon_id: str) -> str:
        """Create a device with one fresh, unset sensor instance per kind."""
        kind_ids = list(kind_ids)
        if not kind_ids:
            raise EmptySensorList(f"device {name!r} needs at least one sensor")
        for kid in kind_ids:
            if kid not in self.sensor_kinds:
                raise UnknownSensorKind(kid)
        device_id = self._fresh_id("dev")
        sensors = [
            SensorInstance(self._fresh_id("sen"), kid) for kid in kind_ids
        ]
        self.devices[device_id] = Device(device_id, name, icon_id, sensors)
        return device_id

    def place_device(self, device_id: str, x: float, y: float) -> Placement:
        """Put a device on the plan; placing again moves it."""
        if device_id not in self.devices:
            raise UnknownDevice(device_id)
        if not self.plan.bounds.contains(x, y):
            raise OutOfBounds(
                f"device {device_id} at ({x}, {y}) is outside the plan bounds"
            )
        placement = Placement(device_id, x, y)
        self.placements[device_id] = placement
        return placement

    # -- lookups ----------------------------------------------------------

    def device(self, device_id: str) -> Device:
        try:
            return self.devices[device_id]
        except KeyError:
            raise UnknownDevice(device_id) from None

    def sensor_kind(self, kind_id: str) -> SensorKind:
        try:
            return self.sensor_kinds[kind_id]
        except KeyError:
            raise UnknownSensorKind(kind_id) from None

    def find_sensor(self, device_id: str, sensor_id: str) -> SensorInstance:
        device = self.device(device_id)
        for sensor in device.sensors:
            if sensor.id == sensor_id:
                return sensor
        raise UnknownSensor(f"{sensor_id} on device {device_id}")

    def sensor_format(self, device_id: str, sensor_id: str) -> DataFormat:
        sensor = self.find_sensor(device_id, sensor_id)
        return self.sensor_kind(sensor.kind_id).format

    # -- state ------------------------------------------------------------

    def set_sensor_value(
        self, device_id: str, sensor_id: str, value: SensorValue, at: int
    ) -> DeviceStatus:
        """Write a sensor value at virtual time ``at`` (ms).

        Timestamps must be nondecreasing per sensor; equal timestamps are
        allowed and the later write wins.
        """
        sensor = self.find_sensor(device_id, sensor_id)
        fmt = self.sensor_kind(sensor.kind_id).format
        problem = validate_value(fmt, value)
        if problem is not None:
            raise InvalidValue(f"sensor {sensor_id}: {problem}")
        if at < 0:
            raise TimestampRegression(f"negative timestamp {at}")
        if sensor.last_update is not None and at < sensor.last_update:
            raise TimestampRegression(
                f"sensor {sensor_id}: {at} < last update {sensor.last_update}"
            )
        sensor.current = value
        sensor.last_update = at
        return self.get_status(device_id)

    def get_status(self, device_id: str) -> DeviceStatus:
        """Pure snapshot of all sensors of the device, in declaration order."""
        device = self.device(device_id)
        return DeviceStatus(
            device_id=device_id,
            entries=tuple(
                StatusEntry(s.id, s.current, s.last_update) for s in device.sensors
            ),
        )

    # -- validation --------------------------------------------------------

    def validate(self) -> list[Violation]:
        """All invariant violations, each naming the offending entity."""
        out: list[Violation] = []
        bounds = self.plan.bounds
        if not (bounds.width > 0 and bounds.height > 0):
            out.append(Violation("plan", "bounds must have positive extent"))
        for room in self.plan.rooms:
            if len(room.polygon) < 3:
                out.append(
                    Violation(f"room {room.name!r}", "polygon needs >= 3 vertices")
                )
                continue
            for x, y in room.polygon:
                if not bounds.contains(x, y):
                    out.append(
                        Violation(
                            f"room {room.name!r}",
                            f"vertex ({x}, {y}) outside plan bounds",
                        )
                    )
            if not polygon_is_simple(room.polygon):
                out.append(
                    Violation(f"room {room.name!r}", "polygon is self-intersecting")
                )
        for i, opening in enumerate(self.plan.openings):
            if opening.kind not in ("door", "window"):
                out.append(
                    Violation(f"opening[{i}]", f"unknown kind {opening.kind!r}")
                )
            for x, y in opening.segment:
                if not bounds.contains(x, y):
                    out.append(
                        Violation(
                            f"opening[{i}]",
                            f"endpoint ({x}, {y}) outside plan bounds",
                        )
                    )
        if self.plan.background is not None:
            if not self.plan.background.meters_per_pixel > 0:
                out.append(Violation("background", "meters_per_pixel must be > 0"))

        for kind in self.sensor_kinds.values():
            if not kind.name:
                out.append(Violation(kind.id, "sensor kind name is empty"))
            try:
                check_format(kind.format)
            except InvalidFormat as exc:
                out.append(Violation(kind.id, str(exc)))

        seen_sensor_ids: set[str] = set()
        for device in self.devices.values():
            if not device.sensors:
                out.append(Violation(device.id, "device has no sensors"))
            local_ids = set()
            for sensor in device.sensors:
                if sensor.id in local_ids:
                    out.append(
                        Violation(device.id, f"duplicate sensor id {sensor.id}")
                    )
                local_ids.add(sensor.id)
                seen_sensor_ids.add(sensor.id)
                kind = self.sensor_kinds.get(sensor.kind_id)
                if kind is None:
                    out.append(
                        Violation(
                            device.id,
                            f"sensor {sensor.id} references unknown kind "
                            f"{sensor.kind_id}",
                        )
                    )
                    continue
                if (sensor.current is None) != (sensor.last_update is None):
                    out.append(
                        Violation(
                            device.id,
                            f"sensor {sensor.id} has value without timestamp "
                            "or vice versa",
                        )
                    )
                if sensor.current is not None:
                    problem = validate_value(kind.format, sensor.current)
                    if problem is not None:
                        out.append(
                            Violation(device.id, f"sensor {sensor.id}: {problem}")
                        )

        for device_id, placement in self.placements.items():
            if device_id not in self.devices:
                out.append(
                    Violation(
                        f"placement of {device_id}",
                        "references a device that does not exist",
                    )
                )
            if not bounds.contains(placement.x, placement.y):
                out.append(
                    Violation(
                        f"placement of {device_id}",
                        f"({placement.x}, {placement.y}) outside plan bounds",
                    )
                )
        return out

    # -- loader hooks ------------------------------------------------------

    def restore_sensor_kind(self, kind: SensorKind) -> None:
        """Adopt an entity with a preexisting id (project loading)."""
        self.sensor_kinds[kind.id] = kind
        self._bump_counter(kind.id)

    def restore_device(self, device: Device) -> None:
        self.devices[device.id] = device
        self._bump_counter(device.id)
        for sensor in device.sensors:
            self._bump_counter(sensor.id)

    def restore_placement(self, placement: Placement) -> None:
        self.placements[placement.device_id] = placement
