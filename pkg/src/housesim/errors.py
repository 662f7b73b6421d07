"""Exception types shared across the simulator."""


class HouseSimError(Exception):
    """Base class for all domain errors raised by this package."""


# -- house model ------------------------------------------------------------

class InvalidFormat(HouseSimError):
    """A sensor data format violates its constraints."""


class UnknownSensorKind(HouseSimError):
    pass


class EmptySensorList(HouseSimError):
    pass


class UnknownDevice(HouseSimError):
    pass


class UnknownSensor(HouseSimError):
    pass


class OutOfBounds(HouseSimError):
    """A position lies outside the house plan bounds."""


class InvalidValue(HouseSimError):
    """A sensor value does not fit the sensor's data format."""


class TimestampRegression(HouseSimError):
    """A write carries a timestamp older than the sensor's last update."""


# -- scenario engine --------------------------------------------------------

class UnknownScenario(HouseSimError):
    pass


class UnknownTarget(HouseSimError):
    """A scenario entry references a task or scenario that does not exist."""


class NegativeDelay(HouseSimError):
    pass


class CycleDetected(HouseSimError):
    """Scenario inclusion would form a cycle.

    ``path`` holds the offending chain of scenario ids, e.g. ["a", "b", "a"].
    """

    def __init__(self, path: list[str]):
        self.path = path
        super().__init__("scenario inclusion cycle: " + " -> ".join(path))


class ClockRegression(HouseSimError):
    """Attempt to move the virtual clock backwards."""


# -- wire link --------------------------------------------------------------

class MalformedLine(HouseSimError):
    """A wire line does not match the protocol grammar."""


class Unreachable(HouseSimError):
    """The remote server did not answer; caller may retry next cycle."""


# -- persistence ------------------------------------------------------------

class SchemaViolation(HouseSimError):
    """A project file failed validation.

    ``path`` names the offending location, e.g. "house.devices[0].icon_id".
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class UnsupportedVersion(HouseSimError):
    pass
