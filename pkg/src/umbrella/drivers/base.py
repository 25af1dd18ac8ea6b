"""The driver contract, its error vocabulary, configuration and the registry."""
from __future__ import annotations

import abc
import os
import sys
import threading
from dataclasses import dataclass, field, fields
from typing import Callable, Dict, Iterable, List, Optional, Tuple
from urllib.parse import urlparse

from umbrella.model import DeviceId, FlowHandle, FlowRule, FlowStats, PortStats, TopologySnapshot

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class DriverError(Exception):
    """Base of every error a driver operation may raise."""


class Unreachable(DriverError):
    pass


class AuthFailed(DriverError):
    pass


class NotFound(DriverError):
    pass


class Rejected(DriverError):
    pass


class Unsupported(DriverError):
    pass


class ProtocolError(DriverError):
    pass


class DuplicateName(ValueError):
    pass


class UnknownDriver(LookupError):
    pass


@dataclass(frozen=True)
class CapabilitySet:
    topology_read: bool = True
    flow_write: bool = True
    flow_stats: bool = True
    port_stats: bool = True
    event_push: bool = False

    def __post_init__(self):
        if self.flow_stats and not self.flow_write:
            raise ValueError("flow_stats requires flow_write")

    def missing(self, required: Iterable[str]) -> List[str]:
        names = {f.name for f in fields(self)}
        out = []
        for name in required:
            if name not in names:
                raise ValueError(f"unknown capability {name!r}")
            if not getattr(self, name):
                out.append(name)
        return out


@dataclass(frozen=True)
class DriverConfig:
    name: str
    endpoint: str = "mock://local"
    username: str = ""
    password: str = ""
    request_timeout_ms: int = 5000
    extras: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        url = urlparse(self.endpoint)
        if not url.scheme or not (url.netloc or url.path):
            raise ValueError(f"malformed endpoint: {self.endpoint!r}")
        if self.request_timeout_ms <= 0:
            raise ValueError("request_timeout_ms must be positive")

    @classmethod
    def from_toml(cls, path, env: Optional[Dict[str, str]] = None) -> "DriverConfig":
        """Load a config file, then apply ``UMBRELLA_*`` environment overrides.

        The keys may live at top level or under a ``[controller]`` table.
        """
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        return cls.from_mapping(doc.get("controller", doc), env=env)

    @classmethod
    def from_mapping(cls, doc: dict, env: Optional[Dict[str, str]] = None) -> "DriverConfig":
        env = os.environ if env is None else env
        values = {
            "name": doc.get("name", "mock"),
            "endpoint": doc.get("endpoint", "mock://local"),
            "username": doc.get("username", ""),
            "password": doc.get("password", ""),
            "request_timeout_ms": int(doc.get("request_timeout_ms", 5000)),
            "extras": {str(k): str(v) for k, v in doc.get("extras", {}).items()},
        }
        for var, key in ENV_OVERRIDES.items():
            if env.get(var):
                values[key] = env[var]
        return cls(**values)


ENV_OVERRIDES = {
    "UMBRELLA_CONTROLLER": "name",
    "UMBRELLA_ENDPOINT": "endpoint",
    "UMBRELLA_USER": "username",
    "UMBRELLA_PASS": "password",
}


class Driver(abc.ABC):
    """Uniform northbound operations over one controller.

    All operations block until the controller has answered.  Failures are
    raised as exactly one :class:`DriverError` subclass.
    """

    @abc.abstractmethod
    def capabilities(self) -> CapabilitySet: ...

    @abc.abstractmethod
    def get_topology(self) -> TopologySnapshot: ...

    @abc.abstractmethod
    def install_flow(self, rule: FlowRule) -> FlowHandle: ...

    @abc.abstractmethod
    def remove_flow(self, handle: FlowHandle) -> None: ...

    @abc.abstractmethod
    def list_flows(self, device: Optional[DeviceId] = None) -> List[Tuple[FlowHandle, FlowRule]]: ...

    @abc.abstractmethod
    def get_flow_stats(self, handle: FlowHandle) -> FlowStats: ...

    @abc.abstractmethod
    def get_port_stats(self, device: DeviceId) -> List[PortStats]: ...

    def close(self) -> None:
        pass


DriverFactory = Callable[[DriverConfig], Driver]

_registry: Dict[str, DriverFactory] = {}
_registry_lock = threading.Lock()
_builtins_loaded = False


def register_driver(name: str, factory: DriverFactory) -> None:
    with _registry_lock:
        if name in _registry:
            raise DuplicateName(f"driver {name!r} already registered")
        _registry[name] = factory


def unregister_driver(name: str) -> None:
    with _registry_lock:
        _registry.pop(name, None)


def _load_builtins() -> None:
    global _builtins_loaded
    if _builtins_loaded:
        return
    _builtins_loaded = True
    # importing these modules registers their factories
    import umbrella.drivers.odl  # noqa: F401
    import umbrella.drivers.onos  # noqa: F401
    import umbrella.mock.controller  # noqa: F401


def available_drivers() -> List[str]:
    _load_builtins()
    with _registry_lock:
        return sorted(_registry)


def create_driver(config: DriverConfig, requires: Iterable[str] = ()) -> Driver:
    """Build the driver named by ``config.name``.

    ``requires`` lists capability names the caller depends on; a driver that
    lacks any of them is refused with :class:`Unsupported`.
    """
    _load_builtins()
    with _registry_lock:
        factory = _registry.get(config.name)
    if factory is None:
        raise UnknownDriver(f"no driver named {config.name!r}; known: {sorted(_registry)}")
    driver = factory(config)
    missing = driver.capabilities().missing(requires)
    if missing:
        driver.close()
        raise Unsupported(f"driver {config.name!r} lacks {', '.join(missing)}")
    return driver
