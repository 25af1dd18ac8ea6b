from umbrella.drivers.base import (
    AuthFailed,
    CapabilitySet,
    Driver,
    DriverConfig,
    DriverError,
    DuplicateName,
    NotFound,
    ProtocolError,
    Rejected,
    Unreachable,
    UnknownDriver,
    Unsupported,
    available_drivers,
    create_driver,
    register_driver,
    unregister_driver,
)

__all__ = [
    "AuthFailed", "CapabilitySet", "Driver", "DriverConfig", "DriverError", "DuplicateName",
    "NotFound", "ProtocolError", "Rejected", "Unreachable", "UnknownDriver", "Unsupported",
    "available_drivers", "create_driver", "register_driver", "unregister_driver",
]
