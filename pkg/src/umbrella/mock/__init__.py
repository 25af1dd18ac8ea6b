"""Deterministic simulated controller."""
from umbrella.mock.controller import (
    AddDevice,
    AddHost,
    AddLink,
    ClockRegression,
    DeliveryReport,
    InstallMode,
    InvalidMutation,
    LatencyModel,
    MockController,
    PacketTrain,
    RemoveDevice,
    RemoveHost,
    RemoveLink,
    UnknownHost,
    mock_with_topology,
)
from umbrella.mock.topospec import InvalidSpec, TopologySpec, generate_linear_topology

__all__ = [
    "AddDevice", "AddHost", "AddLink", "ClockRegression", "DeliveryReport", "InstallMode",
    "InvalidMutation", "InvalidSpec", "LatencyModel", "MockController", "PacketTrain",
    "RemoveDevice", "RemoveHost", "RemoveLink", "TopologySpec", "UnknownHost",
    "generate_linear_topology", "mock_with_topology",
]
