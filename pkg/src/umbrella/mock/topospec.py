"""Topology descriptions for the simulated controller."""
from __future__ import annotations

import ipaddress
import json
from dataclasses import dataclass, field
from typing import Mapping

from umbrella.model import (
    DeviceId,
    Host,
    InvalidSnapshot,
    Link,
    MalformedId,
    PortId,
    TopologySnapshot,
    mac_from_int,
    normalize_device_id,
)


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class TopologySpec:
    devices: Mapping[DeviceId, frozenset] = field(default_factory=dict)
    links: frozenset = frozenset()
    hosts: frozenset = frozenset()

    def to_snapshot(self, captured_at: int = 0) -> TopologySnapshot:
        try:
            return TopologySnapshot(self.devices, self.links, self.hosts, captured_at)
        except (InvalidSnapshot, ValueError, TypeError) as exc:
            raise InvalidSpec(str(exc)) from exc

    def validate(self) -> "TopologySpec":
        self.to_snapshot()
        return self

    @classmethod
    def from_json(cls, doc) -> "TopologySpec":
        """Build from ``{"kind": "linear", "n": N}`` or an explicit listing.

        Explicit form::

            {"devices": [{"id": 1, "ports": [1, 2]}, ...],
             "links": [{"src": {"device": 1, "port": 2}, "dst": {"device": 2, "port": 2}}, ...],
             "hosts": [{"mac": "00:00:00:00:00:01", "ip": "10.0.0.1", "device": 1, "port": 1}, ...]}

        Links are directed; list both directions of a cable.
        """
        if isinstance(doc, (str, bytes)):
            doc = json.loads(doc)
        try:
            if doc.get("kind") == "linear":
                return generate_linear_topology(int(doc["n"]))
            if "kind" in doc:
                raise InvalidSpec(f"unknown topology kind {doc['kind']!r}")
            devices = {normalize_device_id(d["id"]): frozenset(int(p) for p in d.get("ports", []))
                       for d in doc.get("devices", [])}

            def port(ref):
                return PortId(normalize_device_id(ref["device"]), int(ref["port"]))

            links = frozenset(Link(port(l["src"]), port(l["dst"])) for l in doc.get("links", []))
            hosts = frozenset(
                Host(h["mac"], PortId(normalize_device_id(h["device"]), int(h["port"])), h.get("ip"))
                for h in doc.get("hosts", [])
            )
        except (KeyError, TypeError, ValueError, MalformedId) as exc:
            if isinstance(exc, InvalidSpec):
                raise
            raise InvalidSpec(f"bad topology document: {exc}") from exc
        return cls(devices, links, hosts).validate()

    def to_json(self) -> dict:
        return {
            "devices": [{"id": d.dpid, "ports": sorted(p)} for d, p in sorted(self.devices.items())],
            "links": [
                {"src": {"device": l.src.device.dpid, "port": l.src.port_no},
                 "dst": {"device": l.dst.device.dpid, "port": l.dst.port_no}}
                for l in sorted(self.links)
            ],
            "hosts": [
                {"mac": h.mac, "ip": None if h.ip is None else str(h.ip),
                 "device": h.attachment.device.dpid, "port": h.attachment.port_no}
                for h in sorted(self.hosts, key=lambda h: h.mac)
            ],
        }


def generate_linear_topology(n: int) -> TopologySpec:
    """A chain of ``n`` switches with one host each.

    Switch ``i`` (dpid ``i``) uses port 1 for its host, port 2 toward switch
    ``i-1`` and the next free port toward switch ``i+1``.  Host ``i`` has MAC
    ``i`` and address ``10.0.0.0 + i``; the sender sits on switch 1 and the
    receiver on switch ``n``.
    """
    if n < 1:
        raise InvalidSpec(f"linear topology needs n >= 1, got {n}")
    base = ipaddress.IPv4Address("10.0.0.0")
    devices = {}
    links = set()
    hosts = set()
    for i in range(1, n + 1):
        dev = DeviceId(i)
        ports = [1]
        if i > 1:
            ports.append(2)
        if i < n:
            ports.append(len(ports) + 1)
        devices[dev] = frozenset(ports)
        hosts.add(Host(mac_from_int(i), PortId(dev, 1), base + i))
    for i in range(1, n):
        right_port = 3 if i > 1 else 2
        a = PortId(DeviceId(i), right_port)
        b = PortId(DeviceId(i + 1), 2)
        links.add(Link(a, b))
        links.add(Link(b, a))
    return TopologySpec(devices, frozenset(links), frozenset(hosts))
