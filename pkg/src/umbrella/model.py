"""Controller-independent network model.

Everything here is an immutable value.  Drivers translate these values to and
from their controller's wire format; the simulator, the path finder and the
topology monitor consume them directly.
"""
from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Union

U64_MAX = (1 << 64) - 1
U32_MAX = (1 << 32) - 1

# OpenFlow reserved port numbers, used when a controller names a logical port.
RESERVED_PORTS = {
    "IN_PORT": 0xFFFFFFF8,
    "TABLE": 0xFFFFFFF9,
    "NORMAL": 0xFFFFFFFA,
    "FLOOD": 0xFFFFFFFB,
    "ALL": 0xFFFFFFFC,
    "CONTROLLER": 0xFFFFFFFD,
    "LOCAL": 0xFFFFFFFE,
}
RESERVED_PORT_NAMES = {v: k for k, v in RESERVED_PORTS.items()}

ETH_TYPE_IPV4 = 0x0800


class MalformedId(ValueError):
    """Raised when a string is not a datapath identifier in any known spelling."""


class InvalidSnapshot(ValueError):
    pass


_ONOS_RE = re.compile(r"^of:([0-9a-fA-F]{16})$")
_ODL_RE = re.compile(r"^openflow:([0-9]+)$")
_DEC_RE = re.compile(r"^[0-9]+$")
_MAC_RE = re.compile(r"^[0-9a-fA-F]{2}([:-][0-9a-fA-F]{2}){5}$")


@dataclass(frozen=True, order=True)
class DeviceId:
    dpid: int

    def __post_init__(self):
        if not isinstance(self.dpid, int) or isinstance(self.dpid, bool):
            raise TypeError(f"dpid must be an int, got {self.dpid!r}")
        if not 0 <= self.dpid <= U64_MAX:
            raise ValueError(f"dpid out of u64 range: {self.dpid}")

    def render_onos(self) -> str:
        return f"of:{self.dpid:016x}"

    def render_odl(self) -> str:
        return f"openflow:{self.dpid}"

    def __str__(self) -> str:
        return self.render_onos()


def normalize_device_id(text) -> DeviceId:
    """Parse any accepted datapath spelling into a DeviceId.

    Accepts ``of:`` followed by 16 hex digits, ``openflow:`` followed by a
    decimal number, a bare decimal string, an int, or an existing DeviceId.
    """
    if isinstance(text, DeviceId):
        return text
    if isinstance(text, int) and not isinstance(text, bool):
        value = text
    elif isinstance(text, str):
        s = text.strip()
        m = _ONOS_RE.match(s)
        if m:
            value = int(m.group(1), 16)
        elif (m := _ODL_RE.match(s)) or _DEC_RE.match(s):
            value = int(m.group(1) if m else s)
        else:
            raise MalformedId(f"not a datapath id: {text!r}")
    else:
        raise MalformedId(f"not a datapath id: {text!r}")
    if value > U64_MAX or value < 0:
        raise MalformedId(f"datapath id out of range: {text!r}")
    return DeviceId(value)


def normalize_mac(mac: str) -> str:
    if not isinstance(mac, str) or not _MAC_RE.match(mac):
        raise ValueError(f"bad MAC address: {mac!r}")
    return mac.replace("-", ":").lower()


def mac_from_int(value: int) -> str:
    raw = f"{value:012x}"
    return ":".join(raw[i:i + 2] for i in range(0, 12, 2))


def _check_port_no(port_no: int, allow_reserved: bool = False) -> None:
    if not isinstance(port_no, int) or isinstance(port_no, bool):
        raise TypeError(f"port number must be an int, got {port_no!r}")
    if allow_reserved and port_no in RESERVED_PORT_NAMES:
        return
    if not 1 <= port_no <= U32_MAX:
        raise ValueError(f"port number out of range: {port_no}")


@dataclass(frozen=True, order=True)
class PortId:
    device: DeviceId
    port_no: int

    def __post_init__(self):
        _check_port_no(self.port_no)


@dataclass(frozen=True, order=True)
class Host:
    mac: str
    attachment: PortId
    ip: Optional[ipaddress.IPv4Address] = None

    def __post_init__(self):
        object.__setattr__(self, "mac", normalize_mac(self.mac))
        if self.ip is not None and not isinstance(self.ip, ipaddress.IPv4Address):
            object.__setattr__(self, "ip", ipaddress.IPv4Address(self.ip))


@dataclass(frozen=True, order=True)
class Link:
    """One direction of a cable; a physical cable is two Links."""

    src: PortId
    dst: PortId

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError(f"link endpoints must differ: {self.src}")

    def reversed(self) -> "Link":
        return Link(self.dst, self.src)


@dataclass(frozen=True, eq=False)
class TopologySnapshot:
    """Devices (with their port numbers), links and hosts at one instant.

    Equality compares topology content only; ``captured_at`` is metadata.
    """

    devices: Mapping[DeviceId, frozenset] = field(default_factory=dict)
    links: frozenset = frozenset()
    hosts: frozenset = frozenset()
    captured_at: int = 0

    def __post_init__(self):
        devices = {normalize_device_id(d): frozenset(ports) for d, ports in dict(self.devices).items()}
        for d, ports in devices.items():
            for p in ports:
                _check_port_no(p)
        object.__setattr__(self, "devices", MappingProxyType(dict(sorted(devices.items()))))
        object.__setattr__(self, "links", frozenset(self.links))
        object.__setattr__(self, "hosts", frozenset(self.hosts))
        problem = closure_violation(self.devices, self.links, self.hosts)
        if problem:
            raise InvalidSnapshot(problem)

    def __eq__(self, other):
        if not isinstance(other, TopologySnapshot):
            return NotImplemented
        return (dict(self.devices) == dict(other.devices)
                and self.links == other.links and self.hosts == other.hosts)

    def __hash__(self):
        return hash((frozenset(self.devices.items()), self.links, self.hosts))

    def __repr__(self):
        return (f"TopologySnapshot({len(self.devices)} devices, {len(self.links)} links, "
                f"{len(self.hosts)} hosts, captured_at={self.captured_at})")

    def has_port(self, port: PortId) -> bool:
        return port.port_no in self.devices.get(port.device, ())

    def host_by_mac(self, mac: str) -> Host:
        mac = normalize_mac(mac)
        for h in self.hosts:
            if h.mac == mac:
                return h
        raise KeyError(mac)

    def replace(self, devices=None, links=None, hosts=None, captured_at=None) -> "TopologySnapshot":
        return TopologySnapshot(
            devices=self.devices if devices is None else devices,
            links=self.links if links is None else links,
            hosts=self.hosts if hosts is None else hosts,
            captured_at=self.captured_at if captured_at is None else captured_at,
        )


def closure_violation(devices: Mapping[DeviceId, Iterable[int]], links, hosts) -> Optional[str]:
    """Describe the first referential-closure problem, or return None."""

    def has(port: PortId) -> bool:
        return port.port_no in devices.get(port.device, ())

    for link in links:
        for end in (link.src, link.dst):
            if not has(end):
                return f"link {link} references missing port {end}"
    seen_macs = set()
    for host in hosts:
        if host.mac in seen_macs:
            return f"duplicate host MAC {host.mac}"
        seen_macs.add(host.mac)
        if not has(host.attachment):
            return f"host {host.mac} attached to missing port {host.attachment}"
    return None


# -- flow rules ---------------------------------------------------------------

@dataclass(frozen=True)
class MatchFields:
    """Header match; a field left as None is a wildcard.

    IPv4 matches imply ``eth_type == 0x0800``; the value is filled in when
    omitted so that equality survives driver round trips.
    """

    in_port: Optional[int] = None
    eth_src: Optional[str] = None
    eth_dst: Optional[str] = None
    eth_type: Optional[int] = None
    ipv4_src: Optional[ipaddress.IPv4Network] = None
    ipv4_dst: Optional[ipaddress.IPv4Network] = None

    def __post_init__(self):
        if self.in_port is not None:
            _check_port_no(self.in_port, allow_reserved=True)
        for name in ("eth_src", "eth_dst"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, normalize_mac(v))
        for name in ("ipv4_src", "ipv4_dst"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, ipaddress.IPv4Network(v, strict=False))
        if self.eth_type is not None and not 0 <= self.eth_type <= 0xFFFF:
            raise ValueError(f"eth_type out of range: {self.eth_type}")
        if self.ipv4_src is not None or self.ipv4_dst is not None:
            if self.eth_type is None:
                object.__setattr__(self, "eth_type", ETH_TYPE_IPV4)
            elif self.eth_type != ETH_TYPE_IPV4:
                raise ValueError("IPv4 match fields require eth_type 0x0800")

    def merged(self, **overrides) -> "MatchFields":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(overrides)
        return MatchFields(**values)


@dataclass(frozen=True)
class Output:
    port_no: int

    def __post_init__(self):
        _check_port_no(self.port_no, allow_reserved=True)


@dataclass(frozen=True)
class Drop:
    pass


@dataclass(frozen=True)
class SetEthDst:
    mac: str

    def __post_init__(self):
        object.__setattr__(self, "mac", normalize_mac(self.mac))


Action = Union[Output, Drop, SetEthDst]


@dataclass(frozen=True)
class FlowRule:
    """A match/action rule bound to one device.

    Dataclass equality is the semantic equality used across drivers: no
    driver-assigned identifier lives on the rule.
    """

    device: DeviceId
    match: MatchFields = field(default_factory=MatchFields)
    actions: tuple = (Drop(),)
    priority: int = 100
    table_id: int = 0
    idle_timeout_s: int = 0
    hard_timeout_s: int = 0

    def __post_init__(self):
        object.__setattr__(self, "device", normalize_device_id(self.device))
        object.__setattr__(self, "actions", tuple(self.actions))
        if not 0 <= self.priority <= 0xFFFF:
            raise ValueError(f"priority out of range: {self.priority}")
        if not 0 <= self.table_id <= 0xFE:
            raise ValueError(f"table_id out of range: {self.table_id}")
        if self.idle_timeout_s < 0 or self.hard_timeout_s < 0:
            raise ValueError("timeouts must be non-negative")
        if not self.actions:
            raise ValueError("a rule needs at least one action (use Drop())")
        for a in self.actions:
            if not isinstance(a, (Output, Drop, SetEthDst)):
                raise TypeError(f"unknown action {a!r}")
        if sum(isinstance(a, Output) for a in self.actions) > 1:
            raise ValueError("at most one Output action per rule")
        if any(isinstance(a, Drop) for a in self.actions) and len(self.actions) != 1:
            raise ValueError("Drop must be the only action")

    @property
    def key(self) -> tuple:
        """Fields that identify a flow-table slot."""
        return (self.device, self.table_id, self.priority, self.match)


@dataclass(frozen=True, order=True)
class FlowHandle:
    device: DeviceId
    driver_flow_id: str


@dataclass(frozen=True)
class FlowStats:
    handle: FlowHandle
    packets: int = 0
    bytes: int = 0
    duration_s: int = 0


@dataclass(frozen=True)
class PortStats:
    port: PortId
    rx_packets: int = 0
    tx_packets: int = 0
    rx_bytes: int = 0
    tx_bytes: int = 0


@dataclass(frozen=True)
class PacketDescriptor:
    in_port: int
    eth_src: str
    eth_dst: str
    eth_type: int = ETH_TYPE_IPV4
    ipv4_src: Optional[ipaddress.IPv4Address] = None
    ipv4_dst: Optional[ipaddress.IPv4Address] = None


def flow_matches(rule: FlowRule, packet: PacketDescriptor) -> bool:
    m = rule.match
    if m.in_port is not None and m.in_port != packet.in_port:
        return False
    if m.eth_src is not None and m.eth_src != packet.eth_src:
        return False
    if m.eth_dst is not None and m.eth_dst != packet.eth_dst:
        return False
    if m.eth_type is not None and m.eth_type != packet.eth_type:
        return False
    if m.ipv4_src is not None and (packet.ipv4_src is None or packet.ipv4_src not in m.ipv4_src):
        return False
    if m.ipv4_dst is not None and (packet.ipv4_dst is None or packet.ipv4_dst not in m.ipv4_dst):
        return False
    return True


# -- topology events ----------------------------------------------------------

@dataclass(frozen=True)
class DeviceAdded:
    device: DeviceId
    ports: frozenset = frozenset()
    observed_at: int = field(default=0, compare=False)


@dataclass(frozen=True)
class DeviceRemoved:
    device: DeviceId
    observed_at: int = field(default=0, compare=False)


@dataclass(frozen=True)
class LinkAdded:
    link: Link
    observed_at: int = field(default=0, compare=False)


@dataclass(frozen=True)
class LinkRemoved:
    link: Link
    observed_at: int = field(default=0, compare=False)


@dataclass(frozen=True)
class HostAdded:
    host: Host
    observed_at: int = field(default=0, compare=False)


@dataclass(frozen=True)
class HostRemoved:
    host: Host
    observed_at: int = field(default=0, compare=False)


TopologyEvent = Union[DeviceAdded, DeviceRemoved, LinkAdded, LinkRemoved, HostAdded, HostRemoved]


# -- JSON helpers shared by the CLI and topology files --------------------------

def match_to_dict(m: MatchFields) -> dict:
    out = {}
    for name in m.__dataclass_fields__:
        v = getattr(m, name)
        if v is not None:
            out[name] = str(v) if name.startswith("ipv4") else v
    return out


def action_to_dict(a) -> dict:
    if isinstance(a, Output):
        return {"output": a.port_no}
    if isinstance(a, SetEthDst):
        return {"set_eth_dst": a.mac}
    return {"drop": True}


def action_from_dict(d: dict):
    if "output" in d:
        port = d["output"]
        if isinstance(port, str):
            port = RESERVED_PORTS[port.upper()] if port.upper() in RESERVED_PORTS else int(port)
        return Output(port)
    if "set_eth_dst" in d:
        return SetEthDst(d["set_eth_dst"])
    if d.get("drop"):
        return Drop()
    raise ValueError(f"unknown action: {d!r}")


def rule_to_dict(rule: FlowRule) -> dict:
    return {
        "device": rule.device.render_onos(),
        "table_id": rule.table_id,
        "priority": rule.priority,
        "match": match_to_dict(rule.match),
        "actions": [action_to_dict(a) for a in rule.actions],
        "idle_timeout_s": rule.idle_timeout_s,
        "hard_timeout_s": rule.hard_timeout_s,
    }


def rule_from_dict(d: dict) -> FlowRule:
    return FlowRule(
        device=normalize_device_id(d["device"]),
        match=MatchFields(**d.get("match", {})),
        actions=tuple(action_from_dict(a) for a in d.get("actions", [{"drop": True}])),
        priority=int(d.get("priority", 100)),
        table_id=int(d.get("table_id", 0)),
        idle_timeout_s=int(d.get("idle_timeout_s", 0)),
        hard_timeout_s=int(d.get("hard_timeout_s", 0)),
    )
