"""In-process controller and data-plane simulator on a virtual clock.

Rule installs take effect after a configurable latency; packet trains are
forwarded hop by hop through whatever rules are active at each packet's
emission instant.  Nothing here reads the wall clock, so every run with the
same inputs produces the same numbers.

Between two scheduled state changes (rule activation, expiry, removal,
topology mutation) the forwarding state is constant, so all packets a train
emits in that window share one fate.  The simulator forwards one
representative packet per window and scales the counters, which keeps a
10 s train at 1 pkt/ms cheap without changing any observable result.
"""
from __future__ import annotations

import enum
import heapq
import json
import os
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Tuple, Union

from umbrella.drivers.base import (
    CapabilitySet,
    Driver,
    DriverConfig,
    NotFound,
    Rejected,
    register_driver,
)
from umbrella.mock.topospec import TopologySpec
from umbrella.model import (
    RESERVED_PORTS,
    DeviceId,
    Drop,
    FlowHandle,
    FlowRule,
    FlowStats,
    Host,
    Link,
    Output,
    PacketDescriptor,
    PortId,
    PortStats,
    SetEthDst,
    TopologySnapshot,
    flow_matches,
    normalize_device_id,
    normalize_mac,
)

NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


class InstallMode(enum.Enum):
    SEQUENTIAL = "seq"
    PARALLEL = "par"

    @classmethod
    def parse(cls, text: Union[str, "InstallMode"]) -> "InstallMode":
        if isinstance(text, InstallMode):
            return text
        t = text.strip().lower()
        if t in ("seq", "sequential"):
            return cls.SEQUENTIAL
        if t in ("par", "parallel"):
            return cls.PARALLEL
        raise ValueError(f"unknown install mode {text!r}")


class InvalidMutation(ValueError):
    pass


class ClockRegression(ValueError):
    pass


class UnknownHost(NotFound):
    pass


def ms_to_ns(ms) -> int:
    value = Fraction(ms) * NS_PER_MS
    if value < 0:
        raise ValueError(f"negative duration: {ms} ms")
    return round(value)


@dataclass(frozen=True)
class LatencyModel:
    """Controller-side install timing.

    Sequential: the controller handles one request at a time, so the k-th
    install of a batch activates after the sum of the first k latencies.
    Parallel: every install activates ``base_rpc_ms + per_rule_install_ms``
    after it was issued.
    """

    per_rule_install_ms: Fraction = Fraction(0)
    install_mode: InstallMode = InstallMode.SEQUENTIAL
    base_rpc_ms: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "per_rule_install_ms", Fraction(self.per_rule_install_ms))
        object.__setattr__(self, "base_rpc_ms", Fraction(self.base_rpc_ms))
        object.__setattr__(self, "install_mode", InstallMode.parse(self.install_mode))
        if self.per_rule_install_ms < 0 or self.base_rpc_ms < 0:
            raise ValueError("latencies must be non-negative")

    @property
    def per_rule_ns(self) -> int:
        return ms_to_ns(self.per_rule_install_ms)

    @property
    def base_rpc_ns(self) -> int:
        return ms_to_ns(self.base_rpc_ms)


@dataclass(frozen=True)
class PacketTrain:
    src_host: str
    dst_host: str
    start_at_ns: int
    interval_ns: int
    count: int
    packet_bytes: int = 64

    def __post_init__(self):
        object.__setattr__(self, "src_host", normalize_mac(self.src_host))
        object.__setattr__(self, "dst_host", normalize_mac(self.dst_host))
        if self.interval_ns <= 0:
            raise ValueError("interval_ns must be positive")
        if self.count < 0 or self.start_at_ns < 0:
            raise ValueError("count and start_at_ns must be non-negative")

    def emission_ns(self, i: int) -> int:
        return self.start_at_ns + i * self.interval_ns

    @property
    def last_emission_ns(self) -> int:
        return self.emission_ns(max(self.count - 1, 0))


@dataclass(frozen=True)
class DeliveryReport:
    sent: int
    received: int
    first_received_index: Optional[int]

    @property
    def lost(self) -> int:
        return self.sent - self.received


# -- topology mutations ---------------------------------------------------------

@dataclass(frozen=True)
class AddDevice:
    device: DeviceId
    ports: frozenset = frozenset()


@dataclass(frozen=True)
class RemoveDevice:
    device: DeviceId


@dataclass(frozen=True)
class AddLink:
    link: Link


@dataclass(frozen=True)
class RemoveLink:
    link: Link


@dataclass(frozen=True)
class AddHost:
    host: Host


@dataclass(frozen=True)
class RemoveHost:
    mac: str


Mutation = Union[AddDevice, RemoveDevice, AddLink, RemoveLink, AddHost, RemoveHost]


class _Entry:
    __slots__ = ("handle", "rule", "seq", "active_at", "state", "last_hit", "packets", "bytes")

    def __init__(self, handle: FlowHandle, rule: FlowRule, seq: int):
        self.handle = handle
        self.rule = rule
        self.seq = seq
        self.active_at: Optional[int] = None
        self.state = "pending"
        self.last_hit: Optional[int] = None
        self.packets = 0
        self.bytes = 0


class _TrainState:
    __slots__ = ("train", "order", "next_index", "received", "first_received", "packet", "dst",
                 "walk", "walk_result", "walk_epoch")

    def __init__(self, train: PacketTrain, order: int, packet: PacketDescriptor, dst: Host):
        self.train = train
        self.order = order
        self.next_index = 0
        self.received = 0
        self.first_received: Optional[int] = None
        self.packet = packet
        self.dst = dst
        # last forwarding walk: per-hop (device, packet, #hits, #rx, #tx) and its outcome
        self.walk: Optional[list] = None
        self.walk_result = None
        self.walk_epoch = -1

    def next_time(self) -> Optional[int]:
        if self.next_index >= self.train.count:
            return None
        return self.train.emission_ns(self.next_index)

    def report(self) -> DeliveryReport:
        return DeliveryReport(self.next_index, self.received, self.first_received)


class MockController(Driver):
    """Simulated controller implementing the full driver contract."""

    def __init__(self, spec: Optional[TopologySpec] = None, latency: Optional[LatencyModel] = None):
        spec = (spec or TopologySpec()).validate()
        self.latency = latency or LatencyModel()
        self._lock = threading.RLock()
        self._now = 0
        self._devices: Dict[DeviceId, frozenset] = dict(spec.devices)
        self._links = set(spec.links)
        self._link_from: Dict[PortId, Link] = {l.src: l for l in spec.links}
        self._hosts: Dict[str, Host] = {h.mac: h for h in spec.hosts}
        self._flows: Dict[str, _Entry] = {}
        self._tables: Dict[DeviceId, List[_Entry]] = {}
        self._ports: Dict[PortId, List[int]] = {}
        self._heap: List[tuple] = []
        self._seq = 0
        self._busy_until = 0
        self._trains: Dict[int, _TrainState] = {}
        # change counters that let a train reuse the unchanged prefix of its last walk
        self._epoch = 0
        self._topo_epoch = 0
        self._device_epoch: Dict[DeviceId, int] = {}

    # -- virtual clock --------------------------------------------------------

    @property
    def now_ns(self) -> int:
        return self._now

    def advance_to(self, t_ns: int) -> None:
        """Process activations up to ``t_ns`` and emissions strictly before it.

        Packets emitted exactly at ``t_ns`` stay pending so that contract calls
        made at that instant are seen by them; they are forwarded when the
        clock moves on or a report is read.
        """
        with self._lock:
            if t_ns < self._now:
                raise ClockRegression(f"cannot move clock from {self._now} back to {t_ns}")
            self._process_until(t_ns, packets_at_end=False)
            self._now = t_ns

    def advance_by(self, dt_ns: int) -> None:
        self.advance_to(self._now + dt_ns)

    # -- driver contract --------------------------------------------------------

    def capabilities(self) -> CapabilitySet:
        return CapabilitySet(True, True, True, True, True)

    def get_topology(self) -> TopologySnapshot:
        with self._lock:
            self._rpc()
            return TopologySnapshot(self._devices, self._links, self._hosts.values(), self._now)

    def install_flow(self, rule: FlowRule) -> FlowHandle:
        with self._lock:
            ports = self._devices.get(rule.device)
            if ports is None:
                raise NotFound(f"unknown device {rule.device}")
            for a in rule.actions:
                if isinstance(a, Output) and a.port_no not in ports and a.port_no not in RESERVED_PORTS.values():
                    raise Rejected(f"{rule.device} has no port {a.port_no}")
            for entry in self._live_entries():
                if entry.rule.key == rule.key:
                    if entry.rule == rule:
                        return entry.handle
                    self._retire(entry)
                    break
            self._seq += 1
            handle = FlowHandle(rule.device, f"mock-{self._seq}")
            entry = _Entry(handle, rule, self._seq)
            self._flows[handle.driver_flow_id] = entry
            at = self._activation_time()
            if at <= self._now:
                self._activate(entry, self._now)
            else:
                self._schedule(at, "activate", entry)
            return handle

    def remove_flow(self, handle: FlowHandle) -> None:
        with self._lock:
            self._rpc()
            entry = self._flows.get(handle.driver_flow_id)
            if entry is None or entry.state == "removed" or entry.handle.device != handle.device:
                raise NotFound(f"no flow {handle.driver_flow_id} on {handle.device}")
            self._retire(entry)

    def list_flows(self, device: Optional[DeviceId] = None) -> List[Tuple[FlowHandle, FlowRule]]:
        with self._lock:
            self._rpc()
            return [(e.handle, e.rule) for e in self._live_entries()
                    if device is None or e.rule.device == device]

    def get_flow_stats(self, handle: FlowHandle) -> FlowStats:
        with self._lock:
            self._process_until(self._now)
            self._rpc()
            entry = self._flows.get(handle.driver_flow_id)
            if entry is None or entry.state == "removed" or entry.handle.device != handle.device:
                raise NotFound(f"no flow {handle.driver_flow_id} on {handle.device}")
            duration = 0 if entry.active_at is None else (self._now - entry.active_at) // NS_PER_S
            return FlowStats(entry.handle, entry.packets, entry.bytes, duration)

    def get_port_stats(self, device: DeviceId) -> List[PortStats]:
        with self._lock:
            self._process_until(self._now)
            self._rpc()
            ports = self._devices.get(device)
            if ports is None:
                raise NotFound(f"unknown device {device}")
            out = []
            for p in sorted(ports):
                pid = PortId(device, p)
                rx_p, tx_p, rx_b, tx_b = self._ports.get(pid, (0, 0, 0, 0))
                out.append(PortStats(pid, rx_p, tx_p, rx_b, tx_b))
            return out

    # -- traffic ------------------------------------------------------------------

    def start_packet_train(self, train: PacketTrain) -> int:
        """Schedule a train; packets are forwarded as the clock passes them."""
        with self._lock:
            src = self._hosts.get(train.src_host)
            dst = self._hosts.get(train.dst_host)
            if src is None or dst is None:
                missing = train.src_host if src is None else train.dst_host
                raise UnknownHost(f"no host with MAC {missing}")
            if train.start_at_ns < self._now:
                raise ClockRegression(f"train starts at {train.start_at_ns}, clock is at {self._now}")
            packet = PacketDescriptor(
                in_port=src.attachment.port_no,
                eth_src=src.mac,
                eth_dst=dst.mac,
                ipv4_src=src.ip,
                ipv4_dst=dst.ip,
            )
            tid = len(self._trains) + 1
            self._trains[tid] = _TrainState(train, tid, packet, dst)
            return tid

    def train_report(self, train_id: int) -> DeliveryReport:
        with self._lock:
            self._process_until(self._now)
            return self._trains[train_id].report()

    def run_packet_train(self, train: PacketTrain) -> DeliveryReport:
        with self._lock:
            tid = self.start_packet_train(train)
            self.advance_to(max(self._now, train.last_emission_ns))
            return self.train_report(tid)

    # -- topology mutation -------------------------------------------------------

    def apply_mutation(self, mutation: Mutation) -> None:
        with self._lock:
            if isinstance(mutation, AddDevice):
                dev = normalize_device_id(mutation.device)
                if dev in self._devices:
                    raise InvalidMutation(f"device {dev} already present")
                self._devices[dev] = frozenset(mutation.ports)
            elif isinstance(mutation, RemoveDevice):
                dev = normalize_device_id(mutation.device)
                if dev not in self._devices:
                    raise InvalidMutation(f"device {dev} not present")
                for link in [l for l in self._links if dev in (l.src.device, l.dst.device)]:
                    self._drop_link(link)
                for mac in [m for m, h in self._hosts.items() if h.attachment.device == dev]:
                    del self._hosts[mac]
                for entry in [e for e in self._live_entries() if e.rule.device == dev]:
                    self._retire(entry)
                for p in self._devices.pop(dev):
                    self._ports.pop(PortId(dev, p), None)
            elif isinstance(mutation, AddLink):
                link = mutation.link
                for end in (link.src, link.dst):
                    if end.port_no not in self._devices.get(end.device, ()):
                        raise InvalidMutation(f"link endpoint {end} does not exist")
                if link in self._links:
                    raise InvalidMutation(f"link {link} already present")
                if link.src in self._link_from:
                    raise InvalidMutation(f"port {link.src} already has an outgoing link")
                self._links.add(link)
                self._link_from[link.src] = link
            elif isinstance(mutation, RemoveLink):
                if mutation.link not in self._links:
                    raise InvalidMutation(f"link {mutation.link} not present")
                self._drop_link(mutation.link)
            elif isinstance(mutation, AddHost):
                host = mutation.host
                if host.mac in self._hosts:
                    raise InvalidMutation(f"host {host.mac} already present")
                if host.attachment.port_no not in self._devices.get(host.attachment.device, ()):
                    raise InvalidMutation(f"host attachment {host.attachment} does not exist")
                self._hosts[host.mac] = host
            elif isinstance(mutation, RemoveHost):
                mac = normalize_mac(mutation.mac)
                if mac not in self._hosts:
                    raise InvalidMutation(f"host {mac} not present")
                del self._hosts[mac]
            else:
                raise InvalidMutation(f"unknown mutation {mutation!r}")
            self._epoch += 1
            self._topo_epoch = self._epoch

    def _drop_link(self, link: Link) -> None:
        self._links.discard(link)
        if self._link_from.get(link.src) == link:
            del self._link_from[link.src]

    # -- internals ------------------------------------------------------------------

    def _rpc(self) -> None:
        if self.latency.install_mode is InstallMode.SEQUENTIAL and self.latency.base_rpc_ns:
            self._busy_until = max(self._busy_until, self._now) + self.latency.base_rpc_ns

    def _activation_time(self) -> int:
        lat = self.latency
        if lat.install_mode is InstallMode.SEQUENTIAL:
            self._busy_until = max(self._busy_until, self._now) + lat.base_rpc_ns + lat.per_rule_ns
            return self._busy_until
        return self._now + lat.base_rpc_ns + lat.per_rule_ns

    def _live_entries(self) -> List[_Entry]:
        return sorted((e for e in self._flows.values() if e.state != "removed"), key=lambda e: e.seq)

    def _schedule(self, t: int, kind: str, entry: _Entry) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, entry))

    def _touch(self, device: DeviceId) -> None:
        self._epoch += 1
        self._device_epoch[device] = self._epoch

    def _activate(self, entry: _Entry, t: int) -> None:
        self._touch(entry.rule.device)
        entry.state = "active"
        entry.active_at = t
        entry.last_hit = None
        if entry.rule.table_id == 0:
            table = self._tables.setdefault(entry.rule.device, [])
            table.append(entry)
            # highest priority first; equal priority keeps install order
            table.sort(key=lambda e: (-e.rule.priority, e.seq))
        if entry.rule.hard_timeout_s:
            self._schedule(t + entry.rule.hard_timeout_s * NS_PER_S, "expire", entry)
        if entry.rule.idle_timeout_s:
            self._schedule(t + entry.rule.idle_timeout_s * NS_PER_S, "idle", entry)

    def _retire(self, entry: _Entry) -> None:
        self._touch(entry.rule.device)
        if entry.state == "active" and entry.rule.table_id == 0:
            self._tables[entry.rule.device].remove(entry)
        entry.state = "removed"

    def _handle_event(self, t: int, kind: str, entry: _Entry) -> None:
        if entry.state == "removed":
            return
        if kind == "activate":
            self._activate(entry, t)
        elif kind == "expire":
            self._retire(entry)
        elif kind == "idle":
            last = entry.last_hit if entry.last_hit is not None else entry.active_at
            if t - last >= entry.rule.idle_timeout_s * NS_PER_S:
                self._retire(entry)

    def _next_train(self) -> Tuple[Optional[int], Optional[_TrainState]]:
        best_t, best = None, None
        for ts in self._trains.values():
            t = ts.next_time()
            if t is not None and (best_t is None or t < best_t):
                best_t, best = t, ts
        return best_t, best

    def _process_until(self, t_end: int, packets_at_end: bool = True) -> None:
        # State changes at instant t apply before packets emitted at t.
        pk_end = t_end if packets_at_end else t_end - 1
        while True:
            ev_t = self._heap[0][0] if self._heap else None
            pk_t, ts = self._next_train()
            if ev_t is not None and ev_t <= t_end and (pk_t is None or ev_t <= pk_t):
                t, _, kind, entry = heapq.heappop(self._heap)
                self._now = max(self._now, t)
                self._handle_event(t, kind, entry)
                continue
            if pk_t is None or pk_t > pk_end:
                return
            limit = pk_end if ev_t is None else min(pk_end, ev_t - 1)
            self._emit_window(ts, limit)

    def _emit_window(self, ts: _TrainState, limit: int) -> None:
        train = ts.train
        first = ts.next_index
        last = min(train.count - 1, (limit - train.start_at_ns) // train.interval_ns)
        delivered, hits, rx, tx = self._forward(ts)
        if any(e.rule.idle_timeout_s and train.interval_ns >= e.rule.idle_timeout_s * NS_PER_S
               for e in hits):
            last = first
        k = last - first + 1
        nbytes = k * train.packet_bytes
        last_t = train.emission_ns(last)
        for e in hits:
            e.packets += k
            e.bytes += nbytes
            if e.rule.idle_timeout_s:
                e.last_hit = last_t if e.last_hit is None else max(e.last_hit, last_t)
                self._schedule(last_t + e.rule.idle_timeout_s * NS_PER_S, "idle", e)
        for pid in rx:
            c = self._ports.setdefault(pid, [0, 0, 0, 0])
            c[0] += k
            c[2] += nbytes
        for pid in tx:
            c = self._ports.setdefault(pid, [0, 0, 0, 0])
            c[1] += k
            c[3] += nbytes
        if delivered:
            ts.received += k
            if ts.first_received is None:
                ts.first_received = first
        ts.next_index = last + 1

    def _lookup(self, device: DeviceId, packet: PacketDescriptor) -> Optional[_Entry]:
        for entry in self._tables.get(device, ()):
            if flow_matches(entry.rule, packet):
                return entry
        return None

    def _forward(self, ts: _TrainState):
        """Walk one packet of ``ts``; return (delivered, hits, rx ports, tx ports).

        Hops before the first device whose table changed since the previous
        walk are reused as they were.
        """
        resume = 0
        if ts.walk is not None and ts.walk_epoch >= self._topo_epoch:
            changed = [i for i, hop in enumerate(ts.walk) if self._device_epoch.get(hop[0], 0) > ts.walk_epoch]
            if not changed:
                return ts.walk_result
            resume = changed[0]
        ts.walk_epoch = self._epoch
        if resume:
            walk = ts.walk[:resume]
            device, packet, n_hits, n_rx, n_tx = ts.walk[resume]
            _, hits, rx, tx = ts.walk_result
            hits, rx, tx = hits[:n_hits], rx[:n_rx], tx[:n_tx]
        else:
            walk, hits, rx, tx = [], [], [], []
            src = self._hosts.get(ts.packet.eth_src)
            device, packet = (None if src is None else src.attachment.device), ts.packet
        ts.walk = walk
        delivered = self._walk(device, packet, ts.dst, walk, hits, rx, tx)
        ts.walk_result = (delivered, hits, rx, tx)
        return ts.walk_result

    def _walk(self, device, packet: PacketDescriptor, dst: Host, walk: list,
              hits: List[_Entry], rx: List[PortId], tx: List[PortId]) -> bool:
        seen = {(hop[0], hop[1].in_port, hop[1].eth_dst) for hop in walk}
        while True:
            ports = self._devices.get(device)
            if ports is None:
                return False
            walk.append((device, packet, len(hits), len(rx), len(tx)))
            rx.append(PortId(device, packet.in_port))
            state = (device, packet.in_port, packet.eth_dst)
            if state in seen:
                return False
            seen.add(state)
            entry = self._lookup(device, packet)
            if entry is None:
                return False
            hits.append(entry)
            out = None
            for action in entry.rule.actions:
                if isinstance(action, Drop):
                    return False
                if isinstance(action, SetEthDst):
                    packet = PacketDescriptor(packet.in_port, packet.eth_src, action.mac,
                                              packet.eth_type, packet.ipv4_src, packet.ipv4_dst)
                elif isinstance(action, Output):
                    out = action.port_no
            if out == RESERVED_PORTS["IN_PORT"]:
                out = packet.in_port
            if out is None or out not in ports:
                return False
            egress = PortId(device, out)
            tx.append(egress)
            if egress == dst.attachment:
                return True
            link = self._link_from.get(egress)
            if link is None or link.dst.device not in self._devices:
                return False
            device = link.dst.device
            packet = PacketDescriptor(link.dst.port_no, packet.eth_src, packet.eth_dst,
                                      packet.eth_type, packet.ipv4_src, packet.ipv4_dst)


def mock_with_topology(spec: TopologySpec, latency: Optional[LatencyModel] = None) -> MockController:
    return MockController(spec, latency)


def _from_config(config: DriverConfig) -> MockController:
    extras = config.extras
    topo = extras.get("topology")
    spec = TopologySpec()
    if topo:
        if os.path.exists(topo):
            with open(topo) as fh:
                topo = fh.read()
        spec = TopologySpec.from_json(json.loads(topo))
    latency = LatencyModel(
        per_rule_install_ms=Fraction(extras.get("per_rule_ms", "0")),
        install_mode=extras.get("install_mode", "seq"),
        base_rpc_ms=Fraction(extras.get("base_rpc_ms", "0")),
    )
    return MockController(spec, latency)


register_driver("mock", _from_config)
