"""ONOS REST northbound driver."""
from __future__ import annotations

import ipaddress
import logging
import time
from typing import List, Optional, Tuple

from umbrella.drivers.base import (
    CapabilitySet,
    Driver,
    DriverConfig,
    NotFound,
    ProtocolError,
    Unsupported,
    register_driver,
)
from umbrella.drivers.rest import RestClient
from umbrella.model import (
    RESERVED_PORT_NAMES,
    RESERVED_PORTS,
    DeviceId,
    Drop,
    FlowHandle,
    FlowRule,
    FlowStats,
    Host,
    InvalidSnapshot,
    Link,
    MalformedId,
    MatchFields,
    Output,
    PortId,
    PortStats,
    SetEthDst,
    TopologySnapshot,
    normalize_device_id,
)

log = logging.getLogger(__name__)

DEFAULT_PATHS = {
    "devices": "/onos/v1/devices",
    "links": "/onos/v1/links",
    "hosts": "/onos/v1/hosts",
    "flows": "/onos/v1/flows",
    "flow_of_device": "/onos/v1/flows/{deviceId}",
    "stats_ports": "/onos/v1/statistics/ports/{deviceId}",
}
DEFAULT_APP_ID = "org.umbrella.app"


def _render_port(port_no: int):
    return RESERVED_PORT_NAMES.get(port_no, port_no)


def _parse_port(value) -> int:
    if isinstance(value, bool):
        raise ProtocolError(f"bad port value {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        if value.upper() in RESERVED_PORTS:
            return RESERVED_PORTS[value.upper()]
        if value.isdigit():
            return int(value)
    raise ProtocolError(f"bad port value {value!r}")


def _counter(entry: dict, key: str) -> int:
    value = entry.get(key, 0)
    if isinstance(value, str) and value.lstrip("-").isdigit():
        value = int(value)
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise ProtocolError(f"counter {key}={value!r} is not an unsigned integer")
    return value


# -- flow rules -------------------------------------------------------------------

def onos_render_flow(rule: FlowRule) -> dict:
    m = rule.match
    criteria = []
    if m.in_port is not None:
        criteria.append({"type": "IN_PORT", "port": _render_port(m.in_port)})
    if m.eth_src is not None:
        criteria.append({"type": "ETH_SRC", "mac": m.eth_src})
    if m.eth_dst is not None:
        criteria.append({"type": "ETH_DST", "mac": m.eth_dst})
    if m.eth_type is not None:
        criteria.append({"type": "ETH_TYPE", "ethType": f"0x{m.eth_type:x}"})
    if m.ipv4_src is not None:
        criteria.append({"type": "IPV4_SRC", "ip": str(m.ipv4_src)})
    if m.ipv4_dst is not None:
        criteria.append({"type": "IPV4_DST", "ip": str(m.ipv4_dst)})

    instructions = []
    for action in rule.actions:
        if isinstance(action, Output):
            instructions.append({"type": "OUTPUT", "port": str(_render_port(action.port_no))})
        elif isinstance(action, SetEthDst):
            instructions.append({"type": "L2MODIFICATION", "subtype": "ETH_DST", "mac": action.mac})
        elif isinstance(action, Drop):
            instructions.append({"type": "NOACTION"})
        else:
            raise Unsupported(f"ONOS has no mapping for {action!r}")

    body = {
        "priority": rule.priority,
        "timeout": rule.idle_timeout_s,
        "isPermanent": rule.idle_timeout_s == 0 and rule.hard_timeout_s == 0,
        "deviceId": rule.device.render_onos(),
        "tableId": rule.table_id,
    }
    if rule.hard_timeout_s:
        body["hardTimeout"] = rule.hard_timeout_s
    body["treatment"] = {"instructions": instructions}
    body["selector"] = {"criteria": criteria}
    return body


def onos_parse_flow(entry: dict) -> FlowRule:
    try:
        fields = {}
        for c in entry.get("selector", {}).get("criteria", []):
            kind = c["type"]
            if kind == "IN_PORT":
                fields["in_port"] = _parse_port(c["port"])
            elif kind in ("ETH_SRC", "ETH_DST"):
                fields[kind.lower()] = c["mac"]
            elif kind == "ETH_TYPE":
                v = c["ethType"]
                fields["eth_type"] = int(v, 16) if isinstance(v, str) else int(v)
            elif kind in ("IPV4_SRC", "IPV4_DST"):
                fields[kind.lower()] = c["ip"]
            else:
                raise ProtocolError(f"unsupported ONOS criterion {kind}")
        actions = []
        for ins in entry.get("treatment", {}).get("instructions", []):
            kind = ins["type"]
            if kind == "OUTPUT":
                actions.append(Output(_parse_port(ins["port"])))
            elif kind == "L2MODIFICATION" and ins.get("subtype") == "ETH_DST":
                actions.append(SetEthDst(ins["mac"]))
            elif kind == "NOACTION":
                actions.append(Drop())
            else:
                raise ProtocolError(f"unsupported ONOS instruction {kind}")
        if not actions:
            actions = [Drop()]
        permanent = bool(entry.get("isPermanent", False))
        return FlowRule(
            device=normalize_device_id(entry["deviceId"]),
            match=MatchFields(**fields),
            actions=tuple(actions),
            priority=int(entry["priority"]),
            table_id=int(entry.get("tableId", 0)),
            idle_timeout_s=0 if permanent else int(entry.get("timeout", 0)),
            hard_timeout_s=int(entry.get("hardTimeout", 0)),
        )
    except ProtocolError:
        raise
    except (KeyError, TypeError, ValueError, MalformedId) as exc:
        raise ProtocolError(f"malformed ONOS flow entry: {exc}") from exc


# -- topology ------------------------------------------------------------------------

def _items(body, key: str) -> list:
    if not isinstance(body, dict) or not isinstance(body.get(key, []), list):
        raise ProtocolError(f"expected an object with a {key!r} list")
    return body.get(key, [])


def onos_parse_topology(devices_body, links_body, hosts_body, captured_at: int = 0) -> TopologySnapshot:
    """Build a snapshot from the three ONOS topology resources.

    Devices marked unavailable (or not OpenFlow) are dropped together with the
    links and hosts that touch them; references to devices absent from the
    devices body are a protocol error.
    """
    devices = {}
    skipped = set()
    for d in _items(devices_body, "devices"):
        raw = d.get("id")
        try:
            dev = normalize_device_id(raw)
        except MalformedId:
            skipped.add(raw)
            continue
        if d.get("available", True):
            devices[dev] = set()
        else:
            skipped.add(raw)

    def endpoint(device_text, port_value) -> Optional[PortId]:
        if device_text in skipped:
            return None
        try:
            dev = normalize_device_id(device_text)
        except MalformedId as exc:
            raise ProtocolError(str(exc)) from exc
        if dev not in devices:
            raise ProtocolError(f"reference to unknown device {device_text}")
        try:
            pid = PortId(dev, _parse_port(port_value))
        except ValueError as exc:
            raise ProtocolError(f"bad port on {device_text}: {exc}") from exc
        devices[dev].add(pid.port_no)
        return pid

    links = set()
    for l in _items(links_body, "links"):
        if l.get("state", "ACTIVE") != "ACTIVE":
            continue
        try:
            src = endpoint(l["src"]["device"], l["src"]["port"])
            dst = endpoint(l["dst"]["device"], l["dst"]["port"])
        except (KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed ONOS link: {exc}") from exc
        if src is not None and dst is not None:
            links.add(Link(src, dst))

    hosts = []
    for h in _items(hosts_body, "hosts"):
        try:
            locations = h.get("locations") or [h["location"]]
            loc = locations[0]
            att = endpoint(loc["elementId"], loc["port"])
            ip = None
            for addr in h.get("ipAddresses", []):
                try:
                    ip = ipaddress.IPv4Address(addr)
                    break
                except ValueError:
                    continue
            if att is not None:
                hosts.append(Host(h["mac"], att, ip))
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise ProtocolError(f"malformed ONOS host: {exc}") from exc

    try:
        return TopologySnapshot(devices, links, hosts, captured_at)
    except InvalidSnapshot as exc:
        raise ProtocolError(str(exc)) from exc


def onos_parse_flow_stats(body, handle: FlowHandle) -> FlowStats:
    entries = body.get("flows", [body]) if isinstance(body, dict) else None
    if not entries:
        raise NotFound(f"flow {handle.driver_flow_id} not reported by ONOS")
    entry = entries[0]
    return FlowStats(handle, _counter(entry, "packets"), _counter(entry, "bytes"), _counter(entry, "life"))


def onos_parse_port_stats(body, device: DeviceId) -> List[PortStats]:
    out = []
    for block in _items(body, "statistics"):
        if "device" in block and normalize_device_id(block["device"]) != device:
            continue
        for p in block.get("ports", []):
            port_no = _parse_port(p["port"])
            if port_no in RESERVED_PORT_NAMES or port_no == 0:
                continue
            out.append(PortStats(
                PortId(device, port_no),
                rx_packets=_counter(p, "packetsReceived"),
                tx_packets=_counter(p, "packetsSent"),
                rx_bytes=_counter(p, "bytesReceived"),
                tx_bytes=_counter(p, "bytesSent"),
            ))
    return sorted(out, key=lambda s: s.port.port_no)


class OnosDriver(Driver):
    def __init__(self, config: DriverConfig):
        self.config = config
        self.http = RestClient(config)
        self.paths = {k: config.extras.get(f"{k}_path", v) for k, v in DEFAULT_PATHS.items()}
        self.app_id = config.extras.get("app_id", DEFAULT_APP_ID)

    def _device_path(self, key: str, device: DeviceId) -> str:
        return self.paths[key].format(deviceId=device.render_onos())

    def capabilities(self) -> CapabilitySet:
        return CapabilitySet(topology_read=True, flow_write=True, flow_stats=True,
                             port_stats=True, event_push=False)

    def get_topology(self) -> TopologySnapshot:
        devices = self.http.get_json(self.paths["devices"])
        links = self.http.get_json(self.paths["links"])
        hosts = self.http.get_json(self.paths["hosts"])
        return onos_parse_topology(devices, links, hosts, time.monotonic_ns())

    def install_flow(self, rule: FlowRule) -> FlowHandle:
        path = f"{self._device_path('flow_of_device', rule.device)}?appId={self.app_id}"
        resp = self.http.request("POST", path, onos_render_flow(rule))
        location = resp.headers.get("Location", "")
        flow_id = location.rstrip("/").rsplit("/", 1)[-1] if location else ""
        if not flow_id:
            try:
                flow_id = str(resp.json()["flows"][0]["flowId"])
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ProtocolError("ONOS did not report the new flow id") from exc
        return FlowHandle(rule.device, flow_id)

    def _flow_path(self, handle: FlowHandle) -> str:
        return f"{self._device_path('flow_of_device', handle.device)}/{handle.driver_flow_id}"

    def remove_flow(self, handle: FlowHandle) -> None:
        # ONOS answers DELETE with 204 even for unknown ids, so look first.
        body = self.http.get_json(self._flow_path(handle))
        if not _items(body, "flows"):
            raise NotFound(f"no flow {handle.driver_flow_id} on {handle.device}")
        self.http.request("DELETE", self._flow_path(handle))

    def list_flows(self, device: Optional[DeviceId] = None) -> List[Tuple[FlowHandle, FlowRule]]:
        path = self.paths["flows"] if device is None else self._device_path("flow_of_device", device)
        out = []
        for entry in _items(self.http.get_json(path), "flows"):
            if entry.get("state") in ("PENDING_REMOVE", "REMOVED"):
                continue
            try:
                rule = onos_parse_flow(entry)
            except ProtocolError as exc:
                log.warning("skipping flow %s: %s", entry.get("id"), exc)
                continue
            out.append((FlowHandle(rule.device, str(entry["id"])), rule))
        return out

    def get_flow_stats(self, handle: FlowHandle) -> FlowStats:
        return onos_parse_flow_stats(self.http.get_json(self._flow_path(handle)), handle)

    def get_port_stats(self, device: DeviceId) -> List[PortStats]:
        return onos_parse_port_stats(self.http.get_json(self._device_path("stats_ports", device)), device)

    def close(self) -> None:
        self.http.close()


register_driver("onos", OnosDriver)
