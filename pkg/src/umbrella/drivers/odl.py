"""OpenDaylight RESTCONF northbound driver.

Topology and statistics come from the operational datastore; flow writes go
to the config datastore.  Flows are keyed by a content hash of their slot
fields, so re-installing an identical rule overwrites instead of duplicating.
"""
from __future__ import annotations

import hashlib
import ipaddress
import logging
import time
from typing import List, Optional, Tuple
from urllib.parse import quote

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
    match_to_dict,
    normalize_device_id,
)

log = logging.getLogger(__name__)

DEFAULT_PATHS = {
    "topology": "/restconf/operational/network-topology:network-topology",
    "nodes": "/restconf/operational/opendaylight-inventory:nodes",
    "config_nodes": "/restconf/config/opendaylight-inventory:nodes",
    "flow_write": "/restconf/config/opendaylight-inventory:nodes/node/{nodeId}"
                  "/flow-node-inventory:table/{tableId}/flow/{flowId}",
}
OPER_FLOW = ("/restconf/operational/opendaylight-inventory:nodes/node/{nodeId}"
             "/flow-node-inventory:table/{tableId}/flow/{flowId}")

FLOW_KEY = "flow-node-inventory:flow"
TABLE_KEY = "flow-node-inventory:table"
FLOW_STATS_KEY = "opendaylight-flow-statistics:flow-statistics"
PORT_STATS_KEY = "opendaylight-port-statistics:flow-capable-node-connector-statistics"


def odl_flow_id(rule: FlowRule) -> str:
    """Stable id derived from (device, table, priority, match)."""
    m = match_to_dict(rule.match)
    canon = f"{rule.device.dpid}|{rule.table_id}|{rule.priority}|{sorted(m.items())}"
    return "umbrella-" + hashlib.sha256(canon.encode()).hexdigest()[:20]


def _port_text(port_no: int) -> str:
    return RESERVED_PORT_NAMES.get(port_no, str(port_no))


def _parse_port_text(text) -> int:
    if isinstance(text, int) and not isinstance(text, bool):
        return text
    if not isinstance(text, str):
        raise ProtocolError(f"bad node connector {text!r}")
    tail = text.rsplit(":", 1)[-1]
    if tail.upper() in RESERVED_PORTS:
        return RESERVED_PORTS[tail.upper()]
    if tail.upper() == "INPORT":
        return RESERVED_PORTS["IN_PORT"]
    if tail.isdigit():
        return int(tail)
    raise ProtocolError(f"bad node connector {text!r}")


def _split_tp(tp: str) -> Tuple[DeviceId, str]:
    node, _, port = tp.rpartition(":")
    try:
        return normalize_device_id(node), port
    except MalformedId as exc:
        raise ProtocolError(f"bad termination point {tp!r}") from exc


def odl_render_flow(rule: FlowRule, flow_id: Optional[str] = None) -> dict:
    flow_id = flow_id or odl_flow_id(rule)
    m = rule.match
    match = {}
    if m.in_port is not None:
        match["in-port"] = f"{rule.device.render_odl()}:{_port_text(m.in_port)}"
    eth = {}
    if m.eth_src is not None:
        eth["ethernet-source"] = {"address": m.eth_src}
    if m.eth_dst is not None:
        eth["ethernet-destination"] = {"address": m.eth_dst}
    if m.eth_type is not None:
        eth["ethernet-type"] = {"type": m.eth_type}
    if eth:
        match["ethernet-match"] = eth
    if m.ipv4_src is not None:
        match["ipv4-source"] = str(m.ipv4_src)
    if m.ipv4_dst is not None:
        match["ipv4-destination"] = str(m.ipv4_dst)

    actions = []
    for order, action in enumerate(rule.actions):
        if isinstance(action, Output):
            actions.append({"order": order, "output-action": {
                "output-node-connector": _port_text(action.port_no), "max-length": 65535}})
        elif isinstance(action, Drop):
            actions.append({"order": order, "drop-action": {}})
        elif isinstance(action, SetEthDst):
            actions.append({"order": order, "set-field": {
                "ethernet-match": {"ethernet-destination": {"address": action.mac}}}})
        else:
            raise Unsupported(f"ODL has no mapping for {action!r}")

    return {FLOW_KEY: [{
        "id": flow_id,
        "table_id": rule.table_id,
        "priority": rule.priority,
        "idle-timeout": rule.idle_timeout_s,
        "hard-timeout": rule.hard_timeout_s,
        "match": match,
        "instructions": {"instruction": [{"order": 0, "apply-actions": {"action": actions}}]},
    }]}


def odl_parse_flow(flow: dict, device: DeviceId) -> FlowRule:
    """Parse one flow object (the element of a ``flow`` list) bound to ``device``."""
    try:
        match = flow.get("match", {})
        fields = {}
        if "in-port" in match:
            fields["in_port"] = _parse_port_text(match["in-port"])
        eth = match.get("ethernet-match", {})
        if "ethernet-source" in eth:
            fields["eth_src"] = eth["ethernet-source"]["address"]
        if "ethernet-destination" in eth:
            fields["eth_dst"] = eth["ethernet-destination"]["address"]
        if "ethernet-type" in eth:
            fields["eth_type"] = int(eth["ethernet-type"]["type"])
        if "ipv4-source" in match:
            fields["ipv4_src"] = match["ipv4-source"]
        if "ipv4-destination" in match:
            fields["ipv4_dst"] = match["ipv4-destination"]
        unknown = set(match) - {"in-port", "ethernet-match", "ipv4-source", "ipv4-destination"}
        if unknown:
            raise ProtocolError(f"unsupported ODL match fields {sorted(unknown)}")

        actions = []
        instructions = flow.get("instructions", {}).get("instruction", [])
        for ins in sorted(instructions, key=lambda i: i.get("order", 0)):
            if "apply-actions" not in ins:
                raise ProtocolError(f"unsupported ODL instruction {sorted(ins)}")
            for act in sorted(ins["apply-actions"].get("action", []), key=lambda a: a.get("order", 0)):
                if "output-action" in act:
                    actions.append(Output(_parse_port_text(act["output-action"]["output-node-connector"])))
                elif "drop-action" in act:
                    actions.append(Drop())
                elif "set-field" in act:
                    actions.append(SetEthDst(
                        act["set-field"]["ethernet-match"]["ethernet-destination"]["address"]))
                else:
                    raise ProtocolError(f"unsupported ODL action {sorted(act)}")
        return FlowRule(
            device=device,
            match=MatchFields(**fields),
            actions=tuple(actions) or (Drop(),),
            priority=int(flow.get("priority", 0)),
            table_id=int(flow.get("table_id", 0)),
            idle_timeout_s=int(flow.get("idle-timeout", 0)),
            hard_timeout_s=int(flow.get("hard-timeout", 0)),
        )
    except ProtocolError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed ODL flow: {exc}") from exc


def odl_parse_topology(topology_body, inventory_body, captured_at: int = 0) -> TopologySnapshot:
    """Switch nodes become devices, host-tracker nodes become hosts."""
    try:
        topologies = topology_body.get("network-topology", {}).get("topology", [])
        topo = next((t for t in topologies if t.get("topology-id") == "flow:1"),
                    topologies[0] if topologies else {})
        devices = {}
        host_nodes = []
        for node in topo.get("node", []):
            node_id = node["node-id"]
            if node_id.startswith("openflow:"):
                dev = normalize_device_id(node_id)
                ports = devices.setdefault(dev, set())
                for tp in node.get("termination-point", []):
                    _, port = _split_tp(tp["tp-id"])
                    if port.isdigit():
                        ports.add(int(port))
            elif node_id.startswith("host:"):
                host_nodes.append(node)

        inventory = (inventory_body or {}).get("nodes", {}).get("node", [])
        for node in inventory:
            dev = normalize_device_id(node["id"]) if str(node.get("id", "")).startswith("openflow:") else None
            if dev in devices:
                for nc in node.get("node-connector", []):
                    _, port = _split_tp(nc["id"])
                    if port.isdigit():
                        devices[dev].add(int(port))

        def endpoint(tp: str) -> PortId:
            dev, port = _split_tp(tp)
            if dev not in devices or not port.isdigit():
                raise ProtocolError(f"reference to unknown termination point {tp}")
            devices[dev].add(int(port))
            return PortId(dev, int(port))

        links = set()
        for link in topo.get("link", []):
            src_node = link["source"]["source-node"]
            dst_node = link["destination"]["dest-node"]
            if not (src_node.startswith("openflow:") and dst_node.startswith("openflow:")):
                continue
            links.add(Link(endpoint(link["source"]["source-tp"]), endpoint(link["destination"]["dest-tp"])))

        hosts = []
        for node in host_nodes:
            addresses = node.get("host-tracker-service:addresses", [])
            mac = addresses[0]["mac"] if addresses else node["node-id"][len("host:"):]
            ip = None
            for a in addresses:
                try:
                    ip = ipaddress.IPv4Address(a.get("ip", ""))
                    break
                except ValueError:
                    continue
            points = node.get("host-tracker-service:attachment-points", [])
            if not points:
                raise ProtocolError(f"host {mac} has no attachment point")
            hosts.append(Host(mac, endpoint(points[0]["tp-id"]), ip))
        return TopologySnapshot(devices, links, hosts, captured_at)
    except ProtocolError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError, InvalidSnapshot) as exc:
        raise ProtocolError(f"malformed ODL topology: {exc}") from exc


def _counter(value) -> int:
    if isinstance(value, str) and value.lstrip("-").isdigit():
        value = int(value)
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise ProtocolError(f"counter {value!r} is not an unsigned integer")
    return value


def odl_parse_flow_stats(flow: dict, handle: FlowHandle) -> FlowStats:
    stats = flow.get(FLOW_STATS_KEY, {})
    return FlowStats(
        handle,
        packets=_counter(stats.get("packet-count", 0)),
        bytes=_counter(stats.get("byte-count", 0)),
        duration_s=_counter(stats.get("duration", {}).get("second", 0)),
    )


def odl_parse_port_stats(node: dict, device: DeviceId) -> List[PortStats]:
    out = []
    for nc in node.get("node-connector", []):
        _, port = _split_tp(nc["id"])
        if not port.isdigit():
            continue
        stats = nc.get(PORT_STATS_KEY, {})
        packets = stats.get("packets", {})
        nbytes = stats.get("bytes", {})
        out.append(PortStats(
            PortId(device, int(port)),
            rx_packets=_counter(packets.get("received", 0)),
            tx_packets=_counter(packets.get("transmitted", 0)),
            rx_bytes=_counter(nbytes.get("received", 0)),
            tx_bytes=_counter(nbytes.get("transmitted", 0)),
        ))
    return sorted(out, key=lambda s: s.port.port_no)


def _nodes(body) -> list:
    if not isinstance(body, dict):
        raise ProtocolError("expected a JSON object")
    if "nodes" in body:
        return body["nodes"].get("node", [])
    return body.get("node", [])


class OdlDriver(Driver):
    """Flow handles carry ``"<table>/<flow id>"`` so removal needs no lookup."""

    def __init__(self, config: DriverConfig):
        self.config = config
        self.http = RestClient(config)
        self.paths = {k: config.extras.get(f"{k}_path", v) for k, v in DEFAULT_PATHS.items()}

    def capabilities(self) -> CapabilitySet:
        return CapabilitySet(topology_read=True, flow_write=True, flow_stats=True,
                             port_stats=True, event_push=False)

    def _node_path(self, store_key: str, device: DeviceId) -> str:
        return f"{self.paths[store_key]}/node/{device.render_odl()}"

    @staticmethod
    def _split_handle(handle: FlowHandle) -> Tuple[int, str]:
        table, sep, flow_id = handle.driver_flow_id.partition("/")
        if not sep or not table.isdigit():
            raise NotFound(f"not an ODL flow handle: {handle.driver_flow_id!r}")
        return int(table), flow_id

    def _flow_path(self, template: str, device: DeviceId, table: int, flow_id: str) -> str:
        return template.format(nodeId=device.render_odl(), tableId=table, flowId=quote(flow_id, safe=""))

    def get_topology(self) -> TopologySnapshot:
        topology = self.http.get_json(self.paths["topology"])
        try:
            inventory = self.http.get_json(self.paths["nodes"])
        except NotFound:
            inventory = {}
        return odl_parse_topology(topology, inventory, time.monotonic_ns())

    def install_flow(self, rule: FlowRule) -> FlowHandle:
        self.http.request("GET", self._node_path("nodes", rule.device))
        flow_id = odl_flow_id(rule)
        path = self._flow_path(self.paths["flow_write"], rule.device, rule.table_id, flow_id)
        self.http.request("PUT", path, odl_render_flow(rule, flow_id))
        return FlowHandle(rule.device, f"{rule.table_id}/{flow_id}")

    def remove_flow(self, handle: FlowHandle) -> None:
        table, flow_id = self._split_handle(handle)
        self.http.request("DELETE", self._flow_path(self.paths["flow_write"], handle.device, table, flow_id))

    def _collect(self, store_key: str, device: Optional[DeviceId]) -> dict:
        path = self.paths[store_key] if device is None else self._node_path(store_key, device)
        try:
            body = self.http.get_json(path)
        except NotFound:
            return {}
        found = {}
        for node in _nodes(body):
            node_id = str(node.get("id", ""))
            if not node_id.startswith("openflow:"):
                continue
            dev = normalize_device_id(node_id)
            for table in node.get(TABLE_KEY, []):
                for flow in table.get("flow", []):
                    key = (dev, f"{table['id']}/{flow['id']}")
                    found[key] = (flow, table["id"])
        return found

    def list_flows(self, device: Optional[DeviceId] = None) -> List[Tuple[FlowHandle, FlowRule]]:
        # config holds what we wrote; operational adds controller-installed flows
        flows = self._collect("config_nodes", device)
        for key, value in self._collect("nodes", device).items():
            flows.setdefault(key, value)
        out = []
        for (dev, handle_id), (flow, table_id) in sorted(flows.items()):
            try:
                rule = odl_parse_flow({**flow, "table_id": table_id}, dev)
            except ProtocolError as exc:
                log.warning("skipping flow %s on %s: %s", handle_id, dev, exc)
                continue
            out.append((FlowHandle(dev, handle_id), rule))
        return out

    def get_flow_stats(self, handle: FlowHandle) -> FlowStats:
        table, flow_id = self._split_handle(handle)
        try:
            body = self.http.get_json(self._flow_path(OPER_FLOW, handle.device, table, flow_id))
        except NotFound:
            # written but not yet reported by the switch
            self.http.request("GET", self._flow_path(self.paths["flow_write"], handle.device, table, flow_id))
            return FlowStats(handle)
        flows = body.get(FLOW_KEY, [])
        if not flows:
            raise NotFound(f"no flow {handle.driver_flow_id} on {handle.device}")
        return odl_parse_flow_stats(flows[0], handle)

    def get_port_stats(self, device: DeviceId) -> List[PortStats]:
        nodes = _nodes(self.http.get_json(self._node_path("nodes", device)))
        if not nodes:
            raise NotFound(f"unknown device {device}")
        return odl_parse_port_stats(nodes[0], device)

    def close(self) -> None:
        self.http.close()


register_driver("odl", OdlDriver)
