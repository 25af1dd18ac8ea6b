import ipaddress

import pytest
from hypothesis import given, strategies as st

from strategies import device_ids, macs, rules
from umbrella.model import (
    DeviceId, Drop, FlowRule, Host, InvalidSnapshot, Link, MalformedId, MatchFields, Output,
    PacketDescriptor, PortId, SetEthDst, TopologySnapshot, closure_violation, flow_matches,
    normalize_device_id, normalize_mac, rule_from_dict, rule_to_dict,
)


def port(d, p):
    return PortId(DeviceId(d), p)


class TestDeviceId:
    def test_onos_spelling(self):
        assert normalize_device_id("of:0000000000000001") == DeviceId(1)

    def test_odl_spelling(self):
        assert normalize_device_id("openflow:1") == DeviceId(1)

    def test_bare_decimal(self):
        assert normalize_device_id("42") == DeviceId(42)

    def test_hex_is_case_insensitive(self):
        assert normalize_device_id("of:00000000000000FF") == DeviceId(255)

    @pytest.mark.parametrize("text", [
        "of:1", "of:00000000000000001", "openflow:", "openflow:abc", "host:1",
        "", "of:000000000000000g", "-1", "openflow:18446744073709551616",
    ])
    def test_rejects_other_spellings(self, text):
        with pytest.raises(MalformedId):
            normalize_device_id(text)

    @given(device_ids)
    def test_renderings_agree(self, d):
        assert normalize_device_id(d.render_onos()) == d
        assert normalize_device_id(d.render_odl()) == d
        assert normalize_device_id(str(d.dpid)) == d

    @given(device_ids)
    def test_normalization_idempotent(self, d):
        once = normalize_device_id(d.render_odl())
        assert normalize_device_id(once.render_onos()) == once
        assert normalize_device_id(once) == once

    def test_max_u64(self):
        assert normalize_device_id("of:ffffffffffffffff").dpid == 2**64 - 1


def test_mac_normalized_to_lowercase_colons():
    assert normalize_mac("AA-BB-CC-DD-EE-01") == "aa:bb:cc:dd:ee:01"
    with pytest.raises(ValueError):
        normalize_mac("aa:bb:cc")


class TestSnapshot:
    def linear2(self):
        devices = {DeviceId(1): frozenset({1, 2}), DeviceId(2): frozenset({1, 2})}
        links = {Link(port(1, 2), port(2, 2)), Link(port(2, 2), port(1, 2))}
        hosts = {Host("00:00:00:00:00:01", port(1, 1))}
        return devices, links, hosts

    def test_closed_snapshot_builds(self):
        snap = TopologySnapshot(*self.linear2())
        assert len(snap.devices) == 2 and len(snap.links) == 2

    def test_link_to_unknown_port_rejected(self):
        devices, links, hosts = self.linear2()
        links.add(Link(port(1, 2), port(3, 1)))
        with pytest.raises(InvalidSnapshot):
            TopologySnapshot(devices, links, hosts)

    def test_host_on_missing_port_rejected(self):
        devices, links, hosts = self.linear2()
        hosts.add(Host("00:00:00:00:00:09", port(2, 7)))
        assert closure_violation(devices, links, hosts)
        with pytest.raises(InvalidSnapshot):
            TopologySnapshot(devices, links, hosts)

    def test_duplicate_mac_rejected(self):
        devices, links, hosts = self.linear2()
        hosts.add(Host("00:00:00:00:00:01", port(2, 1)))
        with pytest.raises(InvalidSnapshot):
            TopologySnapshot(devices, links, hosts)

    def test_equality_ignores_capture_time(self):
        a = TopologySnapshot(*self.linear2(), captured_at=1)
        b = TopologySnapshot(*self.linear2(), captured_at=99)
        assert a == b and hash(a) == hash(b)

    def test_devices_are_read_only(self):
        snap = TopologySnapshot(*self.linear2())
        with pytest.raises(TypeError):
            snap.devices[DeviceId(5)] = frozenset()


class TestMatch:
    def test_ipv4_implies_eth_type(self):
        m = MatchFields(ipv4_dst="10.0.0.0/8")
        assert m.eth_type == 0x0800
        assert m.ipv4_dst == ipaddress.IPv4Network("10.0.0.0/8")

    def test_ipv4_with_other_eth_type_rejected(self):
        with pytest.raises(ValueError):
            MatchFields(eth_type=0x0806, ipv4_src="10.0.0.1/32")

    def test_host_bits_are_masked(self):
        assert MatchFields(ipv4_src="10.1.2.3/16").ipv4_src == ipaddress.IPv4Network("10.1.0.0/16")


class TestFlowRule:
    def test_two_outputs_rejected(self):
        with pytest.raises(ValueError):
            FlowRule(DeviceId(1), actions=(Output(1), Output(2)))

    def test_drop_must_be_alone(self):
        with pytest.raises(ValueError):
            FlowRule(DeviceId(1), actions=(Drop(), Output(2)))

    def test_empty_actions_rejected(self):
        with pytest.raises(ValueError):
            FlowRule(DeviceId(1), actions=())

    @pytest.mark.parametrize("kw", [{"priority": -1}, {"priority": 65536}, {"table_id": 255}])
    def test_ranges(self, kw):
        with pytest.raises(ValueError):
            FlowRule(DeviceId(1), **kw)

    def test_device_accepts_text(self):
        assert FlowRule("openflow:5").device == DeviceId(5)

    def test_semantic_equality(self):
        a = FlowRule(DeviceId(1), MatchFields(eth_dst="AA:BB:CC:DD:EE:01"), (Output(2),))
        b = FlowRule("of:0000000000000001", MatchFields(eth_dst="aa:bb:cc:dd:ee:01"), [Output(2)])
        assert a == b and hash(a) == hash(b)

    @given(rules())
    def test_dict_round_trip(self, rule):
        assert rule_from_dict(rule_to_dict(rule)) == rule


class TestFlowMatches:
    pkt = PacketDescriptor(in_port=3, eth_src="00:00:00:00:00:01", eth_dst="aa:bb:cc:dd:ee:01",
                           ipv4_src=ipaddress.IPv4Address("10.0.0.1"),
                           ipv4_dst=ipaddress.IPv4Address("10.0.0.2"))

    def test_exact_eth_dst(self):
        rule = FlowRule(DeviceId(1), MatchFields(eth_dst="aa:bb:cc:dd:ee:01"))
        assert flow_matches(rule, self.pkt)

    def test_wildcard(self):
        assert flow_matches(FlowRule(DeviceId(1)), self.pkt)

    def test_in_port_mismatch(self):
        assert not flow_matches(FlowRule(DeviceId(1), MatchFields(in_port=2)), self.pkt)

    def test_prefix_containment(self):
        assert flow_matches(FlowRule(DeviceId(1), MatchFields(ipv4_dst="10.0.0.0/24")), self.pkt)
        assert not flow_matches(FlowRule(DeviceId(1), MatchFields(ipv4_dst="10.0.1.0/24")), self.pkt)

    @given(macs, macs, st.integers(1, 100))
    def test_absent_fields_never_constrain(self, src, dst, in_port):
        pkt = PacketDescriptor(in_port=in_port, eth_src=src, eth_dst=dst)
        assert flow_matches(FlowRule(DeviceId(1), MatchFields(eth_dst=dst)), pkt)
        assert flow_matches(FlowRule(DeviceId(1), MatchFields(in_port=in_port, eth_src=src)), pkt)


def test_values_are_immutable():
    rule = FlowRule(DeviceId(1), actions=(SetEthDst("00:00:00:00:00:02"), Output(1)))
    with pytest.raises(AttributeError):
        rule.priority = 5
