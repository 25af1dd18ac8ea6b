import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from strategies import mutate, random_connected_edges, snapshot_from_edges
from umbrella.drivers import NotFound, Rejected
from umbrella.mock import (
    AddHost, AddLink, ClockRegression, InstallMode, InvalidMutation, LatencyModel, MockController,
    PacketTrain, RemoveDevice, RemoveLink, TopologySpec, UnknownHost, generate_linear_topology,
    mock_with_topology,
)
from umbrella.model import DeviceId, Drop, FlowRule, Host, Link, MatchFields, Output, PortId, mac_from_int
from umbrella.pathfinder import NoPath, build_graph, compile_one_directional, shortest_path

MS = 1_000_000


def linear(n, per_rule=0, mode="seq", base_rpc=0):
    return mock_with_topology(generate_linear_topology(n), LatencyModel(Fraction(per_rule), mode, Fraction(base_rpc)))


def path_rules(mock, src=1, dst=None):
    snap = mock.get_topology()
    dst = dst or len(snap.devices)
    path = shortest_path(build_graph(snap), snap.host_by_mac(mac_from_int(src)), snap.host_by_mac(mac_from_int(dst)))
    return compile_one_directional(path)


def train(src, dst, count, start=0, interval=MS):
    return PacketTrain(mac_from_int(src), mac_from_int(dst), start, interval, count)


class TestTopology:
    @pytest.mark.parametrize("n,devices,links", [(1, 1, 0), (3, 3, 4), (10, 10, 18), (100, 100, 198)])
    def test_linear_counts(self, n, devices, links):
        snap = linear(n).get_topology()
        assert (len(snap.devices), len(snap.links), len(snap.hosts)) == (devices, links, n)

    def test_empty(self):
        snap = MockController().get_topology()
        assert not snap.devices and not snap.links and not snap.hosts

    def test_flow_tables_start_empty(self):
        assert linear(3).list_flows() == []

    def test_spec_from_json_matches_generator(self):
        assert TopologySpec.from_json({"kind": "linear", "n": 4}) == generate_linear_topology(4)
        doc = generate_linear_topology(4).to_json()
        assert TopologySpec.from_json(doc).to_snapshot() == generate_linear_topology(4).to_snapshot()


class TestTrains:
    def test_no_rules_nothing_arrives(self):
        report = linear(3).run_packet_train(train(1, 3, 1000))
        assert (report.sent, report.received, report.lost) == (1000, 0, 1000)

    def test_preinstalled_path_is_lossless(self):
        mock = linear(3)
        for r in path_rules(mock):
            mock.install_flow(r)
        report = mock.run_packet_train(train(1, 3, 1000))
        assert (report.received, report.first_received_index) == (1000, 0)

    def test_zero_latency_activates_at_call_instant(self):
        mock = linear(2)
        mock.advance_to(7 * MS)
        h = mock.install_flow(path_rules(mock)[0])
        assert mock.get_flow_stats(h).packets == 0
        assert mock.now_ns == 7 * MS

    def test_sequential_install_loss_example(self):
        # path of 10 rules requested at 2000 ms, 5 ms each: complete at 2050 ms
        mock = linear(10, per_rule=5)
        tid = mock.start_packet_train(train(1, 10, 4000))
        mock.advance_to(2000 * MS)
        for r in path_rules(mock):
            mock.install_flow(r)
        mock.advance_to(3999 * MS)
        report = mock.train_report(tid)
        assert (report.received, report.lost, report.first_received_index) == (1950, 2050, 2050)

    def test_parallel_install_completes_after_one_latency(self):
        mock = linear(10, per_rule=5, mode="par")
        tid = mock.start_packet_train(train(1, 10, 4000))
        mock.advance_to(2000 * MS)
        for r in path_rules(mock):
            mock.install_flow(r)
        mock.advance_to(3999 * MS)
        assert mock.train_report(tid).lost == 2005

    def test_base_rpc_adds_per_call(self):
        mock = linear(2, per_rule=1, base_rpc=Fraction(1, 2))
        tid = mock.start_packet_train(train(1, 2, 100))
        rules = path_rules(mock)
        mock.advance_to(10 * MS)
        for r in rules:
            mock.install_flow(r)
        mock.advance_to(99 * MS)
        # get_topology at t=0 books 0.5 ms; two installs at t=10 finish at 10 + 2 * 1.5 = 13
        assert mock.train_report(tid).lost == 13

    def test_unknown_host(self):
        with pytest.raises(UnknownHost):
            linear(2).run_packet_train(train(1, 9, 10))
        assert issubclass(UnknownHost, NotFound)

    @given(st.integers(2, 6), st.integers(0, 20), st.integers(0, 3000), st.integers(1, 2000))
    @settings(max_examples=40, deadline=None)
    def test_conservation_and_loss_prefix(self, n, per_rule, at_ms, count):
        mock = linear(n, per_rule=per_rule)
        tid = mock.start_packet_train(train(1, n, count))
        mock.advance_to(at_ms * MS)
        for r in path_rules(mock):
            mock.install_flow(r)
        mock.advance_to(max(mock.now_ns, (count - 1) * MS))
        rep = mock.train_report(tid)
        assert rep.sent == rep.received + rep.lost == count
        ready = at_ms + n * per_rule
        assert rep.lost == min(count, ready)
        if rep.received:
            assert rep.first_received_index == rep.lost

    def test_determinism(self):
        def run():
            mock = linear(5, per_rule=Fraction(7, 3))
            tid = mock.start_packet_train(train(1, 5, 500, interval=MS // 3))
            mock.advance_to(20 * MS)
            for r in path_rules(mock):
                mock.install_flow(r)
            mock.advance_to(500 * MS)
            return mock.train_report(tid)
        assert run() == run()


class TestFlowTable:
    @staticmethod
    def one_switch_two_hosts(**latency):
        spec = TopologySpec({DeviceId(1): frozenset({1, 2})}, frozenset(), frozenset({
            Host(mac_from_int(1), PortId(DeviceId(1), 1)), Host(mac_from_int(2), PortId(DeviceId(1), 2))}))
        return mock_with_topology(spec, LatencyModel(**latency))

    def test_highest_priority_wins(self):
        mock = self.one_switch_two_hosts()
        host = mac_from_int(1)
        mock.install_flow(FlowRule(DeviceId(1), MatchFields(), (Drop(),), priority=10))
        mock.install_flow(FlowRule(DeviceId(1), MatchFields(eth_src=host), (Output(2),), priority=20))
        assert mock.run_packet_train(train(1, 2, 10)).received == 10

    def test_equal_priority_earliest_installed_wins(self):
        mock = self.one_switch_two_hosts(per_rule_install_ms=1, install_mode="par")
        # both activate at the same instant; request order breaks the tie
        mock.install_flow(FlowRule(DeviceId(1), MatchFields(in_port=1), (Output(2),)))
        mock.install_flow(FlowRule(DeviceId(1), MatchFields(eth_dst=mac_from_int(2)), (Drop(),)))
        mock.advance_to(1 * MS)
        assert mock.run_packet_train(train(1, 2, 10, start=2 * MS)).received == 10

    def test_same_key_overwrites(self):
        mock = linear(2)
        r1 = FlowRule(DeviceId(1), MatchFields(in_port=1), (Output(2),))
        r2 = FlowRule(DeviceId(1), MatchFields(in_port=1), (Drop(),))
        assert mock.install_flow(r1) == mock.install_flow(r1)
        mock.install_flow(r2)
        assert [r for _, r in mock.list_flows()] == [r2]

    def test_remove(self):
        mock = linear(2)
        a = mock.install_flow(FlowRule(DeviceId(1), MatchFields(in_port=1), (Output(2),)))
        b = mock.install_flow(FlowRule(DeviceId(2), MatchFields(in_port=2), (Output(1),)))
        mock.remove_flow(a)
        assert [h for h, _ in mock.list_flows()] == [b]
        with pytest.raises(NotFound):
            mock.remove_flow(a)

    def test_list_counts_and_filter(self):
        mock = linear(3)
        for r in path_rules(mock):
            mock.install_flow(r)
        assert len(mock.list_flows()) == 3
        assert len(mock.list_flows(DeviceId(2))) == 1

    def test_unknown_device(self):
        with pytest.raises(NotFound):
            linear(2).install_flow(FlowRule(DeviceId(9)))

    def test_output_to_missing_port(self):
        with pytest.raises(Rejected):
            linear(2).install_flow(FlowRule(DeviceId(1), actions=(Output(9),)))

    def test_hard_timeout_expires(self):
        mock = linear(2)
        mock.install_flow(FlowRule(DeviceId(1), MatchFields(in_port=1), (Output(2),), hard_timeout_s=1))
        mock.advance_to(999 * MS)
        assert len(mock.list_flows()) == 1
        mock.advance_to(1000 * MS)
        assert mock.list_flows() == []

    def test_idle_timeout_refreshed_by_traffic(self):
        mock = linear(2)
        rules = [r.__class__(**{**r.__dict__, "idle_timeout_s": 1}) for r in path_rules(mock)]
        for r in rules:
            mock.install_flow(r)
        mock.run_packet_train(train(1, 2, 1500))
        mock.advance_to(2000 * MS)
        assert len(mock.list_flows()) == 2
        mock.advance_to(2500 * MS)
        assert mock.list_flows() == []


class TestStats:
    def test_fresh_rule_has_zero_counters(self):
        mock = linear(2)
        h = mock.install_flow(path_rules(mock)[0])
        s = mock.get_flow_stats(h)
        assert (s.packets, s.bytes) == (0, 0)

    def test_hundred_packets_counted(self):
        mock = linear(3)
        handles = [mock.install_flow(r) for r in path_rules(mock)]
        first = mock.get_flow_stats(handles[1])
        mock.run_packet_train(train(1, 3, 100))
        second = mock.get_flow_stats(handles[1])
        assert second.packets == 100 and second.bytes == 6400
        assert second.packets >= first.packets

    def test_port_stats(self):
        mock = linear(3)
        assert len(mock.get_port_stats(DeviceId(2))) == 3
        for r in path_rules(mock):
            mock.install_flow(r)
        mock.run_packet_train(train(1, 3, 100))
        s1 = {p.port.port_no: p for p in mock.get_port_stats(DeviceId(1))}
        assert s1[2].tx_packets == 100 and s1[1].rx_packets == 100
        with pytest.raises(NotFound):
            mock.get_port_stats(DeviceId(42))


class TestClock:
    def test_regression(self):
        mock = linear(1)
        mock.advance_to(5)
        with pytest.raises(ClockRegression):
            mock.advance_to(4)

    def test_advance_to_now_is_identity(self):
        mock = linear(3, per_rule=1)
        for r in path_rules(mock):
            mock.install_flow(r)
        before = mock.list_flows()
        mock.advance_to(mock.now_ns)
        assert mock.list_flows() == before

    def test_rule_visible_after_activation(self):
        mock = linear(2, per_rule=10)
        rules = path_rules(mock)
        for r in rules:
            mock.install_flow(r)
        assert mock.run_packet_train(train(1, 2, 1, start=19 * MS)).received == 0
        assert mock.run_packet_train(train(1, 2, 1, start=20 * MS)).received == 1


class TestMutations:
    def test_remove_middle_link(self):
        mock = linear(3)
        link = Link(PortId(DeviceId(1), 2), PortId(DeviceId(2), 2))
        mock.apply_mutation(RemoveLink(link))
        mock.apply_mutation(RemoveLink(link.reversed()))
        assert len(mock.get_topology().links) == 2

    def test_remove_middle_device_cascades(self):
        mock = linear(3)
        h = mock.install_flow(FlowRule(DeviceId(2), MatchFields(in_port=2), (Output(3),)))
        mock.apply_mutation(RemoveDevice(DeviceId(2)))
        snap = mock.get_topology()
        assert (len(snap.devices), len(snap.links), len(snap.hosts)) == (2, 0, 2)
        assert mock.list_flows() == []
        with pytest.raises(NotFound):
            mock.get_flow_stats(h)

    def test_add_then_remove_is_identity(self):
        mock = linear(3)
        before = mock.get_topology()
        link = Link(PortId(DeviceId(1), 1), PortId(DeviceId(3), 1))
        mock.apply_mutation(AddLink(link))
        assert mock.get_topology() != before
        mock.apply_mutation(RemoveLink(link))
        assert mock.get_topology() == before

    @pytest.mark.parametrize("mutation", [
        RemoveDevice(DeviceId(9)),
        RemoveLink(Link(PortId(DeviceId(1), 1), PortId(DeviceId(3), 1))),
        AddLink(Link(PortId(DeviceId(1), 7), PortId(DeviceId(2), 1))),
        AddHost(Host(mac_from_int(1), PortId(DeviceId(2), 1))),
    ])
    def test_invalid(self, mutation):
        with pytest.raises(InvalidMutation):
            linear(3).apply_mutation(mutation)


def test_install_mode_parse():
    assert InstallMode.parse("seq") is InstallMode.SEQUENTIAL
    assert InstallMode.parse("par") is InstallMode.PARALLEL
    with pytest.raises(ValueError):
        InstallMode.parse("batch")


class _NoReuse(MockController):
    def _forward(self, ts):
        ts.walk = None
        return super()._forward(ts)


@given(st.randoms(use_true_random=False))
@settings(max_examples=60, deadline=None)
def test_walk_reuse_matches_fresh_walks(rnd):
    n = rnd.randint(2, 8)
    snap = snapshot_from_edges(n, random_connected_edges(rnd, n, rnd.randint(0, n)), range(1, n + 1))
    spec = TopologySpec(snap.devices, snap.links, snap.hosts)
    latency = LatencyModel(rnd.choice([0, 1, 3]), rnd.choice(["seq", "par"]))
    seed = rnd.getrandbits(32)
    outcomes = []
    for cls in (MockController, _NoReuse):
        script = random.Random(seed)
        mock = cls(spec, latency)
        s, t = script.sample(range(1, n + 1), 2)
        tid = mock.start_packet_train(train(s, t, 400))
        handles = []
        for step in range(12):
            mock.advance_by(script.randint(0, 40) * MS)
            action = script.random()
            if action < 0.5:
                try:
                    rules = path_rules(mock, s, t)
                except (KeyError, NoPath):
                    rules = []
                for r in rules[script.randint(0, max(0, len(rules) - 1)):]:
                    handles.append(mock.install_flow(r))
            elif action < 0.8 and handles:
                h = handles.pop(script.randrange(len(handles)))
                if h in {x for x, _ in mock.list_flows()}:
                    mock.remove_flow(h)
            else:
                mutate(mock, script, 1)
        mock.advance_by(500 * MS)
        outcomes.append((mock.train_report(tid), sorted((h.driver_flow_id, mock.get_flow_stats(h).packets)
                                                        for h, _ in mock.list_flows())))
    assert outcomes[0] == outcomes[1]
