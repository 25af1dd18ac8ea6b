"""``umbrella`` command-line entry point."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from typing import List, Optional

from umbrella import __version__
from umbrella.bench import ExperimentPlan, export_csv, export_gnuplot, run_experiment
from umbrella.drivers.base import DriverConfig, DriverError, UnknownDriver, create_driver
from umbrella.mock.controller import InstallMode, LatencyModel, MockController
from umbrella.mock.topospec import InvalidSpec, TopologySpec, generate_linear_topology
from umbrella.model import FlowHandle, MalformedId, normalize_device_id, rule_from_dict, rule_to_dict
from umbrella.pathfinder import AlgorithmContractViolation, NoPath, UnknownAlgorithm, build_graph, shortest_path

DEFAULT_MOCK_TOPOLOGY = '{"kind": "linear", "n": 3}'


def parse_sizes(text: str) -> List[int]:
    """``10..100:10`` (inclusive range with step), ``10,20,30`` or a single number."""
    text = text.strip()
    if ".." in text:
        span, _, step = text.partition(":")
        lo, hi = span.split("..")
        return list(range(int(lo), int(hi) + 1, int(step or 1)))
    return [int(s) for s in text.split(",") if s.strip()]


def _common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("controller")
    g.add_argument("--config", help="TOML file with controller settings")
    g.add_argument("--driver", help="driver name (mock, onos, odl)")
    g.add_argument("--endpoint", help="controller base URL")
    g.add_argument("--user")
    g.add_argument("--password")
    g.add_argument("--topology", help="mock only: topology JSON document or file")
    g.add_argument("--per-rule-ms", help="mock only: per-rule install latency")


def load_config(args) -> DriverConfig:
    if args.config:
        config = DriverConfig.from_toml(args.config)
    else:
        config = DriverConfig.from_mapping({})
    overrides = {
        "name": args.driver,
        "endpoint": args.endpoint,
        "username": args.user,
        "password": args.password,
    }
    values = {k: v for k, v in overrides.items() if v is not None}
    extras = dict(config.extras)
    if args.topology:
        extras["topology"] = args.topology
    if getattr(args, "per_rule_ms", None) is not None:
        extras["per_rule_ms"] = args.per_rule_ms
    if getattr(args, "install_mode", None):
        extras["install_mode"] = args.install_mode
    name = values.get("name", config.name)
    if name == "mock":
        extras.setdefault("topology", DEFAULT_MOCK_TOPOLOGY)
    return DriverConfig(
        name=name,
        endpoint=values.get("endpoint", config.endpoint),
        username=values.get("username", config.username),
        password=values.get("password", config.password),
        request_timeout_ms=config.request_timeout_ms,
        extras=extras,
    )


def cmd_topology_show(args, out) -> int:
    driver = create_driver(load_config(args), requires=["topology_read"])
    snap = driver.get_topology()
    if args.json:
        doc = TopologySpec(snap.devices, snap.links, snap.hosts).to_json()
        print(json.dumps(doc, indent=2), file=out)
    else:
        print(f"devices: {len(snap.devices)}  links: {len(snap.links)}  hosts: {len(snap.hosts)}", file=out)
        for dev, ports in snap.devices.items():
            print(f"  {dev.render_onos()}  ports {sorted(ports)}", file=out)
        for h in sorted(snap.hosts, key=lambda h: h.mac):
            print(f"  host {h.mac} {h.ip or '-'} at {h.attachment.device}/{h.attachment.port_no}", file=out)
    return 0


def cmd_flows_list(args, out) -> int:
    driver = create_driver(load_config(args))
    device = normalize_device_id(args.device) if args.device else None
    for handle, rule in driver.list_flows(device):
        print(json.dumps({"flow_id": handle.driver_flow_id, "rule": rule_to_dict(rule)}), file=out)
    return 0


def cmd_flows_install(args, out) -> int:
    with open(args.file) as fh:
        doc = json.load(fh)
    rules = [rule_from_dict(d) for d in (doc if isinstance(doc, list) else [doc])]
    driver = create_driver(load_config(args), requires=["flow_write"])
    for rule in rules:
        handle = driver.install_flow(rule)
        print(json.dumps({"device": handle.device.render_onos(), "flow_id": handle.driver_flow_id}), file=out)
    return 0


def cmd_flows_remove(args, out) -> int:
    driver = create_driver(load_config(args), requires=["flow_write"])
    driver.remove_flow(FlowHandle(normalize_device_id(args.device), args.flow_id))
    return 0


def cmd_path_compute(args, out) -> int:
    driver = create_driver(load_config(args), requires=["topology_read"])
    snap = driver.get_topology()
    try:
        src, dst = snap.host_by_mac(args.src_mac), snap.host_by_mac(args.dst_mac)
    except KeyError as exc:
        raise NoPath(f"unknown host {exc.args[0]}") from None
    path = shortest_path(build_graph(snap), src, dst, args.algorithm)
    for hop in path.hops:
        print(f"{hop.device.render_onos()} in {hop.in_port.port_no} out {hop.out_port.port_no}", file=out)
    return 0


def cmd_bench_run(args, out) -> int:
    plan = ExperimentPlan(
        sizes=tuple(parse_sizes(args.sizes)),
        repetitions=args.reps,
        rate_pps=args.rate_pps,
        pre_install_delay_ms=args.pre_delay_ms,
        train_duration_ms=args.train_ms,
        install_mode=InstallMode.parse(args.install_mode),
        fanout=args.fanout,
        algorithm=args.algorithm,
    )
    config = load_config(args)
    if config.name == "mock":
        latency = LatencyModel(Fraction(args.per_rule_ms or "0"), plan.install_mode)

        def target(n):
            return MockController(generate_linear_topology(n), latency)
    else:
        target = create_driver(config, requires=["topology_read", "flow_write"])
    results = run_experiment(target, plan)
    if not results:
        raise NoPath("no topology size produced a result")
    print("size  mean_setup_ms  stddev_setup_ms", file=out)
    for r in results:
        print(f"{r.size:4d}  {r.mean_setup_ms:13.3f}  {r.stddev_setup_ms:15.3f}", file=out)
    if args.csv:
        export_csv(results, args.csv)
    if args.dat:
        export_gnuplot(results, args.dat, plan)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _common(common)

    parser = argparse.ArgumentParser(prog="umbrella", description="Controller-independent SDN toolkit")
    parser.add_argument("--version", action="version", version=f"umbrella {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    groups = parser.add_subparsers(dest="group", required=True)

    topo = groups.add_parser("topology").add_subparsers(dest="cmd", required=True)
    p = topo.add_parser("show", parents=[common])
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_topology_show)

    flows = groups.add_parser("flows").add_subparsers(dest="cmd", required=True)
    p = flows.add_parser("list", parents=[common])
    p.add_argument("--device")
    p.set_defaults(func=cmd_flows_list)
    p = flows.add_parser("install", parents=[common])
    p.add_argument("--file", required=True, help="JSON rule or list of rules")
    p.set_defaults(func=cmd_flows_install)
    p = flows.add_parser("remove", parents=[common])
    p.add_argument("--device", required=True)
    p.add_argument("--flow-id", required=True)
    p.set_defaults(func=cmd_flows_remove)

    path = groups.add_parser("path").add_subparsers(dest="cmd", required=True)
    p = path.add_parser("compute", parents=[common])
    p.add_argument("--src-mac", required=True)
    p.add_argument("--dst-mac", required=True)
    p.add_argument("--algorithm")
    p.set_defaults(func=cmd_path_compute)

    bench = groups.add_parser("bench").add_subparsers(dest="cmd", required=True)
    p = bench.add_parser("run", parents=[common])
    p.add_argument("--sizes", default="10..100:10")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--rate-pps", type=int, default=1000)
    p.add_argument("--pre-delay-ms", type=int, default=2000)
    p.add_argument("--train-ms", type=int, default=10000)
    p.add_argument("--install-mode", choices=["seq", "par"], default="seq")
    p.add_argument("--fanout", type=int)
    p.add_argument("--algorithm")
    p.add_argument("--csv")
    p.add_argument("--dat", help="gnuplot data file")
    p.set_defaults(func=cmd_bench_run)
    return parser


def main(argv: Optional[List[str]] = None, out=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, out or sys.stdout)
    except (DriverError, UnknownDriver, NoPath, UnknownAlgorithm, AlgorithmContractViolation,
            InvalidSpec, MalformedId, KeyError, ValueError, OSError) as exc:
        print(f"umbrella: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
