"""Flow-rule setup-time experiment.

A sender streams packets toward a receiver at a constant rate; after a fixed
delay the application computes the path and installs one-directional rules.
Every packet emitted before the path is complete is lost, so the loss count
times the packet interval, minus the deliberate pre-install delay, is the
setup time.

Drivers that can generate traffic (the simulator) get this loss-based
measurement.  Others are timed by wall clock from the first install request
to the last acknowledgement, and the CSV column is named accordingly.
"""
from __future__ import annotations

import csv
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Optional, Protocol, Sequence, Tuple, Union, runtime_checkable

from umbrella.drivers.base import Driver, Unsupported
from umbrella.mock.controller import DeliveryReport, InstallMode, PacketTrain
from umbrella.mock.topospec import TopologySpec, generate_linear_topology
from umbrella.model import FlowHandle, FlowRule, Host, TopologySnapshot
from umbrella.pathfinder import NoPath, build_graph, compile_one_directional, shortest_path

log = logging.getLogger(__name__)

CSV_FIELDS = ("size", "rep", "packets_sent", "packets_lost")

__all__ = [
    "BenchError", "ExperimentPlan", "ExperimentResult", "TrafficSource", "choose_endpoints",
    "compute_setup_time", "export_csv", "export_gnuplot", "generate_linear_topology",
    "run_experiment", "TopologySpec",
]


class BenchError(RuntimeError):
    pass


@runtime_checkable
class TrafficSource(Protocol):
    """A driver that can emit packet trains on a controllable clock."""

    @property
    def now_ns(self) -> int: ...

    def advance_to(self, t_ns: int) -> None: ...

    def start_packet_train(self, train: PacketTrain) -> int: ...

    def train_report(self, train_id: int) -> DeliveryReport: ...


@dataclass(frozen=True)
class ExperimentPlan:
    sizes: Tuple[int, ...] = tuple(range(10, 101, 10))
    repetitions: int = 5
    rate_pps: int = 1000
    pre_install_delay_ms: int = 2000
    train_duration_ms: int = 10000
    install_mode: InstallMode = InstallMode.SEQUENTIAL
    fanout: Optional[int] = None
    algorithm: Optional[str] = None
    priority: int = 100

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(self.sizes))
        object.__setattr__(self, "install_mode", InstallMode.parse(self.install_mode))
        if self.rate_pps <= 0:
            raise ValueError("rate_pps must be positive")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        if self.train_duration_ms <= self.pre_install_delay_ms:
            raise ValueError("train_duration_ms must exceed pre_install_delay_ms")
        if not self.sizes:
            raise ValueError("at least one topology size is required")

    @property
    def interval_ns(self) -> int:
        return round(Fraction(10**9, self.rate_pps))

    @property
    def interval_ms(self) -> Fraction:
        return Fraction(self.interval_ns, 10**6)

    @property
    def packet_count(self) -> int:
        return self.train_duration_ms * 10**6 // self.interval_ns


@dataclass(frozen=True)
class ExperimentResult:
    size: int
    per_rep_setup_ms: Tuple[float, ...]
    packets_sent: Tuple[int, ...]
    packets_lost: Tuple[int, ...]
    method: str = "loss"
    rules: Tuple[FlowRule, ...] = field(default=(), compare=False)

    @property
    def mean_setup_ms(self) -> float:
        return statistics.fmean(self.per_rep_setup_ms)

    @property
    def stddev_setup_ms(self) -> float:
        if len(self.per_rep_setup_ms) < 2:
            return 0.0
        return statistics.stdev(self.per_rep_setup_ms)


def compute_setup_time(packets_lost: int, interval_ms, pre_install_delay_ms) -> float:
    """Loss-inferred setup time, clamped at zero."""
    if packets_lost < 0 or interval_ms < 0 or pre_install_delay_ms < 0:
        raise ValueError("inputs must be non-negative")
    value = packets_lost * Fraction(interval_ms) - Fraction(pre_install_delay_ms)
    return float(max(Fraction(0), value))


def choose_endpoints(snapshot: TopologySnapshot) -> Tuple[Host, Host]:
    """Sender: host on the lowest device; receiver: host on the highest."""
    hosts = sorted(snapshot.hosts, key=lambda h: (h.attachment, h.mac))
    if not hosts:
        raise BenchError("topology has no hosts")
    if hosts[0] == hosts[-1]:
        raise BenchError("sender and receiver would be the same host")
    return hosts[0], hosts[-1]


def _install(driver: Driver, rules: Sequence[FlowRule], plan: ExperimentPlan) -> List[FlowHandle]:
    if plan.install_mode is InstallMode.SEQUENTIAL or len(rules) < 2:
        return [driver.install_flow(r) for r in rules]
    with ThreadPoolExecutor(max_workers=plan.fanout or len(rules)) as pool:
        return list(pool.map(driver.install_flow, rules))


def _compile(driver: Driver, src: Host, dst: Host, plan: ExperimentPlan) -> List[FlowRule]:
    snapshot = driver.get_topology()
    path = shortest_path(build_graph(snapshot), snapshot.host_by_mac(src.mac),
                         snapshot.host_by_mac(dst.mac), plan.algorithm)
    return compile_one_directional(path, priority=plan.priority)


def _loss_rep(driver, src: Host, dst: Host, plan: ExperimentPlan):
    t0 = driver.now_ns
    train = PacketTrain(src.mac, dst.mac, t0, plan.interval_ns, plan.packet_count)
    tid = driver.start_packet_train(train)
    driver.advance_to(t0 + plan.pre_install_delay_ms * 10**6)
    rules = _compile(driver, src, dst, plan)
    handles = _install(driver, rules, plan)
    driver.advance_to(train.last_emission_ns)
    report = driver.train_report(tid)
    if report.first_received_index is None:
        raise BenchError("no packet reached the receiver; train too short for the install latency")
    if report.received != report.sent - report.first_received_index:
        raise BenchError(f"losses after path completion: {report}")
    setup = compute_setup_time(report.lost, plan.interval_ms, plan.pre_install_delay_ms)
    return handles, rules, report.sent, report.lost, setup


def _ack_rep(driver: Driver, src: Host, dst: Host, plan: ExperimentPlan):
    start = time.perf_counter()
    rules = _compile(driver, src, dst, plan)
    handles = _install(driver, rules, plan)
    setup = (time.perf_counter() - start) * 1000
    return handles, rules, 0, 0, setup


def run_experiment(driver_for_size: Union[Driver, Callable[[int], Driver]],
                   plan: ExperimentPlan) -> List[ExperimentResult]:
    """Run every (size, repetition) of the plan.

    ``driver_for_size`` is either one driver used for all sizes or a callable
    returning the driver for a given size (a fresh simulator per size).  The
    rules of the final repetition are left installed.
    """
    results = []
    for size in plan.sizes:
        driver = driver_for_size if isinstance(driver_for_size, Driver) else driver_for_size(size)
        missing = driver.capabilities().missing(["topology_read", "flow_write"])
        if missing:
            raise Unsupported(f"experiment needs {', '.join(missing)}")
        loss_based = isinstance(driver, TrafficSource)
        rep_fn = _loss_rep if loss_based else _ack_rep
        src, dst = choose_endpoints(driver.get_topology())
        handles: List[FlowHandle] = []
        setups, sent, lost = [], [], []
        rules: List[FlowRule] = []
        try:
            for _ in range(plan.repetitions):
                for h in handles:
                    driver.remove_flow(h)
                handles, rules, s, l, setup = rep_fn(driver, src, dst, plan)
                setups.append(setup)
                sent.append(s)
                lost.append(l)
        except NoPath as exc:
            log.error("size %d aborted: %s", size, exc)
            continue
        results.append(ExperimentResult(
            size=size,
            per_rep_setup_ms=tuple(setups),
            packets_sent=tuple(sent),
            packets_lost=tuple(lost),
            method="loss" if loss_based else "ack",
            rules=tuple(rules),
        ))
    return results


def _fmt(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return f"{value:.6f}".rstrip("0")


def export_csv(results: Sequence[ExperimentResult], path) -> None:
    if not results:
        raise ValueError("no results to export")
    methods = {r.method for r in results}
    if len(methods) != 1:
        raise ValueError("cannot mix loss-based and ack-based results in one file")
    setup_col = "setup_ms" if methods == {"loss"} else "ack_setup_ms"
    rows = []
    for r in sorted(results, key=lambda r: r.size):
        for rep, (setup, s, l) in enumerate(zip(r.per_rep_setup_ms, r.packets_sent, r.packets_lost), 1):
            rows.append((r.size, rep, s, l, _fmt(setup)))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS + (setup_col,))
        writer.writerows(rows)


def export_gnuplot(results: Sequence[ExperimentResult], path, plan: Optional[ExperimentPlan] = None) -> None:
    """Whitespace-separated ``size mean stddev`` rows with a commented header."""
    if not results:
        raise ValueError("no results to export")
    lines = []
    methods = sorted({r.method for r in results})
    lines.append(f"# measurement: {'/'.join(methods)}-based flow rule setup time (ms)")
    lines.append("# setup_ms = packets_lost * interval_ms - pre_install_delay_ms (loss-based)")
    lines.append("# path computed at install time; included in the measured window")
    if plan is not None:
        lines.append(f"# install_mode: {plan.install_mode.name.lower()} rate_pps: {plan.rate_pps} "
                     f"pre_install_delay_ms: {plan.pre_install_delay_ms} repetitions: {plan.repetitions}")
    lines.append("# size mean_setup_ms stddev_setup_ms")
    for r in sorted(results, key=lambda r: r.size):
        lines.append(f"{r.size} {_fmt(r.mean_setup_ms)} {_fmt(r.stddev_setup_ms)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
