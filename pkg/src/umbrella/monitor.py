"""Topology change detection by polling and diffing snapshots.

Changes that happen and revert within a single poll interval cannot be seen;
the detection latency bound is one poll interval.
"""
from __future__ import annotations

import itertools
import logging
import queue
import threading
from dataclasses import dataclass, field
from typing import Iterable, List, Optional

from umbrella.drivers.base import Driver, DriverError, Unsupported
from umbrella.model import (
    DeviceAdded,
    DeviceRemoved,
    HostAdded,
    HostRemoved,
    InvalidSnapshot,
    LinkAdded,
    LinkRemoved,
    TopologySnapshot,
    closure_violation,
)

log = logging.getLogger(__name__)


def diff_snapshots(old: TopologySnapshot, new: TopologySnapshot) -> list:
    """Ordered events turning ``old`` into ``new``.

    Removals come first (hosts, links, devices), then additions (devices,
    links, hosts), so every prefix of the list leaves a closed topology.  A
    device whose port set changed is removed and re-added together with the
    links and hosts that depend on it.
    """
    at = new.captured_at
    changed = {d for d in old.devices.keys() & new.devices.keys() if old.devices[d] != new.devices[d]}
    gone_devices = (old.devices.keys() - new.devices.keys()) | changed
    new_devices = (new.devices.keys() - old.devices.keys()) | changed

    def touches(link, devices):
        return link.src.device in devices or link.dst.device in devices

    gone_links = {l for l in old.links if l not in new.links or touches(l, changed)}
    new_links = {l for l in new.links if l not in old.links or touches(l, changed)}
    gone_hosts = {h for h in old.hosts if h not in new.hosts or h.attachment.device in changed}
    new_hosts = {h for h in new.hosts if h not in old.hosts or h.attachment.device in changed}

    events: list = []
    events += [HostRemoved(h, at) for h in sorted(gone_hosts, key=lambda h: h.mac)]
    events += [LinkRemoved(l, at) for l in sorted(gone_links)]
    events += [DeviceRemoved(d, at) for d in sorted(gone_devices)]
    events += [DeviceAdded(d, new.devices[d], at) for d in sorted(new_devices)]
    events += [LinkAdded(l, at) for l in sorted(new_links)]
    events += [HostAdded(h, at) for h in sorted(new_hosts, key=lambda h: h.mac)]
    return events


def apply_events(snapshot: TopologySnapshot, events: Iterable) -> TopologySnapshot:
    """Replay events onto a snapshot; raises InvalidSnapshot if closure breaks."""
    devices = dict(snapshot.devices)
    links = set(snapshot.links)
    hosts = {h.mac: h for h in snapshot.hosts}
    captured = snapshot.captured_at
    for ev in events:
        if isinstance(ev, DeviceAdded):
            devices[ev.device] = frozenset(ev.ports)
        elif isinstance(ev, DeviceRemoved):
            devices.pop(ev.device, None)
        elif isinstance(ev, LinkAdded):
            links.add(ev.link)
        elif isinstance(ev, LinkRemoved):
            links.discard(ev.link)
        elif isinstance(ev, HostAdded):
            hosts[ev.host.mac] = ev.host
        elif isinstance(ev, HostRemoved):
            hosts.pop(ev.host.mac, None)
        else:
            raise TypeError(f"not a topology event: {ev!r}")
        problem = closure_violation(devices, links, hosts.values())
        if problem:
            raise InvalidSnapshot(f"after {ev}: {problem}")
        captured = max(captured, ev.observed_at)
    return TopologySnapshot(devices, links, hosts.values(), captured)


# -- continuous monitoring ---------------------------------------------------------

@dataclass(frozen=True)
class MonitorConfig:
    poll_interval_ms: int = 500
    queue_capacity: int = 1024

    def __post_init__(self):
        if self.poll_interval_ms < 10:
            raise ValueError("poll_interval_ms must be at least 10")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be positive")


@dataclass(frozen=True)
class Resync:
    """Sent to a subscriber whose queue overflowed; carries the current snapshot."""

    snapshot: TopologySnapshot


@dataclass(frozen=True)
class MonitorDegraded:
    """A poll failed; the monitor keeps polling."""

    error: DriverError = field(compare=False)


class SubscriptionClosed(Exception):
    pass


_CLOSED = object()
_ids = itertools.count(1)


class Subscription:
    def __init__(self, capacity: int):
        self.id = next(_ids)
        self.lagged = False
        self._queue: queue.Queue = queue.Queue()
        self._capacity = capacity
        self._closed = False
        self._lock = threading.Lock()

    def _offer(self, events: List, snapshot: TopologySnapshot) -> None:
        with self._lock:
            if self._closed:
                return
            if self._queue.qsize() + len(events) > self._capacity:
                self.lagged = True
                self._drain_nowait()
                self._queue.put(Resync(snapshot))
                return
            for ev in events:
                self._queue.put(ev)

    def _drain_nowait(self) -> None:
        while True:
            try:
                self._queue.get_nowait()
            except queue.Empty:
                return

    def _close(self) -> None:
        with self._lock:
            if not self._closed:
                self._closed = True
                self._queue.put(_CLOSED)

    def receive(self, timeout: Optional[float] = None):
        """Next event; ``queue.Empty`` on timeout, SubscriptionClosed once drained after stop."""
        item = self._queue.get(timeout=timeout)
        if item is _CLOSED:
            self._queue.put(_CLOSED)
            raise SubscriptionClosed(f"subscription {self.id} closed")
        return item

    def drain(self) -> list:
        """Everything queued right now, without blocking."""
        out = []
        while True:
            try:
                item = self._queue.get_nowait()
            except queue.Empty:
                return out
            if item is _CLOSED:
                self._queue.put(_CLOSED)
                return out
            out.append(item)


class TopologyMonitor:
    def __init__(self, driver: Driver, config: Optional[MonitorConfig] = None):
        if not driver.capabilities().topology_read:
            raise Unsupported("monitoring needs topology_read")
        self.driver = driver
        self.config = config or MonitorConfig()
        self._subs: List[Subscription] = []
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.snapshot: Optional[TopologySnapshot] = None

    def subscribe(self) -> Subscription:
        sub = Subscription(self.config.queue_capacity)
        with self._lock:
            self._subs.append(sub)
        return sub

    def poll_once(self) -> list:
        """Poll the driver once and deliver any change; returns the events."""
        try:
            current = self.driver.get_topology()
        except DriverError as exc:
            log.warning("topology poll failed: %s", exc)
            self._publish([MonitorDegraded(exc)], self.snapshot)
            return []
        with self._lock:
            previous, self.snapshot = self.snapshot, current
        if previous is None:
            return []
        events = diff_snapshots(previous, current)
        if events:
            self._publish(events, current)
        return events

    def _publish(self, events: list, snapshot) -> None:
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            sub._offer(events, snapshot)

    def start(self) -> "TopologyMonitor":
        if self._thread is not None:
            return self
        self.poll_once()
        self._thread = threading.Thread(target=self._run, name="umbrella-topo-monitor", daemon=True)
        self._thread.start()
        return self

    def _run(self) -> None:
        interval = self.config.poll_interval_ms / 1000
        while not self._stop.wait(interval):
            self.poll_once()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None and self._thread is not threading.current_thread():
            self._thread.join()
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            sub._close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def start_monitor(driver: Driver, config: Optional[MonitorConfig] = None) -> TopologyMonitor:
    return TopologyMonitor(driver, config).start()
