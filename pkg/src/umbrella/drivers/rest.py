"""HTTP plumbing shared by the REST drivers."""
from __future__ import annotations

import json
import logging
import threading
from typing import Optional

import requests

from umbrella.drivers.base import AuthFailed, DriverConfig, NotFound, ProtocolError, Rejected, Unreachable

log = logging.getLogger(__name__)


def dump_body(body) -> bytes:
    """Compact, key-order-preserving JSON; request bodies are compared byte for byte."""
    return json.dumps(body, separators=(",", ":")).encode("utf-8")


class RestClient:
    """Thin wrapper over ``requests`` mapping HTTP failures onto driver errors.

    One session per thread so a shared driver can issue concurrent requests.
    """

    def __init__(self, config: DriverConfig):
        self.base = config.endpoint.rstrip("/")
        self.auth = (config.username, config.password)
        self.timeout = config.request_timeout_ms / 1000
        self._local = threading.local()

    @property
    def session(self) -> requests.Session:
        s = getattr(self._local, "session", None)
        if s is None:
            s = requests.Session()
            s.auth = self.auth
            s.headers.update({"Accept": "application/json"})
            self._local.session = s
        return s

    def request(self, method: str, path: str, body=None, params=None) -> requests.Response:
        data = None
        headers = {}
        if body is not None:
            data = dump_body(body)
            headers["Content-Type"] = "application/json"
        try:
            resp = self.session.request(method, self.base + path, data=data, params=params,
                                        headers=headers, timeout=self.timeout)
        except requests.Timeout as exc:
            raise Unreachable(f"{method} {path}: timed out") from exc
        except requests.RequestException as exc:
            raise Unreachable(f"{method} {path}: {exc}") from exc
        log.debug("%s %s -> %s", method, path, resp.status_code)
        if resp.status_code == 401:
            raise AuthFailed(f"{method} {path}: 401 Unauthorized")
        if resp.status_code == 404:
            raise NotFound(f"{method} {path}: 404")
        if 400 <= resp.status_code < 500:
            raise Rejected(f"{method} {path}: {resp.status_code} {resp.text[:200]}")
        if resp.status_code >= 500:
            raise ProtocolError(f"{method} {path}: {resp.status_code} {resp.text[:200]}")
        return resp

    def get_json(self, path: str, params=None):
        resp = self.request("GET", path, params=params)
        try:
            return resp.json()
        except ValueError as exc:
            raise ProtocolError(f"GET {path}: response is not JSON") from exc

    def close(self) -> None:
        s: Optional[requests.Session] = getattr(self._local, "session", None)
        if s is not None:
            s.close()
