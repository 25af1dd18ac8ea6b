import pytest

from umbrella.drivers import (
    CapabilitySet, Driver, DriverConfig, DuplicateName, UnknownDriver, Unsupported,
    available_drivers, create_driver, register_driver, unregister_driver,
)
from umbrella.drivers.odl import OdlDriver
from umbrella.drivers.onos import OnosDriver
from umbrella.mock import MockController


def test_builtin_registry():
    assert {"mock", "onos", "odl"} <= set(available_drivers())


def test_create_mock_has_every_capability():
    driver = create_driver(DriverConfig("mock"))
    assert isinstance(driver, MockController)
    assert driver.capabilities() == CapabilitySet(True, True, True, True, True)


def test_rest_drivers_poll():
    onos = create_driver(DriverConfig("onos", "http://127.0.0.1:8181"))
    odl = create_driver(DriverConfig("odl", "http://127.0.0.1:8181"))
    assert isinstance(onos, OnosDriver) and isinstance(odl, OdlDriver)
    assert not onos.capabilities().event_push
    assert not odl.capabilities().event_push


def test_unknown_driver():
    with pytest.raises(UnknownDriver):
        create_driver(DriverConfig("nope"))


def test_duplicate_registration():
    with pytest.raises(DuplicateName):
        register_driver("mock", lambda c: None)


class _ReadOnly(Driver):
    def capabilities(self):
        return CapabilitySet(topology_read=True, flow_write=False, flow_stats=False, port_stats=False)

    get_topology = install_flow = remove_flow = list_flows = get_flow_stats = get_port_stats = None


def test_missing_capability_refused_at_construction():
    register_driver("readonly", lambda c: _ReadOnly())
    try:
        assert create_driver(DriverConfig("readonly"), requires=["topology_read"])
        with pytest.raises(Unsupported, match="flow_write"):
            create_driver(DriverConfig("readonly"), requires=["topology_read", "flow_write"])
    finally:
        unregister_driver("readonly")


def test_flow_stats_needs_flow_write():
    with pytest.raises(ValueError):
        CapabilitySet(flow_write=False, flow_stats=True)


class TestConfig:
    def test_toml_with_controller_table(self, tmp_path):
        path = tmp_path / "umbrella.toml"
        path.write_text(
            '[controller]\nname = "onos"\nendpoint = "http://10.0.0.5:8181"\n'
            'username = "onos"\npassword = "rocks"\nrequest_timeout_ms = 2500\n'
            '[controller.extras]\napp_id = "org.example"\n'
        )
        cfg = DriverConfig.from_toml(path, env={})
        assert cfg == DriverConfig("onos", "http://10.0.0.5:8181", "onos", "rocks", 2500, {"app_id": "org.example"})

    def test_toml_top_level(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('name = "odl"\nendpoint = "http://h:8181"\n')
        assert DriverConfig.from_toml(path, env={}).name == "odl"

    def test_env_overrides(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('name = "odl"\nendpoint = "http://h:8181"\nusername = "admin"\n')
        env = {"UMBRELLA_CONTROLLER": "onos", "UMBRELLA_ENDPOINT": "http://other:8181",
               "UMBRELLA_USER": "karaf", "UMBRELLA_PASS": "secret"}
        cfg = DriverConfig.from_toml(path, env=env)
        assert (cfg.name, cfg.endpoint, cfg.username, cfg.password) == ("onos", "http://other:8181", "karaf", "secret")

    def test_defaults(self):
        cfg = DriverConfig.from_mapping({}, env={})
        assert cfg.request_timeout_ms == 5000 and cfg.name == "mock"

    @pytest.mark.parametrize("endpoint", ["", "not a url", "://x"])
    def test_malformed_endpoint(self, endpoint):
        with pytest.raises(ValueError):
            DriverConfig("onos", endpoint)
