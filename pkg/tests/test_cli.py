import io
import json
import subprocess
import sys

import pytest

from stub_server import FIXTURES, StubServer
from umbrella.cli import main, parse_sizes


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


@pytest.mark.parametrize("text,expected", [
    ("10..100:10", list(range(10, 101, 10))), ("10,20,30", [10, 20, 30]), ("5", [5]), ("2..4", [2, 3, 4]),
])
def test_parse_sizes(text, expected):
    assert parse_sizes(text) == expected


def test_topology_show_defaults_to_linear3():
    code, out = run("topology", "show", "--driver", "mock")
    assert code == 0
    assert out.splitlines()[0].split() == ["devices:", "3", "links:", "4", "hosts:", "3"]


def test_topology_show_json(tmp_path):
    topo = tmp_path / "t.json"
    topo.write_text(json.dumps({"kind": "linear", "n": 5}))
    code, out = run("topology", "show", "--driver", "mock", "--topology", str(topo), "--json")
    doc = json.loads(out)
    assert code == 0 and len(doc["devices"]) == 5 and len(doc["links"]) == 8


def test_path_compute():
    code, out = run("path", "compute", "--driver", "mock", "--src-mac", "00:00:00:00:00:01",
                    "--dst-mac", "00:00:00:00:00:03")
    assert code == 0
    assert out.splitlines() == [
        "of:0000000000000001 in 1 out 2",
        "of:0000000000000002 in 2 out 3",
        "of:0000000000000003 in 2 out 1",
    ]


def test_flows_install_from_file(tmp_path):
    rules = tmp_path / "rules.json"
    rules.write_text(json.dumps([
        {"device": "of:0000000000000001", "match": {"eth_dst": "00:00:00:00:00:03"}, "actions": [{"output": 2}]},
        {"device": "openflow:2", "match": {"in_port": 2}, "actions": [{"output": 3}]},
    ]))
    code, out = run("flows", "install", "--driver", "mock", "--file", str(rules))
    assert code == 0 and len(out.splitlines()) == 2


def test_flows_list_empty_mock():
    assert run("flows", "list", "--driver", "mock") == (0, "")


def test_bench_run_writes_outputs(tmp_path):
    csv_path, dat_path = tmp_path / "r.csv", tmp_path / "r.dat"
    code, out = run("bench", "run", "--driver", "mock", "--sizes", "10,20", "--reps", "2",
                    "--per-rule-ms", "5", "--csv", str(csv_path), "--dat", str(dat_path))
    assert code == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "size,rep,packets_sent,packets_lost,setup_ms"
    assert [l.split(",")[-1] for l in lines[1:]] == ["50", "50", "100", "100"]
    assert "install_mode: sequential" in dat_path.read_text()


def test_bench_parallel():
    code, out = run("bench", "run", "--driver", "mock", "--sizes", "10,40", "--reps", "1",
                    "--per-rule-ms", "5", "--install-mode", "par")
    means = [float(l.split()[1]) for l in out.splitlines()[1:]]
    assert code == 0 and means == [5.0, 5.0]


def test_errors_exit_nonzero(capsys):
    assert run("topology", "show", "--driver", "nope")[0] == 1
    assert "umbrella: error:" in capsys.readouterr().err
    assert run("path", "compute", "--driver", "mock", "--src-mac", "00:00:00:00:00:01",
               "--dst-mac", "00:00:00:00:00:99")[0] == 1


def test_config_file_and_env(tmp_path, monkeypatch):
    cfg = tmp_path / "umbrella.toml"
    cfg.write_text('[controller]\nname = "onos"\nendpoint = "http://127.0.0.1:1"\n')
    with StubServer(FIXTURES / "onos" / "cassette_topology.json") as server:
        monkeypatch.setenv("UMBRELLA_ENDPOINT", server.url)
        monkeypatch.setenv("UMBRELLA_USER", "onos")
        monkeypatch.setenv("UMBRELLA_PASS", "rocks")
        code, out = run("topology", "show", "--config", str(cfg))
    assert code == 0 and out.startswith("devices: 3  links: 4  hosts: 2")


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "umbrella.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("umbrella ")
