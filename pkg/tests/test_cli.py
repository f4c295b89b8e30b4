import json
import os
import re
import subprocess
import sys

import numpy as np
import pytest

from novikov import svg
from novikov.cli import main

SCEN = os.path.join(os.path.dirname(__file__), os.pardir, "scenarios")


def scen(name):
    return os.path.join(SCEN, name)


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def manifest(out):
    with open(os.path.join(out, "manifest.json")) as fh:
        return json.load(fh)


def test_trace_smoke(tmp_path):
    out = str(tmp_path / "o")
    assert main(["trace", "--scenario", scen("trace_tb.json"), "--out", out, "--svg"]) == 0
    m = manifest(out)
    assert m["subcommand"] == "trace" and len(m["scenario_sha256"]) == 64
    assert "trajectories.json" in m["outputs"]
    assert any(k.endswith(".svg") for k in m["outputs"])
    for name, h in m["outputs"].items():
        assert len(h) == 64 and os.path.exists(os.path.join(out, name))


def test_missing_field_exit_1(tmp_path, capsys):
    assert main(["trace", "--scenario", scen("bad_missing.json"), "--out", str(tmp_path)]) == 1
    assert "$.eps_f" in capsys.readouterr().err


def test_wrong_type_names_path(tmp_path, capsys):
    p = write(tmp_path, "s.json", {"schema_version": 1, "dispersion": {"preset": "tight_binding"},
                                   "eps_f": "zero", "field": {"b": [0, 0, 1]}})
    assert main(["trace", "--scenario", p, "--out", str(tmp_path / "o")]) == 1
    assert "$.eps_f" in capsys.readouterr().err


def test_unreadable_scenario(tmp_path):
    assert main(["trace", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1


def test_numerical_failure_exit_2(tmp_path, capsys):
    p = write(tmp_path, "s.json", {"schema_version": 1, "eps_f": 0.0,
                                   "zkf": {"series": {"l": [1, 2, 3], "dx": [1, 2, 3], "dy": [0, 0, 0]}}})
    out = str(tmp_path / "o")
    assert main(["zkf", "--scenario", p, "--out", out]) == 2
    assert "numerical failure" in capsys.readouterr().err
    assert os.path.exists(os.path.join(out, "manifest.json"))


def test_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "novikov.cli", "zkf", "--scenario", scen("zkf_series.json"),
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr


def test_rerun_identical_hashes(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    for out in (a, b):
        assert main(["classify", "--scenario", scen("classify_corrugated.json"), "--out", out]) == 0
    assert manifest(a)["outputs"] == manifest(b)["outputs"]


def test_worker_count_invariance(tmp_path, monkeypatch):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["quantize", "--scenario", scen("quantize_tb.json"), "--out", a, "--workers", "1"]) == 0
    monkeypatch.setenv("NOVIKOV_WORKERS", "2")
    assert main(["quantize", "--scenario", scen("quantize_tb.json"), "--out", b]) == 0
    assert manifest(a)["outputs"] == manifest(b)["outputs"]


def test_svg_empty_has_axes():
    s = svg.trajectories_svg([])
    assert s.startswith("<svg") and s.count("<line") == 2 and "<polyline" not in s


def test_svg_strip_boundaries():
    t = np.linspace(0, 10, 200)
    c = np.column_stack([t, 0.3 * np.sin(t)])
    s = svg.trajectories_svg([c], strips=[((1.0, 0.0), 0.6)])
    assert s.count("stroke-dasharray") == 2


def test_svg_two_zones_legend():
    dirs = np.array([[0, 0, 1], [0, 1, 0], [1, 0, 0.1]], float)
    recs = [{"class": "RegularOpen"}] * 3
    zones = [{"id": 0, "M": [1, 0, 0], "members": [0]}, {"id": 1, "M": [0, 1, 0], "members": [1, 2]}]
    s = svg.diagram_svg(dirs, recs, zones)
    fills = set(re.findall(r'<circle[^>]*r="3" fill="(#[0-9a-f]{6})"', s))
    assert fills == {svg.PALETTE[0], svg.PALETTE[1]}
    assert "zone 0: M=(1,0,0)" in s and "zone 1: M=(0,1,0)" in s
