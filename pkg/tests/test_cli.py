import json

import pytest

from qdtrees.cli import read_config, run


def _records(capsys):
    return [json.loads(line) for line in capsys.readouterr().out.splitlines() if line.strip()]


def test_tree_command(capsys):
    assert run(["tree", "--phi", "0,0;1,0"]) == 0
    (rec,) = _records(capsys)
    assert rec["provenance"]["energy_convention"] == "e(pi)=2|phi| on (T,2d)"
    assert rec["provenance"]["tool_version"]


def test_tree_output_is_deterministic(capsys):
    run(["tree", "--phi", "1,0;0,0;-2,0;0,0;1,0", "--kind", "both"])
    a = capsys.readouterr().out
    run(["tree", "--phi", "1,0;0,0;-2,0;0,0;1,0", "--kind", "both"])
    assert capsys.readouterr().out == a


def test_project_command(capsys):
    assert run(["project", "--phi", "1,0", "--points", "0.3,7;0.3,-2"]) == 0
    a, b = _records(capsys)
    assert a["offset"] == pytest.approx(0.6) and b["offset"] == pytest.approx(0.6)


def test_energy_command(capsys):
    assert run(["energy", "--phi", "1,0", "--mesh-h", "0.1"]) == 0
    (rec,) = _records(capsys)
    assert rec["energy"] == pytest.approx(rec["reference_2_l1"], rel=0.02)


def test_trace_command(capsys):
    assert run(["trace", "--phi", "1,0", "--z0", "0.3,0"]) == 0
    assert _records(capsys)[0]["arclength"] > 0


def test_example_a_exit_codes(capsys):
    assert run(["example-a", "--k", "2"]) == 0
    rec = _records(capsys)[0]
    assert rec["hopf_h"] == [-0.75, 0.0] and rec["pass"]
    assert run(["example-a", "--k", "1"]) == 2


def test_plateau_command(tmp_path, capsys):
    csv_path = tmp_path / "hist.csv"
    assert run(["plateau", "--phi", "0,0;1,0", "--mesh-h", "0.25", "--csv", str(csv_path)]) == 0
    rec = _records(capsys)[0]
    assert rec["converged"]
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("# ") and len(lines) > 2


def test_verify_nmi_command(capsys):
    assert run(["verify-nmi", "--trials", "2", "--mesh-h", "0.1"]) == 0
    assert all(r["pass"] for r in _records(capsys))


def test_approx_command(capsys):
    assert run(["approx", "--pole", "2,0", "--degree", "4"]) == 0
    assert _records(capsys)[0]["l1_error"] == pytest.approx(0.0148, rel=0.05)


def test_render_command(tmp_path):
    path = tmp_path / "z.svg"
    assert run(["render", "--phi", "0,0;1,0", "--out", str(path)]) == 0
    text = path.read_text()
    assert text.startswith("<") and "<svg" in text and "energy_convention" in text


def test_bad_input_exit_code(capsys):
    assert run(["tree", "--phi", "1,2,3"]) == 2
    assert run(["tree", "--phi", "0,0"]) == 2
    assert run(["no-such-command"]) == 2
    capsys.readouterr()


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# test\nphi = 1,0\nmesh-h = 0.2\n")
    assert read_config(str(cfg)) == {"phi": "1,0", "mesh_h": "0.2"}
    assert run(["energy", "--config", str(cfg)]) == 0
    a = _records(capsys)[0]
    assert run(["energy", "--config", str(cfg), "--mesh-h", "0.1"]) == 0
    b = _records(capsys)[0]
    assert a["provenance"]["config_hash"] != b["provenance"]["config_hash"]
    assert a["energy"] != b["energy"]


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = red\n")
    assert run(["energy", "--config", str(cfg)]) == 2
    capsys.readouterr()
