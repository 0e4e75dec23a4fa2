import json
import subprocess
import sys

import pytest

from signedchord.cli import dumps, main

SPHERE = {"solid": {"sphere": {"center": [0, 0, 0], "radius": 1.0}}}
SHELL = {"solid": {"difference": [{"sphere": {"center": [0, 0, 0], "radius": 1.0}},
                                  {"sphere": {"center": [0, 0, 0], "radius": 0.5}}]}}
OVERLAP = {"solid": {"union": [{"sphere": {"center": [0, 0, 0], "radius": 1.0}},
                               {"sphere": {"center": [1, 0, 0], "radius": 1.0}}]}}
SHELL_FIELD = {"hull": {"sphere": {"center": [0, 0, 0], "radius": 1.0}},
               "regions": [{"solid": SHELL["solid"], "rho": 1.0}]}


@pytest.fixture
def files(tmp_path):
    out = {}
    for name, doc in (("sphere", SPHERE), ("shell", SHELL), ("overlap", OVERLAP),
                      ("shellfield", SHELL_FIELD)):
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(doc))
        out[name] = str(p)
    return out


def test_describe(files, capsys):
    assert main(["describe", "--body", files["sphere"]]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[:4] == ["V=4.18879", "S=12.56637", "S*=12.56637", "<l>_Cauchy=1.33333"]


def test_describe_shell(files, capsys):
    assert main(["describe", "--body", files["shell"]]) == 0
    out = capsys.readouterr().out
    assert "V=3.66519" in out and "S=15.70796" in out and "convex_with_holes=true" in out


@pytest.mark.parametrize("argv", [
    ["describe", "--body", "x.json", "--frobnicate"],
    [],
    ["nosuch"],
    ["sample-chords", "--body", "x.json", "--bins", "4"],
    ["sample-chords", "--body", "x.json", "--samples", "0"],
    ["sample-chords", "--body", "x.json", "--seed", "-1"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0


def test_config_errors(files, tmp_path, capsys):
    assert main(["identities", "--body", files["overlap"], "--samples", "10"]) == 2
    assert "metrics" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"solid":\n  {"sphere": }\n}')
    assert main(["describe", "--body", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["describe", "--body", str(tmp_path / "missing.json")]) == 2
    assert main(["dirac", "--body", files["sphere"], "--methods", "gamma,magic"]) == 2
    assert main(["dirac", "--body", files["sphere"], "--phi", "cosh:1"]) == 2


def test_overlap_with_user_metrics_runs(files, tmp_path, capsys):
    doc = dict(OVERLAP, metrics={"volume": 7.0, "surface": 21.0})
    p = tmp_path / "o.json"
    p.write_text(json.dumps(doc))
    assert main(["describe", "--body", str(p)]) == 0
    assert "S*=unknown" in capsys.readouterr().out


def _run(argv, tmp_path, name):
    out = tmp_path / name
    code = main(argv + ["--out", str(out)])
    return code, out.read_bytes()


def test_sample_chords_csv_and_reproducibility(files, tmp_path):
    argv = ["sample-chords", "--body", files["shell"], "--samples", "5000", "--bins", "16",
            "--seed", "3"]
    c1, a = _run(argv, tmp_path, "a.csv")
    c2, b = _run(argv, tmp_path, "b.csv")
    c3, c = _run(argv + ["--workers", "2"], tmp_path, "c.csv")
    assert c1 == c2 == c3 == 0 and a == b == c
    lines = a.decode().splitlines()
    assert lines[0] == "bin_lo,bin_hi,density,stderr,charge,n_plus,n_minus"
    assert len([l for l in lines if not l.startswith("#")]) == 17
    assert "# seed=3" in lines and "# total_charge=" in a.decode() and "# n_events=5000" in lines
    _, d = _run(argv[:-1] + ["4"], tmp_path, "d.csv")
    assert d != a


@pytest.mark.parametrize("cmd", [["sample-radii", "--dist", "iota_minus"],
                                 ["sample-distances", "--dist", "eta"],
                                 ["sample-distances"],
                                 ["signed-cld", "--bins", "32", "--slope0", "cauchy"]])
def test_table_commands(cmd, files, tmp_path):
    code, out = _run(cmd + ["--body", files["shell"], "--samples", "5000"], tmp_path, "t.csv")
    assert code == 0 and out.startswith(b"bin_lo,bin_hi")


def test_signed_cld_coarse_grid(files, tmp_path):
    code = main(["signed-cld", "--body", files["sphere"], "--bins", "8", "--window", "9",
                 "--samples", "100", "--out", str(tmp_path / "x")])
    assert code == 2


def test_dirac_json(files, tmp_path):
    code, out = _run(["dirac", "--body", files["shell"], "--phi", "pow:2", "--samples", "20000",
                      "--bins", "64"], tmp_path, "d.json")
    rep = json.loads(out)
    assert code == 0 and rep["pass"] and set(rep["estimates"]) == {"gamma", "radii", "chords", "pairs"}
    assert rep["meta"]["seed"] == 20080917


def test_optical_json(files, tmp_path):
    code, out = _run(["optical", "--field", files["shellfield"], "--samples", "20000"],
                     tmp_path, "o.json")
    rep = json.loads(out)
    assert code == 0 and rep["pass"]
    assert rep["fourth_moment_constant"]["C_mu_fourth_moment"]["pass"] is True


def test_walk_csv(files, tmp_path):
    code, out = _run(["walk", "--body", files["sphere"], "--mfp", "0.5,2", "--samples", "20000",
                      "--kink", "1000"], tmp_path, "w.csv")
    lines = out.decode().splitlines()
    assert code == 0 and lines[0].startswith("body,mfp,n,mean")
    assert len([l for l in lines[1:] if not l.startswith("#")]) == 2
    assert "# kink_instances=1000" in lines


def test_identities_sphere(files, tmp_path):
    code, out = _run(["identities", "--body", files["sphere"], "--samples", "20000", "--bins", "64"],
                     tmp_path, "i.json")
    rep = json.loads(out)
    assert code == 0 and rep["pass"], [k for k, v in rep["checks"].items() if v["pass"] is False]
    assert rep["checks"]["c_M"]["value"] == 1.0
    assert "nu_reweighting" in rep["checks"]


def test_identities_shell(files, tmp_path):
    code, out = _run(["identities", "--body", files["shell"], "--samples", "20000", "--bins", "64"],
                     tmp_path, "i.json")
    rep = json.loads(out)
    assert code == 0 and rep["checks"]["c_M"]["reference"] == 1.25
    assert "nu_reweighting" not in rep["checks"]


def test_dumps_format():
    assert dumps({"a": 0.1, "b": float("nan"), "c": [1, True, None]}) == \
        '{\n  "a": 0.10000000000000001,\n  "b": null,\n  "c": [\n    1,\n    true,\n    null\n  ]\n}'


def test_module_entry_point(files):
    r = subprocess.run([sys.executable, "-m", "signedchord", "describe", "--body", files["sphere"]],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("V=4.18879")
