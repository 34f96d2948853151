import hashlib
import json

import pytest

from mcflab.cli import main


def _write_spec(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def flat_spec(tmp_path):
    return _write_spec(tmp_path / "flat.json", {
        "schema_version": 1,
        "scenario": "flat_plane",
        "params": {"value": 0.25, "radius": 2.0, "t_end": 0.004},
        "seed": 7,
        "resolution": 32,
    })


def test_run_writes_layout_and_manifest(flat_spec, tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["run", "--spec", flat_spec, "--out", str(out)])
    assert rc == 0
    assert "flat_plane: PASS" in capsys.readouterr().out
    for rel in ("verdict.json", "run_manifest.json", "run/timeseries.csv",
                "run/events.ndjson", "run/manifest.json"):
        assert (out / rel).is_file(), rel

    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["tool"] == "mcflab" and manifest["seed"] == 7
    spec_bytes = open(flat_spec, "rb").read()
    assert manifest["spec_sha256"] == hashlib.sha256(spec_bytes).hexdigest()
    # inventory covers every file except the manifest itself, with live hashes
    listed = set(manifest["files"])
    on_disk = {p.relative_to(out).as_posix() for p in out.rglob("*")
               if p.is_file() and p.name != "run_manifest.json"}
    assert listed == on_disk
    for rel, digest in manifest["files"].items():
        assert hashlib.sha256((out / rel).read_bytes()).hexdigest() == digest


def test_run_seed_override_recorded(flat_spec, tmp_path):
    out = tmp_path / "out"
    rc = main(["run", "--spec", flat_spec, "--out", str(out),
               "--seed-override", "99"])
    assert rc == 0
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["seed"] == 99
    assert manifest["resolved_config"]["seed"] == 99


def test_run_default_out_uses_env(flat_spec, tmp_path, monkeypatch):
    monkeypatch.setenv("MCFLAB_OUT", str(tmp_path / "envroot"))
    rc = main(["run", "--spec", flat_spec])
    assert rc == 0
    assert (tmp_path / "envroot" / "flat" / "verdict.json").is_file()


def test_run_rejects_bad_spec(tmp_path, capsys):
    bad = _write_spec(tmp_path / "bad.json", {
        "schema_version": 1, "scenario": "flat_plane",
        "params": {"bogus": 1.0},
    })
    assert main(["run", "--spec", bad]) == 2
    err = capsys.readouterr().err
    assert "$.params.bogus" in err

    assert main(["run", "--spec", str(tmp_path / "absent.json")]) == 2
    assert main(["run", "--spec", _write_spec(tmp_path / "empty.json", {})]) == 2
    garbage = tmp_path / "garbage.json"
    garbage.write_text("not json {")
    assert main(["run", "--spec", str(garbage)]) == 2


def test_run_refuses_sweep_spec(tmp_path):
    doc = {"schema_version": 1, "scenario": "sweep", "runs": []}
    spec = _write_spec(tmp_path / "sw.json", doc)
    assert main(["run", "--spec", spec]) == 2


def test_failing_run_exits_one(tmp_path):
    spec = _write_spec(tmp_path / "doomed.json", {
        "schema_version": 1,
        "scenario": "flat_stay_graphical",
        "params": {"l": 0.05, "c_hat": 1e-6, "t_end": 0.002},
        "resolution": 32,
    })
    assert main(["run", "--spec", spec, "--out", str(tmp_path / "o")]) == 1


def test_sweep_parallel_byte_identical(tmp_path):
    spec = _write_spec(tmp_path / "sweep.json", {
        "schema_version": 1,
        "scenario": "sweep",
        "base": {
            "schema_version": 1,
            "scenario": "flat_plane",
            "params": {"t_end": 0.004},
            "resolution": 32,
        },
        "vary": {"value": [0.0, 0.5], "radius": [1.0, 2.0]},
    })
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--spec", spec, "--out", str(a)]) == 0
    assert main(["sweep", "--spec", spec, "--out", str(b),
                 "--parallelism", "4"]) == 0
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()
    for i in range(4):
        rid = f"run_{i:04d}"
        pa = a / "runs" / rid / "run" / "timeseries.csv"
        pb = b / "runs" / rid / "run" / "timeseries.csv"
        assert pa.read_bytes() == pb.read_bytes()


def test_plotdata_snapshots_and_margins(flat_spec, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--spec", flat_spec, "--out", str(out)]) == 0
    assert main(["plotdata", "--run", str(out), "--kind", "snapshots"]) == 0
    assert main(["plotdata", "--run", str(out), "--kind", "margins"]) == 0
    snaps = (out / "plots" / "snapshots.csv").read_text().splitlines()
    assert snaps[0] == "snapshot,t,i,x0,f"
    margins = (out / "plots" / "margins.csv").read_text().splitlines()
    assert margins[0] == "t,monitor,margin"
    assert len(margins) > 1


def test_plotdata_flags_incomplete_run(flat_spec, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--spec", flat_spec, "--out", str(out)]) == 0
    (out / "run" / "timeseries.csv").unlink()
    rc = main(["plotdata", "--run", str(out), "--kind", "snapshots"])
    assert rc == 1
    assert "incomplete" in capsys.readouterr().err


def test_plotdata_missing_envelopes(flat_spec, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--spec", flat_spec, "--out", str(out)]) == 0
    rc = main(["plotdata", "--run", str(out), "--kind", "envelopes"])
    assert rc == 1
    assert "missing input" in capsys.readouterr().err
