"""CLI contract: schema gate, exit codes, deterministic artifacts."""

import json
import os
import xml.etree.ElementTree as ET

import pytest

from martinlab import cli
from martinlab.groups import ConfigError, NumericalError


def _config(tmp_path, name="cfg.json", **overrides):
    cfg = {
        "group": "Z * Z",
        "measure": {"kind": "srw"},
        "kind": "green",
        "params": {"r": [0.3, 0.5, 0.7], "y": ["e", "a", "a^2"]},
        "seed": 0,
    }
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def test_green_run_emits_artifacts(tmp_path, capsys):
    cfg = _config(tmp_path)
    out = tmp_path / "run"
    rc = cli.main(["green", "--config", str(cfg), "--out", str(out), "--svg"])
    assert rc == 0
    captured = capsys.readouterr()
    assert "green:" in captured.out          # verdict lines on stdout
    assert "rows in" in captured.err         # timing on stderr only

    csv_text = (out / "green.csv").read_text().splitlines()
    assert csv_text[0].startswith("# config ")
    digest = csv_text[0].split()[-1]
    assert len(digest) == 16
    assert csv_text[1].startswith("# martinlab ")
    assert csv_text[2].split(",")[:3] == ["r", "x", "y"]
    assert len(csv_text) == 3 + 9            # header block + 9 grid rows

    doc = json.loads((out / "green_summary.json").read_text())
    assert doc["kind"] == "green"
    assert doc["config"] == digest
    assert doc["n_rows"] == 9
    assert doc["summary"]["all_certified"] is True

    svg = (out / "green.svg").read_text()
    assert f"<!-- config {digest} -->" in svg
    ET.fromstring(svg)                       # well-formed XML


def test_artifacts_byte_identical_across_thread_counts(tmp_path, monkeypatch):
    cfg = _config(tmp_path)
    blobs = {}
    for threads in ("1", "3"):
        monkeypatch.setenv("MARTINLAB_THREADS", threads)
        out = tmp_path / f"t{threads}"
        assert cli.main(["green", "--config", str(cfg), "--out", str(out),
                         "--svg"]) == 0
        blobs[threads] = {
            name: (out / name).read_bytes()
            for name in ("green.csv", "green_summary.json", "green.svg")
        }
    assert blobs["1"] == blobs["3"]


def test_rerun_is_byte_identical(tmp_path):
    cfg = _config(tmp_path)
    outs = []
    for i in range(2):
        out = tmp_path / f"rep{i}"
        assert cli.main(["green", "--config", str(cfg),
                         "--out", str(out)]) == 0
        outs.append((out / "green.csv").read_bytes())
    assert outs[0] == outs[1]


def test_seed_override_changes_config_hash(tmp_path):
    cfg = _config(tmp_path)
    hashes = []
    for extra in ([], ["--seed", "7"]):
        out = tmp_path / ("base" if not extra else "seeded")
        assert cli.main(["green", "--config", str(cfg),
                         "--out", str(out)] + extra) == 0
        hashes.append((out / "green.csv").read_text().splitlines()[0])
    assert hashes[0] != hashes[1]


def test_config_error_exit_and_no_partial_files(tmp_path):
    cfg = _config(tmp_path, params={"r": [0.5], "bogus": [1]})
    out = tmp_path / "broken"
    rc = cli.main(["green", "--config", str(cfg), "--out", str(out)])
    assert rc == cli.EXIT_CONFIG
    assert not out.exists()                  # validation precedes any write


def test_kind_subcommand_mismatch(tmp_path):
    cfg = _config(tmp_path, kind="floyd")
    rc = cli.main(["green", "--config", str(cfg), "--out", str(tmp_path)])
    assert rc == cli.EXIT_CONFIG


def test_missing_config_file(tmp_path):
    rc = cli.main(["green", "--config", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path)])
    assert rc == cli.EXIT_CONFIG


def test_resource_budget_exit(tmp_path):
    cfg = _config(tmp_path, budgets={"wall_seconds": 1e-9})
    rc = cli.main(["green", "--config", str(cfg), "--out", str(tmp_path)])
    assert rc == cli.EXIT_RESOURCE


def test_numerical_error_maps_to_exit_4(tmp_path, monkeypatch):
    def boom(ctx):
        raise NumericalError("synthetic failure")

    monkeypatch.setitem(cli.RUNNERS, "green", boom)
    cfg = _config(tmp_path)
    rc = cli.main(["green", "--config", str(cfg), "--out", str(tmp_path)])
    assert rc == cli.EXIT_NUMERICAL


def test_validate_config_rejections():
    base = {"group": "Z", "measure": {"kind": "srw"}, "kind": "green",
            "params": {"r": [0.5]}}
    cli.validate_config(dict(base))
    bad = [
        dict(base, extra=1),
        dict(base, kind="nope"),
        dict(base, group=7),
        dict(base, measure={"weights": [1.0]}),
        dict(base, params={"r": [0.5], "window": [3]}),
        dict(base, budgets={"wall_seconds": -1}),
        dict(base, budgets={"fuel": 10}),
        dict(base, seed=1.5),
    ]
    for cfg in bad:
        with pytest.raises(ConfigError):
            cli.validate_config(cfg)


def test_empty_grid_rejected_before_writes(tmp_path):
    cfg = _config(tmp_path, params={"r": []})
    out = tmp_path / "empty"
    rc = cli.main(["green", "--config", str(cfg), "--out", str(out)])
    assert rc == cli.EXIT_CONFIG
    assert not out.exists()


def test_emit_plots_kind_mismatch(tmp_path):
    cfg = {"group": "Z", "measure": {"kind": "srw"}, "kind": "green",
           "params": {"r": [0.5]}}
    report = cli.run_experiment(cfg)
    with pytest.raises(ConfigError):
        cli.emit_plots(report, str(tmp_path / "x.svg"), plot_kind="llt-fit")
    cli.emit_plots(report, str(tmp_path / "ok.svg"))
    assert (tmp_path / "ok.svg").exists()


def test_radius_and_floyd_subcommands(tmp_path):
    rad = _config(tmp_path, name="rad.json", kind="spectral-radius",
                  params={"n_max": [40, 60]})
    out = tmp_path / "rad"
    assert cli.main(["radius", "--config", str(rad), "--out", str(out)]) == 0
    lines = (out / "radius.csv").read_text().splitlines()
    assert lines[2].split(",")[0] == "n_max"
    assert len(lines) == 3 + 2

    fl = _config(tmp_path, name="fl.json", kind="floyd",
                 params={"a": [2.0], "radius": 6,
                         "pairs": [["a", "b"], ["a^2", "a*b"]]})
    outf = tmp_path / "fl"
    assert cli.main(["floyd", "--config", str(fl), "--out", str(outf)]) == 0
    doc = json.loads((outf / "floyd_summary.json").read_text())
    assert doc["kind"] == "floyd"
    assert doc["n_rows"] == 2


def test_group_factors_block(tmp_path):
    cfg = _config(tmp_path, group={"factors": ["Z", "Z"]},
                  params={"r": [0.5]})
    out = tmp_path / "fb"
    assert cli.main(["green", "--config", str(cfg), "--out", str(out)]) == 0
    doc = json.loads((out / "green_summary.json").read_text())
    assert doc["n_rows"] == 1
