import csv
import hashlib
import json
import math
from pathlib import Path

import pytest

from ktube import cli
from ktube.acceptance import CYL3, PKNOT
from ktube.errors import ConfigError, StuckPoint


def write_cfg(path: Path, **doc) -> Path:
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def cyl_cfg(tmp_path):
    return write_cfg(tmp_path / "run.json", tube=CYL3, seed=3, trajectories=4, steps=1000, burn_in=100)


def test_missing_seed(tmp_path):
    p = write_cfg(tmp_path / "c.json", tube=CYL3)
    with pytest.raises(ConfigError) as exc:
        cli.parse_config(p, experiment="chord-stats")
    assert exc.value.field == "seed"


def test_flags_override_file(tmp_path):
    p = write_cfg(tmp_path / "c.json", tube=CYL3, seed=1, steps=1000)
    assert cli.parse_config(p, experiment="simulate").steps == 1000
    assert cli.parse_config(p, {"steps": 2000}, "simulate").steps == 2000
    args = cli.build_parser().parse_args(["chord-stats", "--config", str(p), "--steps", "2000"])
    assert args.steps == 2000


def test_negative_poisson_rate_names_the_rate(tmp_path):
    tube = {**PKNOT, "params": {**PKNOT["params"], "rate": -1.0}}
    p = write_cfg(tmp_path / "c.json", tube=tube, seed=1)
    with pytest.raises(ConfigError) as exc:
        cli.parse_config(p, experiment="chord-stats")
    assert exc.value.field == "tube"
    assert "rate" in str(exc.value)


@pytest.mark.parametrize("doc, field", [
    ({"tube": CYL3, "seed": 1, "colour": "red"}, "colour"),
    ({"tube": CYL3, "seed": 1, "steps": 0}, "steps"),
    ({"tube": CYL3, "seed": 1, "trajectories": -5}, "trajectories"),
    ({"tube": CYL3, "seed": 1, "workers": 0}, "workers"),
    ({"tube": CYL3, "seed": -1}, "seed"),
    ({"tube": CYL3, "seed": 1.5}, "seed"),
    ({"tube": CYL3, "seed": 1, "steps": 500, "burn_in": 500}, "burn_in"),
    ({"seed": 1}, "tube"),
])
def test_invalid_configs(tmp_path, doc, field):
    p = write_cfg(tmp_path / "c.json", **doc)
    with pytest.raises(ConfigError) as exc:
        cli.parse_config(p, experiment="chord-stats")
    assert exc.value.field == field


def test_experiment_specific_fields(tmp_path):
    p = write_cfg(tmp_path / "c.json", tube=CYL3, seed=1, trajectories=100, steps=3000)
    with pytest.raises(ConfigError) as exc:
        cli.parse_config(p, experiment="diffusivity")
    assert exc.value.field == "t_horizon"
    with pytest.raises(ConfigError) as exc:
        cli.parse_config(p, experiment="induced-chords")
    assert exc.value.field == "tube.family"
    with pytest.raises(ConfigError):
        cli.parse_config(p, experiment="no-such-experiment")
    assert cli.parse_config(p, {"t_horizon": 100.0}, "diffusivity").t_horizon == 100.0


def test_output_dir_env_fallback(tmp_path, monkeypatch):
    p = write_cfg(tmp_path / "c.json", tube=CYL3, seed=1)
    monkeypatch.setenv("KTUBE_OUTPUT_DIR", str(tmp_path / "env"))
    assert cli.parse_config(p, experiment="cosine-test").output_dir == str(tmp_path / "env")
    assert cli.parse_config(p, {"output_dir": "x"}, "cosine-test").output_dir == "x"


def test_bad_config_files(tmp_path):
    with pytest.raises(ConfigError):
        cli.parse_config(tmp_path / "absent.json", experiment="simulate")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        cli.parse_config(bad, experiment="simulate")


def test_manifest_lists_every_file(cyl_cfg, tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["chord-stats", "--config", str(cyl_cfg), "--output-dir", str(out),
                     "--dump-trajectories"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    on_disk = {str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()} - {"manifest.json"}
    assert set(manifest["files"]) == on_disk
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert manifest["config"]["seed"] == 3
    assert manifest["version"]
    assert isinstance(manifest["anomalies"], int)
    assert "wall_clock_seconds" in manifest
    assert len([n for n in on_disk if n.startswith("trajectories/")]) == 4
    assert "PASS" in capsys.readouterr().out


def test_csv_format(cyl_cfg, tmp_path):
    out = tmp_path / "out"
    cli.main(["chord-stats", "--config", str(cyl_cfg), "--output-dir", str(out)])
    with open(out / "mean_chord.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == cli.CSV_COLUMNS
    value = rows[1][2]
    assert float(value) == float(repr(float(value)))
    assert float(f"{float(value):.17g}") == float(value)
    assert len(value.replace("-", "").replace(".", "").lstrip("0")) >= 15


def test_workers_and_reruns_reproduce_checksums(cyl_cfg, tmp_path):
    sums = []
    for w in (1, 4, 8, 1):
        out = tmp_path / f"w{w}_{len(sums)}"
        assert cli.main(["tails", "--config", str(cyl_cfg), "--workers", str(w), "--output-dir", str(out)]) == 0
        sums.append(json.loads((out / "manifest.json").read_text())["files"])
    assert all(s == sums[0] for s in sums)


def test_gate_exit_codes(tmp_path):
    # one knot realization seen over 3000 steps sits a few SE off the ergodic mean chord
    p = write_cfg(tmp_path / "c.json", tube=PKNOT, seed=61, trajectories=40, steps=3000, burn_in=500)
    args = ["chord-stats", "--config", str(p), "--output-dir", str(tmp_path / "o")]
    assert cli.main(args) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert not all(manifest["gates"].values())
    assert cli.main(args + ["--gate"]) == 2


def test_config_error_exit_code(tmp_path, capsys):
    p = write_cfg(tmp_path / "c.json", tube=CYL3)
    assert cli.main(["chord-stats", "--config", str(p)]) == 1
    assert "[seed]" in capsys.readouterr().err
    assert cli.main(["chord-stats", "--config", str(p), "--seed", "1", "--tube", "{oops"]) == 1


def test_stuck_point_exit_code(cyl_cfg, tmp_path, monkeypatch, capsys):
    def stuck(tube, cfg):
        raise StuckPoint("no valid continuation", trajectory=7, step=12)

    monkeypatch.setitem(cli.RUNNERS, "chord-stats", stuck)
    assert cli.main(["chord-stats", "--config", str(cyl_cfg), "--output-dir", str(tmp_path / "o")]) == 3
    assert "aborted" in capsys.readouterr().err


def test_cosine_test_cli(tmp_path):
    out = tmp_path / "o"
    tube = json.dumps(CYL3)
    assert cli.main(["cosine-test", "--tube", tube, "--seed", "5", "--samples", "100000",
                     "--output-dir", str(out), "--gate"]) == 0
    gates = json.loads((out / "manifest.json").read_text())["gates"]
    assert gates["cosine_ks"]


def test_diffusivity_cylinder(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["diffusivity", "--tube", json.dumps(CYL3), "--seed", "42", "--trajectories", "1000",
                     "--steps", "10000", "--t-horizon", "8000", "--output-dir", str(out)]) == 0
    rep = json.loads((out / "diffusivity_report.json").read_text())
    rate = rep["rate_n_over_t"]
    assert abs(rate["value"] - 0.5) < 3 * rate["std_error"]
    assert rep["predicted_rate"] == pytest.approx(0.5)
    assert all(math.isfinite(v) for v in (rep["identity_z"], rep["sigma_hat_measured"]))
    assert {"sigma2_discrete.csv", "rate_n_over_t.csv", "predictions.csv"} <= {p.name for p in out.iterdir()}
