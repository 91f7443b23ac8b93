import csv
import dataclasses
import io
import json
import math
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughflow import cli
from roughflow import experiments as E

NORMS_TOML = """\
scenario = "norms"
schema_version = 1

[drift]
name = "smooth_bump"
params = { d = 1, amplitude = 2.0, width = 0.5 }

[exponents]
d = 1
r = 4.0
q = 8.0
sigma = 1.0

[numerics]
seed = 11

[params]
pairs = [[2.0, 2.0], [4.0, 8.0]]
box = [[-4.0, 4.0]]
"""


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _read_csv(path):
    raw = path.read_bytes()
    return raw, list(csv.DictReader(io.StringIO(raw.decode())))


def _small(name, **numerics):
    cfg = E.default_config(name)
    return cfg.replace_numerics(**numerics) if numerics else cfg


class TestConfigRoundTrip:
    @pytest.mark.parametrize("name", list(E.SCENARIOS))
    def test_default_configs_round_trip(self, name):
        cfg = E.default_config(name)
        assert E.parse_config(E.emit_config(cfg)) == cfg

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, E.U64_MAX), dt=st.floats(1e-5, 1.0), n_paths=st.integers(1, 10**7),
           workers=st.integers(1, 64), plot=st.booleans())
    def test_round_trip_property(self, seed, dt, n_paths, workers, plot):
        cfg = _small("moments", seed=seed, dt=dt, n_paths=n_paths, workers=workers)
        cfg = dataclasses.replace(cfg, outputs=dataclasses.replace(cfg.outputs, plot=plot))
        assert E.parse_config(E.emit_config(cfg)) == cfg

    def test_large_seed_stored_as_string(self):
        cfg = _small("norms", seed=E.U64_MAX)
        text = E.emit_config(cfg)
        assert f'seed = "{E.U64_MAX}"' in text
        assert E.parse_config(text).numerics.seed == E.U64_MAX

    def test_infinite_exponents_survive(self):
        cfg = E.default_config("norms")
        assert math.isinf(E.parse_config(E.emit_config(cfg)).exponents.r)


class TestConfigValidation:
    @pytest.mark.parametrize(
        "old,new,field,line",
        [
            ("seed = 11", "seed = -1", "numerics.seed", 15),
            ("seed = 11", "seed = 11\nsteps = 3", "numerics.steps", 16),
            ("q = 8.0", 'q = "eight"', "exponents.q", 11),
            ("d = 1\nr", "d = 2\nr", "exponents.d", 9),
            ("sigma = 1.0", "sigma = 0.0", "exponents.sigma", 12),
        ],
    )
    def test_error_names_field_and_line(self, old, new, field, line):
        text = NORMS_TOML.replace(old, new)
        with pytest.raises(E.ConfigError) as exc:
            E.parse_config(text)
        msg = str(exc.value)
        assert msg.startswith(field)
        assert f"line {line}" in msg

    def test_unknown_scenario(self):
        with pytest.raises(E.ConfigError, match="scenario"):
            E.parse_config(NORMS_TOML.replace('"norms"', '"nope"'))

    def test_schema_version_required_and_checked(self):
        with pytest.raises(E.ConfigError, match="schema_version"):
            E.parse_config(NORMS_TOML.replace("schema_version = 1\n", ""))
        with pytest.raises(E.ConfigError, match="unsupported schema"):
            E.parse_config(NORMS_TOML.replace("schema_version = 1", "schema_version = 2"))

    def test_toml_syntax_error(self):
        with pytest.raises(E.ConfigError, match="TOML"):
            E.parse_config("scenario = ")

    def test_unknown_drift(self):
        with pytest.raises(E.ConfigError, match="drift.name"):
            E.parse_config(NORMS_TOML.replace('"smooth_bump"', '"mystery"'))


class TestRun:
    def test_norms_outputs(self, tmp_path):
        cfg = E.parse_config(NORMS_TOML)
        out = E.run(cfg, tmp_path / "o")
        assert out.status == E.EXIT_OK
        raw, rows = _read_csv(tmp_path / "o" / "results.csv")
        assert raw.endswith(b"\r\n")
        assert list(rows[0]) == E.CSV_COLUMNS
        assert {r["estimand"] for r in rows} == {"norm", "norm_closed_form"}
        assert all(r["seed"] == "11" and r["build"].startswith("roughflow-") for r in rows)
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert summary["passed"] and summary["config"]["scenario"] == "norms"
        assert summary["anchor"] == E.SCENARIOS["norms"].anchor

    def test_deterministic_and_worker_independent(self, tmp_path):
        cfg = _small("blocks", mc_samples=4096, workers=1)
        cfg = dataclasses.replace(cfg, params={**cfg.params, "suites": ["beta", "catalog"], "beta_n": [1],
                                               "beta_samples": 4096})
        E.run(cfg, tmp_path / "a")
        E.run(cfg, tmp_path / "b", workers=2)
        a = (tmp_path / "a" / "results.csv").read_bytes()
        assert a == (tmp_path / "b" / "results.csv").read_bytes()
        sa = json.loads((tmp_path / "a" / "summary.json").read_text())
        sb = json.loads((tmp_path / "b" / "summary.json").read_text())
        assert sa["headline"] == sb["headline"] and sa["workers"] == 1 and sb["workers"] == 2

    def test_seed_changes_results(self, tmp_path):
        cfg = _small("moments", n_paths=64)
        cfg = dataclasses.replace(cfg, params={**cfg.params, "modulus_deltas": []})
        E.run(cfg, tmp_path / "a")
        E.run(cfg.replace_numerics(seed=E.U64_MAX), tmp_path / "b")
        assert (tmp_path / "a" / "results.csv").read_bytes() != (tmp_path / "b" / "results.csv").read_bytes()

    def test_failed_check_exit_status(self, tmp_path):
        cfg = _small("symplectic", n_paths=4)
        cfg = dataclasses.replace(cfg, params={**cfg.params, "dts": [0.02, 0.02], "sigmas": [0.0]})
        out = E.run(cfg, tmp_path)
        assert out.status == E.EXIT_CHECK_FAILED
        assert not json.loads((tmp_path / "summary.json").read_text())["passed"]

    def test_numeric_failure_keeps_partial_results(self, tmp_path):
        cfg = E.parse_config(NORMS_TOML.replace("pairs = [[2.0, 2.0], [4.0, 8.0]]", "pairs = [[2.0, 2.0], [0.0, 2.0]]"))
        out = E.run(cfg, tmp_path)
        assert out.status == E.EXIT_NUMERIC and out.error
        _, rows = _read_csv(tmp_path / "results.csv")
        assert len(rows) >= 1
        assert json.loads((tmp_path / "summary.json").read_text())["error"]

    def test_svg_has_embedded_data(self, tmp_path):
        cfg = E.default_config("kernel")
        E.run(cfg, tmp_path)
        svg = (tmp_path / "plots.svg").read_text()
        root = ET.fromstring(svg)
        meta = [el for el in root.iter() if el.get("id") == "roughflow-data"]
        assert meta
        panels = json.loads(meta[0].text)
        assert panels[0]["series"][0]["y"]

    def test_formats_respected(self, tmp_path):
        cfg = E.parse_config(NORMS_TOML + '\n[outputs]\nformats = ["json"]\nplot = false\n')
        E.run(cfg, tmp_path)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["summary.json"]


class TestCli:
    def test_list_is_json_catalog(self, capsys):
        assert cli.main(["list"]) == 0
        cat = json.loads(capsys.readouterr().out)
        assert [c["name"] for c in cat] == list(E.SCENARIOS)
        for c in cat:
            assert c["anchor"] and c["description"]
            assert E.config_from_dict(
                {**c["default_config"], "exponents": {k: float(v) if v in ("inf",) else v
                                                      for k, v in c["default_config"]["exponents"].items()}}
            ).scenario == c["name"]

    def test_run_with_overrides(self, tmp_path, capsys):
        cfgp = _write(tmp_path, NORMS_TOML)
        code = cli.main(["run", "--config", str(cfgp), "--out", str(tmp_path / "o"), "--seed", str(E.U64_MAX),
                         "--workers", "2"])
        assert code == 0
        s = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert s["seed"] == str(E.U64_MAX) and s["workers"] == 2
        assert "PASS" in capsys.readouterr().out

    def test_env_output_root(self, tmp_path, monkeypatch):
        cfgp = _write(tmp_path, NORMS_TOML, "mine.toml")
        monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path / "root"))
        assert cli.main(["run", "--config", str(cfgp)]) == 0
        assert (tmp_path / "root" / "mine" / "results.csv").exists()

    def test_config_error_exit_2(self, tmp_path, capsys):
        cfgp = _write(tmp_path, NORMS_TOML.replace("seed = 11", "seed = 1.5"))
        assert cli.main(["run", "--config", str(cfgp), "--out", str(tmp_path / "o")]) == 2
        assert "numerics.seed (line 15)" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_missing_config_exit_2(self, tmp_path):
        assert cli.main(["run", "--config", str(tmp_path / "absent.toml")]) == 2

    @pytest.mark.parametrize("bad", [str(2**64), "-3", "x"])
    def test_bad_seed_rejected(self, tmp_path, bad):
        with pytest.raises(SystemExit) as exc:
            cli.main(["run", "--config", "c.toml", "--seed", bad])
        assert exc.value.code == 2

    def test_module_entry_point(self, tmp_path):
        cfgp = _write(tmp_path, NORMS_TOML)
        proc = subprocess.run([sys.executable, "-m", "roughflow", "run", "--config", str(cfgp), "--out",
                               str(tmp_path / "o")], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
