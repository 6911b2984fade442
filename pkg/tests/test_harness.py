import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from stochprandtl.fields import Grid
from stochprandtl.harness import cli
from stochprandtl.harness.cli import cli_main, resolve_threads
from stochprandtl.harness.config import ConfigError, parse_config, parse_value, load_config
from stochprandtl.harness.corpus import CorpusSpec, generate_corpus, random_field
from stochprandtl.harness.records import RunDir, dumps, read_json, svg_chart, write_csv
from stochprandtl.harness.setups import (
    bernoulli_from, default_noise, global_from, grid_from, local_from, mc_from, noise_from, run_section,
)
from stochprandtl.harness.suites import Check, SuiteReport, gaussian_tail_suite, identity_suite, median_ratios

LOCAL = """
[run]
seed = 3
paths = 2
[grid]
Nx = 8
Ny = 24
[local]
s = 2
T = 0.005
[noise]
K = 2
[term]
n = 1
a0 = 0.3
"""

GLOBAL = """
[global]
T = 0.02
paths = 3
min_survivors = 1
[global.grid]
Nx = 8
Ny = 24
"""


class TestConfig:
    def test_values(self):
        assert parse_value("3") == 3 and parse_value("2.5") == 2.5 and parse_value("1e-3") == 1e-3
        assert parse_value("true") is True and parse_value("none") is None
        assert parse_value("1, 2, 3") == [1, 2, 3]
        assert parse_value("'abc'") == "abc" and parse_value("abc") == "abc"

    def test_sections_and_terms(self):
        cfg = parse_config("# c\n[grid]\nNx = 16 # inline\n[term]\nn=1\n[term]\nn=2\n")
        assert cfg.get("grid", "nx") == 16
        assert [t["n"] for t in cfg.terms] == [1, 2]

    @pytest.mark.parametrize("text", ["x = 1", "[grid]\nnx 3", "[grid]\n[grid]", "[grid]\nnx=1\nnx=2"])
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")
        assert load_config(None).sections == {}


class TestSetups:
    def test_grid(self):
        g = grid_from({"nx": 32, "ly": 4})
        assert (g.Nx, g.Ly) == (32, 4.0)
        with pytest.raises(ConfigError):
            grid_from({"nx": 12})
        with pytest.raises(ConfigError):
            grid_from({"bogus": 1})
        with pytest.raises(ConfigError):
            grid_from({"nx": "many"})

    def test_local(self):
        s = local_from(parse_config(LOCAL))
        assert s.grid.Ny == 24 and s.T == 0.005 and s.noise.K == 2
        with pytest.raises(ConfigError):
            local_from(parse_config("[local]\nscheme = III"))
        with pytest.raises(ConfigError):
            local_from(parse_config("[local]\ndelta = 0.5"))

    def test_noise_default_and_disabled(self):
        g = Grid(Nx=8, Ny=16)
        assert noise_from(parse_config(""), g).K == default_noise(g).K
        assert noise_from(parse_config("[noise]\nenabled = false"), g) is None
        with pytest.raises(ConfigError):
            noise_from(parse_config("[linear]\ngbar = 1\na = 0.9"), g)

    def test_global_mc_bernoulli(self):
        gs = global_from(parse_config(GLOBAL))
        assert gs.run.n_paths == 3 and gs.params.beta == 64.0 and not gs.calibrated
        with pytest.raises(ConfigError):
            global_from(parse_config("[global]\neps = 2"))
        assert mc_from(parse_config("[mc]\npaths = 10")).paths == 10
        with pytest.raises(ConfigError):
            mc_from(parse_config("[mc]\npaths = 1"))
        with pytest.raises(ConfigError):
            bernoulli_from(parse_config("[bernoulli]\nmode = x"))
        assert run_section(parse_config("")) == {"seed": 0, "paths": 4}

    def test_initial_data_norm(self):
        s = local_from(parse_config(LOCAL))
        from stochprandtl.fields import radius_multiplier
        from stochprandtl.norms import xs_norm
        w = s.initial_data(0, 1)
        spec = s.scheme_config().norm_spec(0.0)
        assert xs_norm(radius_multiplier(w, s.sigma0), spec) == pytest.approx(s.data_norm)


class TestCorpus:
    def test_reproducible(self):
        g = Grid(Nx=8, Ny=16)
        a = generate_corpus(g, CorpusSpec(count=3, seed=1))
        b = generate_corpus(g, CorpusSpec(count=3, seed=1))
        assert all(np.array_equal(x.coeffs, y.coeffs) for x, y in zip(a, b))
        assert max(f.hermitian_defect() for f in a) < 1e-14

    def test_wall_value(self):
        f = random_field(Grid(Nx=8, Ny=16), np.random.default_rng(0), 2)
        assert np.max(np.abs(f.coeffs[..., 0])) < 1e-14


class TestSuiteLogic:
    def test_ratio_drift(self):
        assert Check("r", "ratio", [1.0, 2.0], [3.0]).passed
        assert not Check("r", "ratio", [1.0], [2.5]).passed
        assert not Check("r", "ratio", [math.inf]).passed
        assert Check("r", "ratio", [0.0], [0.0]).drift == 1.0

    def test_other_kinds(self):
        assert Check("e", "error", [1e-9], tolerance=1e-8).passed
        assert not Check("b", "bound", [1.5], ceiling=1.0).passed
        assert not Check("f", "flag", [1.0, 0.0]).passed
        with pytest.raises(ValueError):
            Check("x", "nonsense", [1.0]).passed

    def test_report(self):
        rep = SuiteReport("s", [Check("e", "error", [0.0], tolerance=0.0)], min_cases=2)
        assert not rep.passed and "case count 1 < 2" in rep.failures()
        assert SuiteReport("s", []).passed is False

    def test_median_ratios(self):
        assert median_ratios([[1.0, 0.5, 0.1], [2.0, 0.2]]) == [pytest.approx(0.3)]

    def test_identity_and_tail(self):
        assert identity_suite().passed
        assert gaussian_tail_suite().passed


class TestRecords:
    def test_dumps(self):
        text = dumps({"b": np.float64(1.5), "a": [np.inf, np.nan], "c": np.int64(2), "d": np.bool_(True)})
        assert json.loads(text) == {"a": ["inf", "nan"], "b": 1.5, "c": 2, "d": True}
        assert text.endswith("\n") and text.index('"a"') < text.index('"b"')

    def test_rundir(self, tmp_path):
        d = RunDir(tmp_path / "r").prepare()
        assert d.path_file(3).name == "path_00003.json"
        assert d.field_file("x").parent.is_dir() and d.plot_file("p.svg").parent.is_dir()

    def test_csv(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", ["t", "v"], [(0.1, 1 / 3), (0.2, 2.0)])
        rows = np.loadtxt(p, delimiter=",", skiprows=1)
        assert rows[0, 1] == 1 / 3

    def test_svg_parses(self):
        svg = svg_chart({"a<b": ([0, 1, 2], [1, 10, 100]), "flat": ([0, 1], [0, 0])}, "t & u", "x", "y",
                        logy=True)
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")
        assert len([e for e in root.iter() if e.tag.endswith("polyline")]) == 1


def run_cli(argv, capsys):
    code = cli_main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCLI:
    def test_threads_env(self, monkeypatch):
        monkeypatch.setenv("PRANDTL_THREADS", "3")
        assert resolve_threads(1) == 3
        monkeypatch.setenv("PRANDTL_THREADS", "x")
        with pytest.raises(ConfigError):
            resolve_threads(1)
        monkeypatch.delenv("PRANDTL_THREADS")
        assert resolve_threads(2) == 2

    def test_usage_errors(self, capsys):
        assert run_cli([], capsys)[0] == 2
        assert run_cli(["verify", "nonexistent"], capsys)[0] == 2

    def test_config_error_exit(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[local]\nscheme = Z\n")
        code, _, err = run_cli(["run-local", "--config", str(bad), "--out-dir", str(tmp_path / "o")], capsys)
        assert code == 2 and err.startswith("config error:")

    def test_run_local_and_replay(self, tmp_path, capsys):
        cfgf = tmp_path / "l.cfg"
        cfgf.write_text(LOCAL)
        out = tmp_path / "o"
        code, _, _ = run_cli(["run-local", "--config", str(cfgf), "--out-dir", str(out), "--emit-plots"], capsys)
        assert code == 0
        rep = read_json(out / "report.json")
        assert rep["paths"] == 2 and rep["seed"] == 3 and rep["command"] == "run-local"
        assert (out / "paths" / "path_00001.json").is_file()
        assert (out / "fields" / "wiener_00000.bin").is_file()
        ET.parse(out / "plots" / "energy.svg")
        assert run_cli(["replay", str(out)], capsys)[0] == 0
        # tampering is detected
        p = out / "paths" / "path_00000.json"
        p.write_text(p.read_text().replace("0", "1", 1))
        code, text, _ = run_cli(["replay", str(out)], capsys)
        assert code == 1 and "mismatched: [0]" in text

    def test_run_local_scheme_II(self, tmp_path, capsys):
        cfgf = tmp_path / "l.cfg"
        cfgf.write_text(LOCAL.replace("[local]", "[local]\nscheme = II\nm_max = 12"))
        out = tmp_path / "o"
        assert run_cli(["run-local", "--config", str(cfgf), "--out-dir", str(out), "--paths", "1"], capsys)[0] == 0
        rec = read_json(out / "paths" / "path_00000.json")
        assert rec["converged"] and rec["picard_increments"]

    def test_run_global(self, tmp_path, capsys):
        cfgf = tmp_path / "g.cfg"
        cfgf.write_text(GLOBAL)
        out = tmp_path / "g"
        code, _, _ = run_cli(["run-global", "--config", str(cfgf), "--out-dir", str(out), "--emit-plots"], capsys)
        assert code == 0
        rep = read_json(out / "report.json")
        assert rep["survival"]["n_paths"] == 3
        fan = np.loadtxt(out / "sigma_fan.csv", delimiter=",", skiprows=1)
        assert fan.shape[1] == 7 and np.all(np.diff(fan[:, 1:6], axis=1) >= 0)
        assert run_cli(["replay", str(out), "--only", "2"], capsys)[0] == 0
        assert run_cli(["replay", str(out), "--only", "7"], capsys)[0] == 2

    def test_run_bernoulli(self, tmp_path, capsys):
        cfgf = tmp_path / "b.cfg"
        cfgf.write_text("[bernoulli]\nT = 0.05\n[bernoulli.grid]\nNx = 8\nNy = 16\n")
        out = tmp_path / "b"
        assert run_cli(["run-bernoulli", "--config", str(cfgf), "--out-dir", str(out), "--paths", "50"],
                       capsys)[0] == 0
        ou = read_json(out / "report.json")["ou"]
        assert abs(ou["z"]) < 4

    def test_verify_and_mc(self, tmp_path, capsys):
        code, text, _ = run_cli(["verify", "identity", "--out-dir", str(tmp_path / "v")], capsys)
        assert code == 0 and text.startswith("PASS identity")
        assert read_json(tmp_path / "v" / "report.json")["passed"]
        cfgf = tmp_path / "m.cfg"
        cfgf.write_text("[mc]\nT = 0.2\n")
        code, text, _ = run_cli(["mc-hitting", "--config", str(cfgf), "--paths", "400"], capsys)
        doc = json.loads(text)
        assert code == 0 and doc["result"]["passes"] and doc["result"]["n_paths"] == 400

    def test_replay_needs_report(self, tmp_path, capsys):
        assert run_cli(["replay", str(tmp_path)], capsys)[0] == 2

    def test_module_entry_point(self):
        assert callable(cli.main)
