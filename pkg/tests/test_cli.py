import csv
import json
import shutil
from importlib import resources
from pathlib import Path

import pytest

from robust_sae.cli import main
from robust_sae.io import read_csv, write_csv

GOLDEN = Path(__file__).parent / "golden" / "toy_estimates.csv"

TINY_SIM = """\
[simulate]
seed = 5
methods = REBLUP REBLUP-SBC IF-ABC

[scenario tiny]
d = 4
N_j = 30
n_j = 5
lambda = 3
reps = 2
"""


@pytest.fixture
def toy_dir(tmp_path):
    src = resources.files("robust_sae") / "toy"
    dst = tmp_path / "toy"
    dst.mkdir()
    for name in ("sample.csv", "population.csv", "estimate.conf"):
        shutil.copyfile(src / name, dst / name)
    return dst


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(*argv):
    return main([str(a) for a in argv])


class TestEstimate:
    def test_golden_values(self, toy_dir, tmp_path):
        assert run("estimate", "--config", toy_dir / "estimate.conf", "--out", tmp_path / "o") == 0
        got, ref = rows(tmp_path / "o" / "estimates.csv"), rows(GOLDEN)
        assert [r["area_id"] for r in got] == [r["area_id"] for r in ref]
        for g, r in zip(got, ref):
            assert float(g["gini"]) == pytest.approx(float(r["gini"]), abs=1e-10)
            assert float(g["gamma"]) == pytest.approx(float(r["gamma"]), abs=1e-12)
            assert (g["n"], g["N"], g["c"]) == (r["n"], r["N"], r["c"])

    def test_cdf_export(self, toy_dir, tmp_path):
        run("estimate", "--config", toy_dir / "estimate.conf", "--out", tmp_path / "o")
        for a in (1, 2, 3):
            cdf = rows(tmp_path / "o" / "cdf" / f"area_{a}.csv")
            p = [float(r["cumulative_probability"]) for r in cdf]
            assert p == sorted(p) and p[-1] == pytest.approx(1.0, abs=1e-12)

    def test_repeat_is_byte_identical(self, toy_dir, tmp_path):
        for k in ("a", "b"):
            run("estimate", "--config", toy_dir / "estimate.conf", "--out", tmp_path / k)
        for name in ("estimates.csv", "metadata.json", "cdf/area_2.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_full_scope_auto_gamma_in_metadata(self, toy_dir, tmp_path):
        rc = run("estimate", "--config", toy_dir / "estimate.conf", "--out", tmp_path / "o",
                 "--method", "if-abc", "--scope", "full", "--gamma", "auto")
        assert rc == 0
        meta = json.loads((tmp_path / "o" / "metadata.json").read_text())
        assert meta["gamma_mode"] == "auto" and meta["scope"] == "full"
        assert {float(r["gamma"]) for r in rows(tmp_path / "o" / "estimates.csv")} == {meta["gamma"]}
        assert len(meta["config_sha256"]) == 64 and meta["version"]

    def test_missing_covariate_names_column(self, toy_dir, tmp_path, capsys):
        pop = rows(toy_dir / "population.csv")
        write_csv(toy_dir / "population.csv", ["area_id"], [(r["area_id"],) for r in pop])
        assert run("estimate", "--config", toy_dir / "estimate.conf", "--out", tmp_path / "o") == 2
        assert "'x1'" in capsys.readouterr().err

    def test_partial_on_unsampled_area_fails(self, toy_dir, tmp_path, capsys):
        pop = rows(toy_dir / "population.csv")
        extra = [(r["area_id"], r["x1"]) for r in pop] + [(4, 1.5), (4, 2.5), (4, 3.0)]
        write_csv(toy_dir / "population.csv", ["area_id", "x1"], extra)
        assert run("estimate", "--config", toy_dir / "estimate.conf", "--out", tmp_path / "p") == 1
        assert "4" in capsys.readouterr().err
        assert run("estimate", "--config", toy_dir / "estimate.conf", "--out", tmp_path / "f",
                   "--scope", "full") == 0
        assert [r["area_id"] for r in rows(tmp_path / "f" / "estimates.csv")] == ["1", "2", "3", "4"]


class TestErrors:
    def test_missing_config(self, tmp_path, capsys):
        path = tmp_path / "nope.conf"
        assert run("estimate", "--config", path, "--out", tmp_path / "o") == 2
        assert str(path) in capsys.readouterr().err

    @pytest.mark.parametrize("line, key", [("c = abc", "c"), ("method = xyz", "xyz")])
    def test_bad_values(self, toy_dir, tmp_path, capsys, line, key):
        conf = toy_dir / "estimate.conf"
        conf.write_text(conf.read_text().replace("[estimate]", "[estimate]\n" + line, 1)
                        .replace("c = 3\n", "", 1 if key == "c" else 0))
        assert run("estimate", "--config", conf, "--out", tmp_path / "o") == 2
        assert key in capsys.readouterr().err

    def test_missing_section(self, tmp_path):
        conf = tmp_path / "x.conf"
        conf.write_text("[other]\na = 1\n")
        for cmd in ("estimate", "tune", "simulate"):
            assert run(cmd, "--config", conf, "--out", tmp_path / "o") == 2

    def test_bad_gamma_flag(self, toy_dir, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run("estimate", "--config", toy_dir / "estimate.conf", "--out", tmp_path, "--gamma", "big")
        assert exc.value.code == 2


class TestTune:
    def test_singleton_grid(self, toy_dir, tmp_path):
        rc = run("tune", "--config", toy_dir / "estimate.conf", "--out", tmp_path / "o",
                 "--c", 2, "--gamma", 1, "--seed", 1)
        assert rc == 0
        out = rows(tmp_path / "o" / "tuning.csv")
        assert len(out) == 3 and {(r["c"], r["gamma"]) for r in out} == {("2.0", "1.0")}

    def test_surface_contains_symmetric_column(self, toy_dir, tmp_path):
        conf = toy_dir / "estimate.conf"
        conf.write_text(conf.read_text().replace("gamma_grid = 0.5, 1, 1.5, 2", "gamma_grid = 0.5, 2")
                        .replace("B = 50", "B = 4"))
        for k in ("a", "b"):
            assert run("tune", "--config", conf, "--out", tmp_path / k) == 0
        out = rows(tmp_path / "a" / "tuning.csv")
        assert {r["gamma"] for r in out} == {"0.5", "1.0", "2.0"}
        assert (tmp_path / "a" / "tuning.csv").read_bytes() == \
            (tmp_path / "b" / "tuning.csv").read_bytes()


class TestSimulate:
    def test_outputs_and_determinism(self, tmp_path, capsys):
        conf = tmp_path / "sim.conf"
        conf.write_text(TINY_SIM)
        for k in ("a", "b"):
            assert run("simulate", "--config", conf, "--out", tmp_path / k) == 0
        assert "median(true Gini)" in capsys.readouterr().out
        for name in ("tiny.csv", "summary.csv", "summary.txt", "metadata.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        summary = rows(tmp_path / "a" / "summary.csv")
        assert [r["method"] for r in summary] == ["TRUE", "REBLUP", "REBLUP-SBC", "IF-ABC"]

    def test_seed_flag_changes_output(self, tmp_path):
        conf = tmp_path / "sim.conf"
        conf.write_text(TINY_SIM)
        run("simulate", "--config", conf, "--out", tmp_path / "a")
        run("simulate", "--config", conf, "--out", tmp_path / "b", "--seed", 6)
        assert (tmp_path / "a" / "tiny.csv").read_bytes() != (tmp_path / "b" / "tiny.csv").read_bytes()

    def test_unknown_method(self, tmp_path):
        conf = tmp_path / "sim.conf"
        conf.write_text(TINY_SIM.replace("IF-ABC", "XYZ"))
        assert run("simulate", "--config", conf, "--out", tmp_path / "o") == 2


@pytest.mark.parametrize("name", ["estimates.csv", "cdf/area_1.csv"])
def test_csv_round_trip(toy_dir, tmp_path, name):
    run("estimate", "--config", toy_dir / "estimate.conf", "--out", tmp_path / "o")
    header, body = read_csv(tmp_path / "o" / name)
    write_csv(tmp_path / "copy.csv", header, body)
    assert (tmp_path / "copy.csv").read_bytes() == (tmp_path / "o" / name).read_bytes()
