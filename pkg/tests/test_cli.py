"""Command-line contract: exit codes, artifacts and reproducibility."""
import json

import numpy as np
import pytest

from roughpde import rough_path as rp
from roughpde.cli import ExperimentConfig, load_config, main
from roughpde.solver import ConfigError


@pytest.fixture
def root(tmp_path, monkeypatch):
    monkeypatch.setenv("RPDE_OUTPUT_ROOT", str(tmp_path))
    return tmp_path


def run(*args):
    return main([str(a) for a in args])


class TestLift:
    def test_writes_valid_path(self, root, capsys):
        assert run("lift", "--n", 64, "--seed", 3) == 0
        X = rp.load(root / "roughpde_out" / "path.csv")
        assert rp.chen_defect(X.second_order_table(), X.x) < 1e-12
        assert "chen_defect" in capsys.readouterr().out

    def test_rejects_hurst(self, root, capsys):
        assert run("lift", "--hurst", 0.25) == 2
        assert "Hurst" in capsys.readouterr().err

    def test_byte_identical(self, root):
        run("lift", "--n", 32, "--out", "a")
        run("lift", "--n", 32, "--out", "b")
        assert (root / "a" / "path.csv").read_bytes() == (root / "b" / "path.csv").read_bytes()

    def test_parallel_seeds_match_serial(self, root):
        run("lift", "--n", 32, "--seeds", 1, 2, 3, "--out", "serial")
        run("lift", "--n", 32, "--seeds", 1, 2, 3, "--out", "par", "--jobs", 2)
        for s in (1, 2, 3):
            name = f"seed_{s}/path.csv"
            assert (root / "serial" / name).read_bytes() == (root / "par" / name).read_bytes()


class TestSolve:
    def test_linear_preset(self, root, capsys):
        assert run("solve", "--n", 64, "--depth", 1) == 0
        out = root / "roughpde_out"
        assert "mild_residual" in capsys.readouterr().out
        rows = (out / "solution.csv").read_text().splitlines()
        assert rows[0] == "t,norm_gamma,norm_gamma_minus_alpha,residual" and len(rows) == 66
        assert (out / "windows.csv").read_text().startswith("start,end,iters,contraction,gubinelli_norm\n")
        consts = json.loads((out / "constants.json").read_text())
        assert {"C", "M1", "M2", "eta"} <= set(consts)
        assert consts["mild_residual_solver_grid"] < 10 * consts["picard_tol"] * max(1.0, consts["r"])

    def test_homogeneous_decay(self, root):
        assert run("solve", "--n", 32, "--lam", 0, "--y0", "1 + cos(x)") == 0
        data = np.loadtxt(root / "roughpde_out" / "solution.csv", delimiter=",", skiprows=1)
        t, norm = data[:, 0], data[:, 1]
        # modes 0 (amplitude 1) and +-1 (amplitude 1/2) at weight 2^{2 gamma} = 2
        expected = np.sqrt(1.0 + 2 * 0.25 * 2.0 * np.exp(-2 * t))
        np.testing.assert_allclose(norm, expected, rtol=1e-12)

    def test_torus_example(self, root):
        assert run("solve", "--preset", "torus_example", "--n", 32) == 0

    def test_custom_expression(self, root):
        assert run("solve", "--preset", "custom", "--f", "u - u**3/3", "--n", 32) == 0

    def test_bad_expression(self, root, capsys):
        assert run("solve", "--preset", "custom", "--f", "u +* 2") == 2
        assert run("solve", "--preset", "custom", "--f", "v + 1") == 2

    def test_unsafe_preset_blow_up(self, root, capsys):
        code = run("solve", "--preset", "quadratic_unsafe", "--y0", "5", "--n", 64, "--blowup-ceiling", 2,
                   "--window-steps", 1)
        assert code == 3
        assert "blow-up" in capsys.readouterr().err

    def test_invalid_sigma(self, root):
        assert run("solve", "--sigma", 0.5) == 2


class TestConverge:
    def test_rates_and_shape(self, root):
        assert run("converge", "--n", 128, "--converge-depth", 3) == 0
        rows = (root / "roughpde_out" / "rates.csv").read_text().splitlines()
        assert rows[0] == "kind,beta,depth,value,floor"
        a = ExperimentConfig().alpha_value
        top = [r.split(",") for r in rows if r.startswith("sewing_rate") and r.split(",")[2] == "3"]
        assert len(top) == 3
        last = [r for r in top if float(r[1]) == pytest.approx(2 * a)][0]
        assert float(last[4]) == pytest.approx(a - 0.1)
        assert all(float(r[3]) >= float(r[4]) for r in top)

    def test_append_only(self, root):
        run("converge", "--n", 64, "--converge-depth", 2, "--out", "short")
        run("converge", "--n", 64, "--converge-depth", 4, "--out", "long")
        short = (root / "short" / "rates.csv").read_text().splitlines()
        long = (root / "long" / "rates.csv").read_text().splitlines()
        assert long[: len(short)] == short and len(long) > len(short)


class TestCocycle:
    def test_zero_split(self, root, capsys):
        assert run("cocycle", "--n", 64, "--tau", 0) == 0
        assert "discrepancy=0.000e+00" in capsys.readouterr().out

    def test_default_scenario(self, root):
        assert run("cocycle", "--n", 128) == 0
        d = json.loads((root / "roughpde_out" / "cocycle.json").read_text())["discrepancy"]
        assert d < 1e-6

    def test_misaligned(self, root):
        assert run("cocycle", "--n", 64, "--tau", 0.501) == 2


class TestConfig:
    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"n": 8, "bogus": 1}))
        with pytest.raises(ConfigError, match="bogus"):
            load_config(str(cfg), {})

    def test_unknown_key_exit_code(self, root, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"nn": 8}))
        assert run("lift", "--config", cfg) == 2

    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"n": 8, "hurst": 0.4}))
        c = load_config(str(cfg), {"n": 16})
        assert c.n == 16 and c.hurst == 0.4

    def test_missing_file_is_io_failure(self, root):
        assert run("lift", "--config", "/nonexistent/c.json") == 1

    def test_bad_flag(self, root):
        assert run("lift", "--no-such-flag") == 2

    def test_preset_defaults(self):
        assert ExperimentConfig(preset="torus_example").sigma_value == 0.1
        assert ExperimentConfig().sigma_value == 0.0


def test_check_subset(root, capsys):
    assert run("check", "--only", "2,3") == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 2
