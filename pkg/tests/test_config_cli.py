import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nctransport.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_TOLERANCE, main
from nctransport.config import ConfigError, ScenarioConfig, from_text, load_config, parse_text


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# nctransport ")
    rows = list(csv.reader(lines[1:]))
    return rows[0], rows[1:]


def column(header, rows, name):
    i = header.index(name)
    return np.array([float(r[i]) for r in rows])


class TestConfig:
    def test_defaults(self):
        cfg = ScenarioConfig()
        assert (cfg.ms2, cfg.sigmabar, cfg.c) == (6.2898, 0.5934, 0.99)
        assert cfg.true_mean_free_path == pytest.approx(1 / 0.5934)
        assert cfg.classical_sigma_t == 0.5934

    @settings(max_examples=40, deadline=None)
    @given(
        ms2=st.floats(0.01, 100.0),
        c=st.floats(0.0, 0.999),
        histories=st.integers(1, 10**7),
        seed=st.integers(0, 2**63),
        implicit=st.booleans(),
        r_max=st.none() | st.floats(0.1, 500.0),
    )
    def test_text_round_trip(self, ms2, c, histories, seed, implicit, r_max):
        cfg = ScenarioConfig(scenario="mc", ms2=ms2, c=c, histories=histories, seed=seed,
                             implicit_capture=implicit, r_max=r_max)
        assert from_text(cfg.to_text()) == cfg

    def test_comments_and_blank_lines(self):
        values = parse_text("# header\n\nc = 0.5   # trailing\nworkers=2\n")
        assert values == {"c": 0.5, "workers": 2}

    @pytest.mark.parametrize(
        "text",
        ["colour = red", "c = lots", "c 0.5", "c = 0.5\nc = 0.6", "implicit_capture = maybe",
         "c = 1.0", "ms2 = -1", "histories = 0", "scenario = plot", "law = gamma",
         "law = tabulated\nscenario = mc", "law = classical"],
    )
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            from_text(text)

    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("c = 0.5\nseed = 3\n")
        cfg = load_config(path, {"seed": "9"})
        assert (cfg.c, cfg.seed) == (0.5, 9)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")


class TestExitCodes:
    def test_unknown_key(self, tmp_path):
        assert main(["moments", "--out", str(tmp_path), "--set", "bogus=1"]) == EXIT_CONFIG

    def test_bad_value(self, tmp_path):
        assert main(["mc", "--out", str(tmp_path), "--c", "1.5"]) == EXIT_CONFIG

    def test_bad_scenario(self):
        assert main(["plot"]) == EXIT_CONFIG

    def test_missing_table(self, tmp_path):
        args = ["moments", "--set", "law=tabulated", "--set", f"table={tmp_path / 'none.txt'}"]
        assert main(args) == EXIT_CONFIG

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["moments", "--out", str(blocker / "sub")]) == EXIT_IO

    def test_moment_tolerance_failure(self, tmp_path):
        # an impossibly tight tolerance cannot be met by floating-point quadrature
        assert main(["moments", "--out", str(tmp_path), "--set", "moments_tol=1e-300"]) == EXIT_TOLERANCE

    def test_compare_tolerance_failure(self, tmp_path):
        args = ["compare", "--out", str(tmp_path), "--c", "0.5", "--histories", "2000",
                "--set", "grid_nodes=60", "--set", "integral_rtol=1e-12"]
        assert main(args) == EXIT_TOLERANCE


class TestScenarios:
    def test_curves(self, tmp_path):
        assert main(["curves", "--out", str(tmp_path)]) == EXIT_OK
        header, rows = read_csv(tmp_path / "sigma_t_curves.csv")
        assert header == ["s", "classical_transport", "classical_diffusion", "nonclassical_diffusion"]
        s = column(header, rows, "s")
        assert len(s) == 500 and s[0] == 0.0 and s[-1] == 10.0
        np.testing.assert_allclose(column(header, rows, "classical_transport"), 0.5934, rtol=1e-12)
        for name in header[2:]:
            sig = column(header, rows, name)
            assert sig[0] == 0.0
            assert np.all(np.diff(sig) > 0)
        header, rows = read_csv(tmp_path / "pdf_curves.csv")
        assert column(header, rows, "nonclassical_diffusion")[0] == 0.0
        assert column(header, rows, "classical_transport")[0] == pytest.approx(0.5934)

    @pytest.mark.parametrize("law", ["diffusion_matched", "classical", "tabulated"])
    def test_moments(self, tmp_path, law):
        table = tmp_path / "table.txt"
        table.write_text("# s p\n0 0\n1 1\n2 0\n")
        args = ["moments", "--out", str(tmp_path), "--set", f"law={law}", "--set", f"table={table}"]
        assert main(args) == EXIT_OK
        header, rows = read_csv(tmp_path / "moments.csv")
        assert [r[1] for r in rows] == ["int_p", "int_s_p", "int_s2_p"]
        assert all(r[-1] == "ok" for r in rows)
        if law == "tabulated":  # triangle on [0, 2]: mean 1, second moment 7/6
            np.testing.assert_allclose(column(header, rows, "closed_form"), [1, 1, 7 / 6], rtol=1e-11)

    def test_mc_byte_identical_across_workers(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        base = ["mc", "--histories", "9000", "--seed", "77"]
        assert main(base + ["--out", str(a), "--workers", "1"]) == EXIT_OK
        assert main(base + ["--out", str(b), "--workers", "3"]) == EXIT_OK
        for name in ("mc_tally.csv", "mc_flux.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_mc_flux_columns(self, tmp_path):
        args = ["mc", "--out", str(tmp_path), "--histories", "3000", "--set", "track_length=true"]
        assert main(args) == EXIT_OK
        header, rows = read_csv(tmp_path / "mc_flux.csv")
        assert header == ["r_mid", "phi0_surrogate", "phi0_true", "rel_std_err", "phi0_track_length"]
        sur = column(header, rows, "phi0_surrogate")
        true = column(header, rows, "phi0_true")
        nz = sur > 0
        # surrogate <s> = sqrt(6 <s^2>)/3 versus true <s> = 1/sigmabar
        np.testing.assert_allclose(sur[nz] / true[nz], math.sqrt(6 * 6.2898) / 3 * 0.5934, rtol=1e-10)

    def test_header_records_config(self, tmp_path):
        assert main(["integral", "--out", str(tmp_path), "--c", "0.5", "--set", "grid_nodes=80"]) == EXIT_OK
        first = (tmp_path / "integral_solution.csv").read_text().splitlines()[0]
        assert first.startswith("# nctransport integral: scenario=integral;")
        assert "c=0.5" in first and "grid_nodes=80" in first and "seed=12345" in first
        assert "workers=" not in first and "out=" not in first

    def test_config_file_and_flags(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("histories = 500\nshells = 7\n")
        assert main(["mc", "--config", str(cfg), "--out", str(tmp_path), "--seed", "4"]) == EXIT_OK
        header, rows = read_csv(tmp_path / "mc_tally.csv")
        assert len(rows) == 7
        assert "seed=4" in (tmp_path / "mc_tally.csv").read_text().splitlines()[0]

    def test_compare_pure_absorber(self, tmp_path):
        args = ["compare", "--out", str(tmp_path), "--c", "0", "--histories", "200000"]
        assert main(args) == EXIT_OK
        header, rows = read_csv(tmp_path / "compare_integral.csv")
        dev = column(header, rows, "rel_dev")
        checked = np.array([r[-1] == "true" for r in rows])
        assert checked.any() and dev[checked].max() < 1e-3
        header, rows = read_csv(tmp_path / "compare_summary.csv")
        assert [r[0] for r in rows][:3] == [
            "integral_vs_oracle_max_rel_dev", "integral_balance", "mc_vs_oracle_max_abs_z"]
        assert all(r[-1] == "true" for r in rows)
