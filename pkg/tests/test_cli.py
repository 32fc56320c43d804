import pytest

from run_lab import main
from src.integrations.scenario_io import parse_scenario
from src.integrations.tables import read_csv
from src.numerics.errors import ScenarioParseError, ScenarioValidationError


# ----- scenario parsing -----

def test_small_scenario_parses(scenario_text):
    sc = parse_scenario(scenario_text())
    assert sc.experiment == "spectrum"
    assert sc.control.region == [(1.5, 2.5)]
    assert sc.control.ansatz_sizes == [2, 4]
    assert sc.domain.delta == 1.0
    assert "grid.n_interior: 31" in sc.echo()


def test_unreadable_value_reports_line_and_field(scenario_text):
    with pytest.raises(ScenarioParseError) as info:
        parse_scenario(scenario_text().replace("T = 2", "T = two"))
    assert info.value.line == 5
    assert info.value.field == "T"
    assert info.value.exit_code == 2


def test_unknown_key_is_a_parse_error(scenario_text):
    with pytest.raises(ScenarioParseError) as info:
        parse_scenario(scenario_text().replace("n_exterior = 32", "n_exterior = 32\nbogus = 1"))
    assert info.value.field == "grid.bogus"
    assert info.value.line == 17


def test_malformed_interval_is_a_parse_error(scenario_text):
    with pytest.raises(ScenarioParseError) as info:
        parse_scenario(scenario_text().replace("region = 1.5 2.5", "region = 1.5"))
    assert info.value.field == "control.region"


def test_missing_scenario_section_is_a_parse_error():
    with pytest.raises(ScenarioParseError):
        parse_scenario("[domain]\ns = 0.5\n")
    with pytest.raises(ScenarioParseError):
        parse_scenario("s = 0.5\n")


@pytest.mark.parametrize("old, new", [
    ("s = 0.5", "s = 1.5"),
    ("region = 1.5 2.5", "region = 0.5 1.5"),
    ("m = 6", "m = 40"),
    ("delta = 1.0", "delta = -1"),
    ("experiment = spectrum", "experiment = sweep"),
])
def test_broken_invariants_are_validation_errors(scenario_text, old, new):
    with pytest.raises(ScenarioValidationError) as info:
        parse_scenario(scenario_text().replace(old, new))
    assert info.value.exit_code == 3


def test_truncation_is_checked_for_the_active_experiment(scenario_text):
    with pytest.raises(ScenarioValidationError):
        parse_scenario(scenario_text(experiment="moments"))
    sc = parse_scenario(scenario_text(experiment="moments", extra="[moments]\nM_modes = 4\n"))
    assert sc.moments.M_modes == 4


# ----- command line -----

def test_parse_error_exit_code(write_scenario, capsys):
    path = write_scenario()
    path.write_text(path.read_text().replace("T = 2", "T = two"))
    assert main(["spectrum", "--scenario", str(path)]) == 2
    assert "line 5" in capsys.readouterr().err


def test_validation_error_exit_code(write_scenario):
    path = write_scenario()
    path.write_text(path.read_text().replace("s = 0.5", "s = 1.0"))
    assert main(["run", "--scenario", str(path)]) == 3


def test_missing_scenario_file_exit_code(tmp_path):
    assert main(["run", "--scenario", str(tmp_path / "nope.ini")]) == 2


def test_spectrum_run_writes_ascending_eigenvalues(write_scenario, tmp_path):
    out = tmp_path / "spectrum"
    assert main(["run", "--scenario", str(write_scenario(out=out))]) == 0
    rows = read_csv(out / "spectrum.csv")
    lam = [float(r["lambda"]) for r in rows]
    assert len(lam) == 6
    assert lam[0] > 0 and all(x < y for x, y in zip(lam, lam[1:]))
    for name in ("basis.txt", "flux_table.csv", "coefficient_trace.csv", "spectrum_report.txt", "manifest.txt"):
        assert (out / name).exists()
    manifest = (out / "manifest.txt").read_text()
    assert "experiment: spectrum" in manifest
    assert "domain.s: 0.5" in manifest


def test_runs_are_byte_identical(write_scenario, tmp_path):
    path = write_scenario()
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["spectrum", "--scenario", str(path), "--out", str(first)]) == 0
    assert main(["spectrum", "--scenario", str(path), "--out", str(second)]) == 0
    for table in sorted(first.glob("*.csv")) + [first / "basis.txt", first / "spectrum_report.txt"]:
        assert table.read_bytes() == (second / table.name).read_bytes()


def test_exported_basis_is_reused(write_scenario, tmp_path):
    first = tmp_path / "first"
    assert main(["spectrum", "--scenario", str(write_scenario(out=first))]) == 0
    second = tmp_path / "second"
    path = write_scenario(out=second, name="reuse.ini")
    path.write_text(path.read_text().replace("m = 6", f"m = 4\nbasis_file = {(first / 'basis.txt').as_posix()}"))
    assert main(["spectrum", "--scenario", str(path)]) == 0
    lam_first = [r["lambda"] for r in read_csv(first / "spectrum.csv")]
    lam_second = [r["lambda"] for r in read_csv(second / "spectrum.csv")]
    assert lam_second == lam_first[:4]


def test_basis_on_another_grid_is_rejected(write_scenario, tmp_path):
    first = tmp_path / "first"
    assert main(["spectrum", "--scenario", str(write_scenario(out=first))]) == 0
    path = write_scenario(out=tmp_path / "second", name="other.ini")
    text = path.read_text().replace("n_interior = 31", "n_interior = 15")
    path.write_text(text.replace("m = 6", f"m = 6\nbasis_file = {(first / 'basis.txt').as_posix()}"))
    assert main(["spectrum", "--scenario", str(path)]) == 4


def test_basis_for_another_order_is_rejected(write_scenario, tmp_path):
    first = tmp_path / "first"
    assert main(["spectrum", "--scenario", str(write_scenario(out=first))]) == 0
    path = write_scenario(out=tmp_path / "second", name="other_s.ini")
    text = path.read_text().replace("s = 0.5", "s = 0.25")
    path.write_text(text.replace("m = 6", f"m = 6\nbasis_file = {(first / 'basis.txt').as_posix()}"))
    assert main(["spectrum", "--scenario", str(path)]) == 4


def test_library_errors_exit_as_numerical(write_scenario, monkeypatch, capsys):
    def broken(scenario):
        raise ValueError("array must not contain infs or NaNs")

    monkeypatch.setattr("src.agents.lab_graph.run_pipeline", broken)
    assert main(["spectrum", "--scenario", str(write_scenario())]) == 5
    assert "ValueError" in capsys.readouterr().err


def test_control_run_with_target_file(write_scenario, tmp_path):
    target = tmp_path / "target.csv"
    target.write_text("n,u,ut\n1,1.0,0.0\n2,0.0,0.5\n")
    out = tmp_path / "control"
    path = write_scenario("control", out=out, extra=f"target = {target.as_posix()}")
    assert main(["run", "--scenario", str(path)]) == 0
    errors = read_csv(out / "control_error.csv")
    assert [int(r["ansatz_size"]) for r in errors] == [8, 24]
    report = (out / "control_report.txt").read_text()
    assert "achieved_error:" in report and "transposition_gap:" in report
    assert float(report.split("transposition_gap: ")[1].split()[0]) <= 1e-6


def test_control_target_outside_mode_range(write_scenario, tmp_path):
    target = tmp_path / "target.csv"
    target.write_text("n,u,ut\n9,1.0,0.0\n")
    path = write_scenario("control", extra=f"target = {target.as_posix()}")
    assert main(["run", "--scenario", str(path)]) == 2


def test_evolve_and_dual_runs(write_scenario, tmp_path):
    out = tmp_path / "ev"
    extra = "[evolve]\nsnapshots = 3\ntrace_points = 5\n[dual]\nsamples = 5\n"
    assert main(["evolve", "--scenario", str(write_scenario(out=out, extra=extra))]) == 0
    assert len(read_csv(out / "snapshots.csv")) == 3 * 31
    assert len(read_csv(out / "modal_trace.csv")) == 5 * 6
    assert main(["dual", "--scenario", str(write_scenario(out=out, extra=extra))]) == 0
    assert len(read_csv(out / "dual_trace.csv")) == 5 * 6
    report = (out / "dual_report.txt").read_text()
    assert "dual_energy_constant:" in report


def test_moments_and_uc_runs(write_scenario, tmp_path):
    out = tmp_path / "mo"
    extra = "[moments]\nM_modes = 4\nn_profiles = 10\nnull_sizes = 2, 4\n[uc]\nM_modes = 3\n"
    assert main(["moments", "--scenario", str(write_scenario(out=out, extra=extra))]) == 0
    sigma = read_csv(out / "sigma_min.csv")
    assert len(sigma) == 8
    assert len(read_csv(out / "null_control.csv")) == 2
    assert main(["uc", "--scenario", str(write_scenario(out=out, extra=extra))]) == 0
    assert "uc_verdict:" in (out / "uc_report.txt").read_text()


def test_verify_exit_code_follows_report(write_scenario, tmp_path):
    out = tmp_path / "verify"
    extra = "[verify]\ndissipativity_trials = 20\nflux_modes = 4\nuc_modes = 3\n"
    code = main(["verify", "--scenario", str(write_scenario(out=out, extra=extra))])
    last = (out / "verify_report.txt").read_text().splitlines()[-1]
    passed, total = last.split(": ")[1].split("/")
    assert code in (0, 1)
    assert (code == 0) == (passed == total)


def test_output_dir_from_environment(write_scenario, tmp_path, monkeypatch):
    env_out = tmp_path / "from_env"
    monkeypatch.setenv("FRACLAB_OUTPUT_DIR", str(env_out))
    assert main(["spectrum", "--scenario", str(write_scenario())]) == 0
    assert (env_out / "spectrum.csv").exists()

    flag_out = tmp_path / "from_flag"
    assert main(["spectrum", "--scenario", str(write_scenario()), "--out", str(flag_out)]) == 0
    assert (flag_out / "spectrum.csv").exists()


def test_bad_thread_count_from_environment(write_scenario, monkeypatch):
    monkeypatch.setenv("FRACLAB_THREADS", "many")
    assert main(["spectrum", "--scenario", str(write_scenario())]) == 2


def test_help_lists_table_columns(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
    out = capsys.readouterr().out
    assert "spectrum.csv: n, lambda, regime" in out
    assert "exit codes" in out
