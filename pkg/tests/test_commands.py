from io import StringIO
from pathlib import Path

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from timecoding_qkd.qkd.exports import read_json_data

SMALL_RUN = """
protocol.pulses_per_sequence = 8000
protocol.sequence_count = 6
security.attacks = max_coherence
security.q_points = 40
security.range_points = 4
"""


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    path = tmp_path / "run.cfg"
    path.write_text(SMALL_RUN, encoding="utf-8")
    return path


def run(name: str, *args) -> str:
    out = StringIO()
    call_command(name, *[str(a) for a in args], stdout=out)
    return out.getvalue()


def test_simulate_writes_report_and_detections(config_file: Path, tmp_path: Path):
    out = tmp_path / "out"
    output = run("simulate", "--config", config_file, "--out", out, "--seed", 5)
    assert "QBER" in output
    data = read_json_data(out / "qber.json")
    assert 0 <= data["Q"] < 0.1
    assert data["sequences"] == 6
    header = (out / "detections.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "sequence,raw_time_ns,pulse_index,slot,origin"


def test_same_seed_same_payload(config_file: Path, tmp_path: Path):
    for name in ("first", "second"):
        run("simulate", "--config", config_file, "--out", tmp_path / name, "--seed", 6)
    assert read_json_data(tmp_path / "first" / "qber.json") == read_json_data(tmp_path / "second" / "qber.json")
    first = (tmp_path / "first" / "detections.csv").read_bytes()
    assert first == (tmp_path / "second" / "detections.csv").read_bytes()


def test_workers_do_not_change_results(config_file: Path, tmp_path: Path):
    run("simulate", "--config", config_file, "--out", tmp_path / "one", "--seed", 7, "--jobs", 1)
    run("simulate", "--config", config_file, "--out", tmp_path / "two", "--seed", 7, "--jobs", 2)
    assert (tmp_path / "one" / "detections.csv").read_bytes() == (tmp_path / "two" / "detections.csv").read_bytes()


def test_json_format(config_file: Path, tmp_path: Path):
    run("simulate", "--config", config_file, "--out", tmp_path, "--seed", 8, "--format", "json")
    rows = read_json_data(tmp_path / "detections.json")
    assert set(rows[0]) == {"sequence", "raw_time_ns", "pulse_index", "slot", "origin"}


def test_simulate_without_photons(config_file: Path, tmp_path: Path):
    config_file.write_text(SMALL_RUN + "protocol.mean_photon_number = 0\n", encoding="utf-8")
    output = run("simulate", "--config", config_file, "--out", tmp_path, "--seed", 9)
    assert "mean photon number is 0" in output
    assert read_json_data(tmp_path / "qber.json")["Q"] is None


def test_output_directory_from_settings(config_file: Path, settings):
    run("simulate", "--config", config_file, "--seed", 10)
    assert (Path(settings.QKD_OUTPUT_DIR) / "qber.json").exists()


def test_coherence_command(config_file: Path, tmp_path: Path):
    config_file.write_text(SMALL_RUN.replace("sequence_count = 6", "sequence_count = 100"), encoding="utf-8")
    output = run("coherence", "--config", config_file, "--out", tmp_path, "--seed", 11)
    assert "gamma_0" in output
    data = read_json_data(tmp_path / "coherence.json")
    assert data["N_s"] == 100
    assert data["N_p"] == pytest.approx(70.625)
    assert (tmp_path / "contrasts.csv").exists()


def test_coherence_needs_two_sequences(config_file: Path, tmp_path: Path, monkeypatch):
    monkeypatch.setenv("QKD__PROTOCOL__SEQUENCE_COUNT", "1")
    with pytest.raises(CommandError, match="at least 2 sequences"):
        run("coherence", "--config", config_file, "--out", tmp_path)


def test_security_curves(config_file: Path, tmp_path: Path):
    output = run("security", "--config", config_file, "--out", tmp_path, "--delta", 0.0)
    assert "Maximum coherence attack, delta 0: q_max 0.058" in output
    assert (tmp_path / "curve_max_coherence_0.csv").exists()
    assert (tmp_path / "curves_q_max.csv").exists()


def test_security_tables(config_file: Path, tmp_path: Path):
    run("security", "--config", config_file, "--out", tmp_path, "--mode", "tables", "--delta", 0.086, 0.0, "--qber", 0.033)
    data = read_json_data(tmp_path / "tables.json")
    assert data["qbers"] == [0.033]
    first = data["rows"][0]
    assert first["attack"] == "max_coherence"
    assert first["advantage_at_0.033"] == pytest.approx(0.2235, abs=5e-4)
    assert first["reference_q_max"] == 0.046


def test_security_tables_from_missing_reports(config_file: Path, tmp_path: Path):
    with pytest.raises(CommandError, match="not found"):
        run("security", "--config", config_file, "--out", tmp_path, "--mode", "tables", "--from-reports")


def test_security_range(config_file: Path, tmp_path: Path):
    output = run("security", "--config", config_file, "--out", tmp_path, "--mode", "range", "--qber", 0.0162, "--q-max", 0.058)
    assert "range 2.77 km" in output
    data = read_json_data(tmp_path / "range.json")
    assert data["range_km"] == pytest.approx(2.77, abs=0.01)
    assert len(data["sweep"]) == 4
    assert (tmp_path / "range_sweep.csv").exists()


def test_report(config_file: Path, tmp_path: Path):
    run("report", "--config", config_file, "--out", tmp_path, "--seed", 12)
    text = (tmp_path / "report.md").read_text(encoding="utf-8")
    assert "## Secure range" in text
    assert "Maximum coherence attack, delta 0.086: q_max" in text
    assert "protocol.sequence_count = 6" in text
    assert "| delta at gamma_0, recorded statistics | 0.0604 | 0.061 | yes |" in text
    assert "| delta at gamma_0 rounded to 3 digits, recorded statistics | 0.0608 | 0.061 | yes |" in text
    assert "| delta at gamma_floor, recorded statistics | 0.0861 | 0.086 | yes |" in text
    for name in ("qber.json", "coherence.json", "tables.json", "range.json"):
        assert (tmp_path / name).exists()


@pytest.mark.parametrize(
    ("args", "message"),
    [
        (("--seed", -1), "--seed"),
        (("--jobs", 0), "--jobs"),
        (("--config", "/nonexistent/run.cfg"), "not found"),
    ],
)
def test_invalid_arguments(args, message: str, tmp_path: Path):
    with pytest.raises(CommandError, match=message):
        run("simulate", "--out", tmp_path, *args)
