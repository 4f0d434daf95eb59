import io
import json

import pytest
from numpy.testing import assert_array_equal

from dataset_io import (
    archive_report,
    read_dataset_csv,
    read_labeled_csv,
    read_report,
    write_dataset_csv,
    write_report,
    write_sweep_csv,
)
from errors import CsvParseError
from models import Dataset, ExperimentReport, ScenarioResult, SweepRow


def test_headerless_matrix():
    data = read_dataset_csv(io.StringIO("1,2\n3,4\n"))
    assert_array_equal(data.values, [[1, 2], [3, 4]])
    assert not data.has_labels


def test_header_with_label_column():
    data = read_dataset_csv(io.StringIO("f0,f1,label\n0,1,1\n"), has_header=True, label_column="label")
    assert_array_equal(data.values, [[0, 1]])
    assert_array_equal(data.labels, [1])


@pytest.mark.parametrize("text, line", [
    ("1,2\n3,4,5\n", 2),
    ("1,2\n3\n", 2),
    ("1,2\n\n3,4\n", 2),
    ("1,2\n3,x\n", 2),
    ("1,2\n3,4\n5,nan\n", 3),
    ("1,,2\n", 1),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(CsvParseError) as info:
        read_dataset_csv(io.StringIO(text))
    assert info.value.line == line


def test_header_shifts_line_numbers():
    with pytest.raises(CsvParseError) as info:
        read_dataset_csv(io.StringIO("a,b\n1,2\n1,oops\n"), has_header=True)
    assert info.value.line == 3


def test_unknown_label_column():
    with pytest.raises(CsvParseError, match="unknown label column"):
        read_dataset_csv(io.StringIO("a,b\n1,2\n"), has_header=True, label_column="label")


def test_non_integer_labels():
    with pytest.raises(CsvParseError, match="non-integer label"):
        read_dataset_csv(io.StringIO("a,label\n1,0.5\n"), has_header=True, label_column="label")


def test_empty_file():
    with pytest.raises(CsvParseError, match="empty"):
        read_dataset_csv(io.StringIO(""))


def test_round_trip_keeps_17_digits(tmp_path, rng):
    data = Dataset(values=rng.standard_normal((20, 3)) * 10 ** rng.uniform(-8, 8, (20, 3)), labels=rng.integers(0, 3, 20))
    path = write_dataset_csv(data, tmp_path / "data.csv")
    back = read_labeled_csv(path)
    assert_array_equal(back.values, data.values)
    assert_array_equal(back.labels, data.labels)


def test_labeled_reader_without_header(tmp_path):
    path = tmp_path / "plain.csv"
    path.write_text("1.5,2\n3,4\n")
    data = read_labeled_csv(path)
    assert data.values.shape == (2, 2) and not data.has_labels


def test_sweep_csv_layout(tmp_path):
    rows = [SweepRow(alpha=0.0, family="rotation", mmd2=0.25), SweepRow(alpha=0.5, family="reflection", mmd2=0.1)]
    lines = write_sweep_csv(rows, tmp_path / "sweep.csv").read_text().splitlines()
    assert lines == ["family,alpha,mmd2", "rotation,0,0.25", "reflection,0.5,0.10000000000000001"]


def test_report_has_schema_field(tmp_path):
    report = ExperimentReport(config={"seed": 1}, scenarios=[ScenarioResult(name="baseline", accuracy=0.5)], seeds={"master": 1})
    path = write_report(report, tmp_path / "out" / "report.json")
    payload = json.loads(path.read_text(encoding="utf-8"))
    assert payload["schema"] == 1
    assert set(payload) == {"schema", "config", "scenarios", "tasks", "seeds", "runtime_ms"}
    assert read_report(path) == report
    assert not list((tmp_path / "out").glob("*.tmp"))


def test_archive_layout(tmp_path):
    path = archive_report(ExperimentReport(), tmp_path)
    assert path.parent.parent == tmp_path
    assert path.name.startswith("report_") and path.suffix == ".json"


def test_archive_failure_is_not_fatal(tmp_path, monkeypatch):
    import dataset_io

    def refuse(report, path):
        raise PermissionError("read-only")

    monkeypatch.setattr(dataset_io, "write_report", refuse)
    assert archive_report(ExperimentReport(), tmp_path) is None


def test_invalid_utf8_is_a_parse_error(tmp_path):
    path = tmp_path / "latin.csv"
    path.write_bytes(b"1,2\n3,\xff\n")
    with pytest.raises(CsvParseError, match="invalid UTF-8") as info:
        read_labeled_csv(path)
    assert info.value.line == 2
    with pytest.raises(CsvParseError, match="invalid UTF-8"):
        read_dataset_csv(io.BytesIO(b"\xfe,1\n"))


def test_archives_in_the_same_second_do_not_collide(tmp_path, monkeypatch):
    import dataset_io
    from datetime import datetime

    class FrozenClock:
        @staticmethod
        def now():
            return datetime(2026, 1, 2, 3, 4, 5, 678901)

    monkeypatch.setattr(dataset_io, "datetime", FrozenClock)
    first = archive_report(ExperimentReport(), tmp_path, tag="req-a")
    second = archive_report(ExperimentReport(), tmp_path, tag="req-b")
    assert first != second
    assert first.name == "report_20260102_030405_678901_req-a.json"
    assert first.exists() and second.exists()
