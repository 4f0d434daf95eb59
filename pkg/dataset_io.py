"""
CSV and JSON plumbing: dataset loading with line-numbered parse errors,
lossless dataset/sweep CSV writing, and atomic report writing with
archiving under archives/<YYYY-MM-DD>/.
"""

import io
import json
import logging
import os
import re
import tempfile
from datetime import datetime
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from errors import CsvParseError
from models import Dataset, ExperimentReport, SweepRow

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"
LABEL_COLUMN = "label"

_TOKENIZER_LINE = re.compile(r"line (\d+)")


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------

def _source_name(source) -> str:
    return str(source) if isinstance(source, (str, Path)) else "<buffer>"


def _decode(raw: bytes, name: str) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CsvParseError(name, raw.count(b"\n", 0, exc.start) + 1, "invalid UTF-8")


def _read_text(source) -> str:
    name = _source_name(source)
    if isinstance(source, (str, Path)):
        with open(source, "rb") as f:
            return _decode(f.read(), name)
    data = source.read()
    return _decode(data, name) if isinstance(data, bytes) else data


def _parse_cells(column: pd.Series, name: str, first_line: int) -> np.ndarray:
    """Strict float conversion; the first bad cell raises with its 1-based file line."""
    values = pd.to_numeric(column, errors="coerce").to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        row = int(bad[0])
        raise CsvParseError(name, first_line + row, f"non-numeric cell {column.iloc[row]!r}")
    return values


def read_dataset_csv(
    source,
    has_header: bool = False,
    label_column: Optional[str] = None,
) -> Dataset:
    """
    Read a comma-separated matrix of finite decimals.

    Row order is preserved. With `label_column` set (requires a header),
    that column becomes the integer label vector and the rest are
    features. Ragged rows, blank lines, non-numeric cells and unknown
    label columns raise CsvParseError with the offending line.
    """
    name = _source_name(source)
    if label_column is not None and not has_header:
        raise CsvParseError(name, None, "a label column needs a header row")
    text = _read_text(source)

    try:
        frame = pd.read_csv(
            io.StringIO(text),
            header=0 if has_header else None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
        )
    except pd.errors.EmptyDataError:
        raise CsvParseError(name, None, "empty file")
    except pd.errors.ParserError as exc:
        match = _TOKENIZER_LINE.search(str(exc))
        raise CsvParseError(name, int(match.group(1)) if match else None, "ragged row")

    first_line = 2 if has_header else 1
    if frame.empty:
        raise CsvParseError(name, first_line, "no data rows")
    missing = frame.isna().any(axis=1).to_numpy()
    if missing.any():
        raise CsvParseError(name, first_line + int(np.flatnonzero(missing)[0]), "ragged row")

    labels = None
    if label_column is not None:
        if label_column not in frame.columns:
            raise CsvParseError(name, 1, f"unknown label column {label_column!r}")
        raw = _parse_cells(frame[label_column], name, first_line)
        off = np.flatnonzero(raw != np.round(raw))
        if off.size:
            raise CsvParseError(name, first_line + int(off[0]), f"non-integer label {raw[off[0]]!r}")
        labels = raw.astype(np.int64)
        frame = frame.drop(columns=[label_column])

    if frame.shape[1] == 0:
        raise CsvParseError(name, 1, "no feature columns")
    values = np.column_stack([_parse_cells(frame[col], name, first_line) for col in frame.columns])
    logger.debug(f"Read {values.shape[0]}x{values.shape[1]} dataset from {name}")
    return Dataset(values=values, labels=labels)


def _looks_like_header(first_line: str) -> bool:
    for cell in first_line.split(","):
        try:
            float(cell)
        except ValueError:
            return True
    return False


def read_labeled_csv(path: PathLike) -> Dataset:
    """Detect a header row and pick up a "label" column when present."""
    first_line = _read_text(path).split("\n", 1)[0].strip()
    has_header = _looks_like_header(first_line)
    label_column = None
    if has_header and LABEL_COLUMN in [cell.strip() for cell in first_line.split(",")]:
        label_column = LABEL_COLUMN
    return read_dataset_csv(path, has_header=has_header, label_column=label_column)


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------

@retry(
    stop=stop_after_attempt(3),
    wait=wait_exponential(multiplier=1, min=2, max=10),
    retry=retry_if_exception_type(OSError),
    reraise=True,
)
def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise


def write_dataset_csv(dataset: Dataset, path: PathLike) -> Path:
    """Header f0..f{d-1}[,label]; floats written with 17 significant digits."""
    path = Path(path)
    frame = pd.DataFrame(dataset.values, columns=[f"f{i}" for i in range(dataset.n_features)])
    if dataset.has_labels:
        frame[LABEL_COLUMN] = dataset.labels
    _atomic_write_text(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))
    return path


def write_sweep_csv(rows: List[SweepRow], path: PathLike) -> Path:
    path = Path(path)
    frame = pd.DataFrame(
        [(row.family, row.alpha, row.mmd2) for row in rows],
        columns=["family", "alpha", "mmd2"],
    )
    _atomic_write_text(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))
    logger.info(f"Sweep written to {path}")
    return path


def report_to_json(report: ExperimentReport) -> str:
    payload = report.model_dump(mode="json", by_alias=True)
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def write_report(report: ExperimentReport, path: PathLike) -> Path:
    """Serialize the report (with its "schema" field) atomically to `path`."""
    path = Path(path)
    _atomic_write_text(path, report_to_json(report))
    logger.info(f"Report written to {path}")
    return path


def read_report(path: PathLike) -> ExperimentReport:
    with open(path, "r", encoding="utf-8") as f:
        return ExperimentReport.model_validate(json.load(f))


def archive_report(report: ExperimentReport, root: PathLike, tag: Optional[str] = None) -> Optional[Path]:
    """
    Keep a copy under <root>/<YYYY-MM-DD>/report_<YYYYmmdd_HHMMSS_ffffff>[_<tag>].json.
    Archiving failures are logged and never abort the run.
    """
    now = datetime.now()
    stem = f"report_{now.strftime('%Y%m%d_%H%M%S_%f')}" + (f"_{tag}" if tag else "")
    target = Path(root) / now.strftime("%Y-%m-%d") / f"{stem}.json"
    try:
        write_report(report, target)
    except OSError as exc:
        logger.error(f"Failed to archive report to {target}: {exc}", exc_info=True)
        return None
    logger.info(f"Archived report → {target}")
    return target
