"""
CSV import/export for monitor traces, controller event logs and report
tables.  Output is written with fixed line endings and ``repr`` floats so the
same run always produces the same bytes.
"""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np

from .constants import EVENTS
from .defense import ControllerEvent
from .errors import TraceFormatError
from .monitor import Trace

log = logging.getLogger(__name__)

TRACE_HEADER = ("tick_index", "sample")
EVENT_HEADER = ("sample_index", "event", "active_k", "threshold")
TRACE_GLOB = "trace_*.csv"

PathLike = Union[str, Path]


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_table(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


# ───────────────────────────── traces ─────────────────────────────────
def trace_filename(index: int) -> str:
    return f"trace_{index:04d}.csv"


def write_trace_csv(trace: Trace, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        for key, value in trace.metadata.items():
            f.write(f"# {key}: {value}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for i, sample in enumerate(trace.samples):
            writer.writerow((i, int(sample)))
    return path


def read_trace_csv(path: PathLike) -> Trace:
    path = Path(path)
    metadata: Dict[str, str] = {}
    body: List[str] = []
    with path.open("r", encoding="utf-8") as f:
        for line in f:
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition(":")
                if sep:
                    metadata[key.strip()] = value.strip()
            elif line.strip():
                body.append(line)

    rows = list(csv.reader(body))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise TraceFormatError(f"{path}: expected header {','.join(TRACE_HEADER)}")
    try:
        samples = np.array([int(r[1]) for r in rows[1:]], dtype=np.int64)
        sample_period = float(metadata["sample_period"])
    except KeyError:
        raise TraceFormatError(f"{path}: missing '# sample_period' metadata") from None
    except (IndexError, ValueError) as e:
        raise TraceFormatError(f"{path}: {e}") from None
    for expected, row in enumerate(rows[1:]):
        if int(row[0]) != expected:
            raise TraceFormatError(f"{path}: row {expected} has tick_index {row[0]}")
    try:
        return Trace(samples, sample_period, metadata)
    except ValueError as e:
        raise TraceFormatError(f"{path}: {e}") from None


def load_trace_dir(directory: PathLike) -> List[Trace]:
    """Every exported trace in *directory*, in file-name order."""
    files = sorted(Path(directory).glob(TRACE_GLOB))
    if not files:
        raise TraceFormatError(f"{directory}: no {TRACE_GLOB} files")
    traces = [read_trace_csv(p) for p in files]
    if len({len(t) for t in traces}) != 1 or len({t.sample_period for t in traces}) != 1:
        raise TraceFormatError(f"{directory}: traces differ in length or sample period")
    log.debug("loaded %d traces from %s", len(traces), directory)
    return traces


# ───────────────────────────── events ─────────────────────────────────
def event_filename(index: int) -> str:
    return f"events_{index:04d}.csv"


def write_events_csv(events: Iterable[ControllerEvent], path: PathLike) -> Path:
    return write_table(
        path, EVENT_HEADER,
        ((ev.sample_index, ev.event, ev.active_k, ev.threshold) for ev in events),
    )


def read_events_csv(path: PathLike) -> List[ControllerEvent]:
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != EVENT_HEADER:
            raise TraceFormatError(f"{path}: expected header {','.join(EVENT_HEADER)}")
        events = []
        for r in reader:
            if r["event"] not in EVENTS:
                raise TraceFormatError(f"{path}: unknown event {r['event']!r} at sample {r['sample_index']}")
            events.append(ControllerEvent(int(r["sample_index"]), r["event"], int(r["active_k"]), float(r["threshold"])))
        return events
