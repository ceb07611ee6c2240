"""Revision-history ingestion, replay, and measurement.

A trace is a flat list of position-addressed insert/delete events derived
from successive document revisions. Tokenization attaches each separator
run to the unit before it, so concatenating the units reproduces the
source text exactly; that is what makes replay byte-faithful.
"""

from __future__ import annotations

import base64
import re
import time
from dataclasses import dataclass
from difflib import SequenceMatcher
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, TextIO

from .errors import IndexOutOfRange, PositionOutOfRange
from .protocol import OpKind, Role, Site, initiate_flatten

_PARAGRAPH_SPLIT = re.compile(r"(\n{2,})")
_WORD_SPLIT = re.compile(r"(\s+)")


class Granularity(Enum):
    PARAGRAPH = "paragraph"
    WORD = "word"


@dataclass(frozen=True)
class TraceEvent:
    revision: int
    kind: OpKind
    position: int  # index into the live document at application time
    atom: Optional[bytes]  # present for inserts


@dataclass(frozen=True)
class MetricsRow:
    op_index: int
    tree_size_nodes: int
    tombstone_fraction: float
    mean_tid_encoded_bytes: float
    op_duration: float
    epoch: int


def tokenize(text: str, granularity: Granularity) -> list[str]:
    """Split into atoms whose concatenation is exactly ``text``."""
    if not text:
        return []
    pattern = (
        _PARAGRAPH_SPLIT if granularity is Granularity.PARAGRAPH else _WORD_SPLIT
    )
    parts = pattern.split(text)
    units: list[str] = []
    for i in range(0, len(parts), 2):
        unit = parts[i]
        if i + 1 < len(parts):
            unit += parts[i + 1]
        if unit:
            units.append(unit)
    return units


def diff_to_ops(
    old_rev: str,
    new_rev: str,
    granularity: Granularity = Granularity.PARAGRAPH,
    revision: int = 0,
) -> list[TraceEvent]:
    """Common-subsequence diff over atom units.

    Positions are live-document indices at the moment each event applies,
    walking the edit script left to right; replaying the events on
    ``old_rev`` reproduces ``new_rev`` exactly.
    """
    old_units = tokenize(old_rev, granularity)
    new_units = tokenize(new_rev, granularity)
    matcher = SequenceMatcher(a=old_units, b=new_units, autojunk=False)
    events: list[TraceEvent] = []
    offset = 0  # live position of the next unmatched old unit
    for tag, i1, i2, j1, j2 in matcher.get_opcodes():
        if tag == "equal":
            offset += i2 - i1
            continue
        if tag in ("delete", "replace"):
            for _ in range(i2 - i1):
                events.append(TraceEvent(revision, OpKind.DELETE, offset, None))
        if tag in ("insert", "replace"):
            for j in range(j1, j2):
                atom = new_units[j].encode("utf-8")
                events.append(TraceEvent(revision, OpKind.INSERT, offset, atom))
                offset += 1
    return events


def events_from_revisions(
    revisions: Iterable[str], granularity: Granularity = Granularity.PARAGRAPH
) -> list[TraceEvent]:
    """Diff each revision against the previous one; revision 0 starts empty."""
    events: list[TraceEvent] = []
    previous = ""
    for rev_index, text in enumerate(revisions):
        events.extend(diff_to_ops(previous, text, granularity, revision=rev_index))
        previous = text
    return events


def read_revisions_dir(path: str | Path) -> list[str]:
    """Revision texts from a directory, one file per revision, sorted by name."""
    files = sorted(p for p in Path(path).iterdir() if p.is_file())
    return [p.read_text(encoding="utf-8") for p in files]


# -- trace file format: one line per event ---------------------------------
# revision<TAB>kind<TAB>position<TAB>base64-atom (empty for deletes)


def write_trace(events: Iterable[TraceEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            atom = base64.b64encode(ev.atom).decode() if ev.atom is not None else ""
            fh.write(f"{ev.revision}\t{ev.kind.value}\t{ev.position}\t{atom}\n")


def read_trace(path: str | Path) -> list[TraceEvent]:
    events: list[TraceEvent] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                rev, kind, pos, atom64 = line.split("\t")
                event = TraceEvent(
                    int(rev),
                    OpKind(kind),
                    int(pos),
                    base64.b64decode(atom64) if atom64 else None,
                )
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{line_no}: malformed trace line") from exc
            events.append(event)
    return events


def replay(
    events: list[TraceEvent],
    flatten_interval: int = 0,
    site_count: int = 1,
) -> list[MetricsRow]:
    """Apply a trace and measure the structure after every operation.

    ``flatten_interval`` counts revisions between flatten commits (0 never
    flattens). With ``site_count`` > 1, events go round-robin to the sites
    and every message is flushed before the next event, so trace positions
    stay valid at every replica.
    """
    if site_count < 1:
        raise ValueError("site_count must be at least 1")
    sites = [Site(f"s{i:02d}".encode(), Role.CORE) for i in range(site_count)]
    rows: list[MetricsRow] = []
    flattened_through = 0
    op_index = 0
    rr = 0
    for ev in events:
        if flatten_interval > 0:
            boundary = (ev.revision // flatten_interval) * flatten_interval
            if boundary > flattened_through:
                # In lockstep replay every site is synchronized, so the
                # commit succeeds; an abort just retries at the next boundary.
                if initiate_flatten(sites[0], sites).committed:
                    flattened_through = boundary
        site = sites[rr]
        rr = (rr + 1) % site_count
        started = time.perf_counter()
        try:
            if ev.kind is OpKind.INSERT:
                op = site.submit_local(
                    OpKind.INSERT, position=ev.position, atom=ev.atom
                )
            else:
                op = site.submit_local(OpKind.DELETE, position=ev.position)
        except IndexOutOfRange:
            raise PositionOutOfRange(
                ev.revision, ev.position, site.replica.live_count
            ) from None
        duration = time.perf_counter() - started
        site.outbox.clear()
        for other in sites:
            if other is not site:
                other.deliver(op)
        doc = site.replica
        rows.append(
            MetricsRow(
                op_index,
                doc.node_count,
                doc.tombstone_count / doc.node_count if doc.node_count else 0.0,
                doc.mean_tid_encoded_bytes(),
                duration,
                doc.epoch,
            )
        )
        op_index += 1
    return rows


def write_metrics_csv(rows: Iterable[MetricsRow], out: str | Path | TextIO) -> None:
    header = (
        "op_index,tree_size_nodes,tombstone_fraction,"
        "mean_tid_encoded_bytes,op_duration,epoch\n"
    )
    if hasattr(out, "write"):
        fh = out
        fh.write(header)
        for row in rows:
            fh.write(_csv_line(row))
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(header)
            for row in rows:
                fh.write(_csv_line(row))


def _csv_line(row: MetricsRow) -> str:
    return (
        f"{row.op_index},{row.tree_size_nodes},{row.tombstone_fraction:.6f},"
        f"{row.mean_tid_encoded_bytes:.3f},{row.op_duration:.9f},{row.epoch}\n"
    )
