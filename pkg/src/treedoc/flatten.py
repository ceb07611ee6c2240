"""Local restructuring: tree -> flat document -> canonical balanced tree.

Flattening collects the live atoms in document order, rebuilds them as a
deterministic balanced tree (midpoint recursion, the element at index
``n // 2`` becomes each subtree root), bumps the epoch, and reports the
old-TID to new-TID renaming for the surviving atoms. Tombstones are
dropped: an old-epoch delete aimed at one of them translates to a no-op.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .core import MajorNode, MiniNode, Treedoc
from .tid import Disambiguator, TID, _varint_len, selector_cost

Entry = tuple[bytes, Disambiguator]


@dataclass(frozen=True)
class FlattenResult:
    new_doc: Treedoc
    mapping: dict[TID, TID]  # old live TID -> new TID, order-preserving


def build_balanced(entries: list[Entry]) -> Treedoc:
    """Balanced tree over ``entries`` (atom, disambiguator), in infix order.

    Every node is a single-mini major node that keeps the original atom's
    disambiguator, so provenance and uniqueness arguments survive the
    rebuild. Depth is floor(log2(n)).
    """
    doc = Treedoc()
    total = [0]
    major = _build_major(entries, 0, len(entries), 1, 0, total)
    if major is not None:
        doc.root = major
    doc.live_count = len(entries)
    doc.tid_bytes_total = total[0]
    return doc


def _build_major(
    entries: list[Entry],
    lo: int,
    hi: int,
    pairs: int,
    base_cost: int,
    total: list[int],
) -> MajorNode | None:
    if lo >= hi:
        return None
    mid = (lo + hi) // 2
    atom, dis = entries[mid]
    cost = base_cost + selector_cost(dis)
    total[0] += _varint_len(pairs) + (pairs + 7) // 8 + cost
    mini = MiniNode(dis, atom)
    mini.left = _build_major(entries, lo, mid, pairs + 1, cost, total)
    mini.right = _build_major(entries, mid + 1, hi, pairs + 1, cost, total)
    mini.live_size = hi - lo
    major = MajorNode([mini])
    major.live_size = hi - lo
    return major


def flatten_local(doc: Treedoc) -> FlattenResult:
    """Flatten one replica and report the live-TID renaming.

    Deterministic: structurally equal replicas produce structurally equal
    results, which is what lets every core site flatten independently after
    a commit without exchanging state.
    """
    old_tids: list[TID] = []
    entries: list[Entry] = []
    for tid, mini in doc.walk():
        if not mini.tombstone:
            old_tids.append(tid)
            entries.append((mini.atom, mini.disambiguator))
    new_doc = build_balanced(entries)
    new_doc.epoch = doc.epoch + 1
    new_tids = [tid for tid, _ in new_doc.walk()]
    return FlattenResult(new_doc, dict(zip(old_tids, new_tids)))


def flatten_for_commit(doc: Treedoc) -> tuple[Treedoc, str]:
    """The flatten_local rebuild without the mapping, plus a state digest.

    The digest is canonical for post-flatten replicas: the balanced shape
    is a pure function of the entry list, so hashing (epoch, entries) pins
    the whole tree without a second traversal.
    """
    entries = doc.live_entries()
    new_doc = build_balanced(entries)
    new_doc.epoch = doc.epoch + 1
    return new_doc, flat_digest(new_doc.epoch, entries)


def flat_digest(epoch: int, entries: list[Entry]) -> str:
    buf = bytearray(f"flat:{epoch};".encode())
    for atom, dis in entries:
        buf += len(dis).to_bytes(2, "big")
        buf += dis
        buf += len(atom).to_bytes(4, "big")
        buf += atom
    return hashlib.sha256(bytes(buf)).hexdigest()
