"""Operation envelopes, delivery, the flatten commit round, and catch-up.

Sites are isolated actors: each owns its replica and talks to the others
only through messages. Delivery tolerates duplication and reordering:
causal readiness is read off the tree itself (an insert is ready once its
ancestors exist, a delete once its target exists), unready operations wait
in a pending buffer, and duplicates are suppressed by operation identity
``(origin, origin_seq)`` plus the idempotence of the replica operations.

Flattening is coordinated update-wins two-phase commit over the core
sites: any site that detects an update concurrent with the prepare (a
delivered-set digest mismatch, or a non-empty outbox/pending buffer)
votes no and the flatten aborts with no effect.

Epochs: each committed flatten opens a new epoch and invalidates old
TIDs. Operations carry their epoch and are buffered, never applied, by a
replica in a different epoch. A lagging nebula site re-enters the current
epoch through the cyan/black catch-up translation below.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Iterable, Optional

from .core import Color, EffectReport, MajorNode, MiniNode, Treedoc
from .errors import EpochMismatch, InvariantViolation, ProtocolError
from .flatten import build_balanced, flatten_for_commit
from .tid import LEFT, RIGHT, Disambiguator, TID

Identity = tuple[Disambiguator, int]


class OpKind(Enum):
    INSERT = "insert"
    DELETE = "delete"


class Role(Enum):
    CORE = "core"
    NEBULA = "nebula"


class DeliverResult(Enum):
    APPLIED = "applied"
    BUFFERED = "buffered"
    DUPLICATE = "duplicate"
    WRONG_EPOCH = "wrong_epoch"


class VoteDecision(Enum):
    YES = "yes"
    NO = "no"


class AbortReason(Enum):
    NO_VOTE = "no_vote"
    CRASHED_MEMBER = "crashed_member"
    TIMEOUT = "timeout"


@dataclass(frozen=True, slots=True)
class Operation:
    """An epoch-tagged insert or delete exchanged between sites.

    ``(origin, origin_seq)`` identifies the operation for its whole life:
    catch-up translation renames the TID but keeps the identity.
    """

    epoch: int
    kind: OpKind
    tid: TID
    atom: Optional[bytes]
    origin: Disambiguator
    origin_seq: int

    @property
    def identity(self) -> Identity:
        return (self.origin, self.origin_seq)

    def canonical(self) -> str:
        return _op_canonical(self)


@lru_cache(maxsize=1 << 16)
def _op_canonical(op: "Operation") -> str:
    # One op is serialized for logs once per system, not once per delivery.
    atom = "" if op.atom is None else op.atom.hex()
    return (
        f"{op.epoch}:{op.kind.value}:{op.tid.encode().hex()}"
        f":{atom}:{op.origin.hex()}:{op.origin_seq}"
    )


@dataclass(frozen=True)
class PrepareMessage:
    coordinator: Disambiguator
    old_epoch: int
    op_set_digest: str


@dataclass(frozen=True)
class Vote:
    voter: Disambiguator
    decision: VoteDecision


@dataclass(frozen=True)
class FlattenAnnouncement:
    """What a committed flatten tells the rest of the system.

    ``committed_ids`` is the identity set every core site had delivered in
    the old epoch; a nebula site needs it both to know when it has caught
    up on old core updates and to color its tree cyan/black.
    """

    old_epoch: int
    new_epoch: int
    committed_ids: frozenset[Identity]
    doc_digest: str


@dataclass(frozen=True)
class FlattenOutcome:
    committed: bool
    new_epoch: Optional[int] = None
    reason: Optional[AbortReason] = None
    announcement: Optional[FlattenAnnouncement] = None


def ids_digest(ids: Iterable[Identity]) -> str:
    """Order-insensitive canonical digest over operation identities."""
    h = hashlib.sha256()
    for origin, seq in sorted(ids):
        h.update(origin)
        h.update(f":{seq};".encode())
    return h.hexdigest()


# -- wire message kinds (canonical forms used by the simulator's logs) -----


@dataclass(frozen=True)
class OpMessage:
    op: Operation

    def canonical(self) -> str:
        return f"op|{self.op.canonical()}"


@dataclass(frozen=True)
class Prepare:
    prepare: PrepareMessage

    def canonical(self) -> str:
        p = self.prepare
        return f"prepare|{p.coordinator.hex()}|{p.old_epoch}|{p.op_set_digest}"


@dataclass(frozen=True)
class VoteMsg:
    vote: Vote

    def canonical(self) -> str:
        return f"vote|{self.vote.voter.hex()}|{self.vote.decision.value}"


@dataclass(frozen=True)
class Decision:
    committed: bool
    new_epoch: Optional[int]
    doc_digest: Optional[str]
    announcement: Optional[FlattenAnnouncement]

    def canonical(self) -> str:
        word = "committed" if self.committed else "aborted"
        ids = (
            ids_digest(self.announcement.committed_ids)
            if self.announcement is not None
            else ""
        )
        return f"decision|{word}|{self.new_epoch}|{self.doc_digest}|{ids}"


@dataclass(frozen=True)
class CatchUpBatch:
    sender: Disambiguator
    ops: tuple[Operation, ...]

    def canonical(self) -> str:
        body = ";".join(op.canonical() for op in self.ops)
        return f"catchup|{self.sender.hex()}|{body}"


def causal_ready(replica: Treedoc, op: Operation) -> bool:
    """Structural delivery condition; no vector clocks involved."""
    if op.kind is OpKind.DELETE:
        return replica.find(op.tid) is not None
    return replica.ancestors_exist(op.tid)


@dataclass
class _CyanEntry:
    atom: bytes
    dis: Disambiguator
    old_tid: TID
    black_tomb: Optional[Identity]  # delete the core has not seen yet


class Site:
    """A replica plus its buffers, counters, and role."""

    def __init__(self, site_id: Disambiguator, role: Role):
        self.id = site_id
        self.role = role
        self.replica = Treedoc()
        self.next_seq = 1
        self.outbox: list[Operation] = []
        self.pending: list[Operation] = []
        self._pending_ids: set[Identity] = set()
        # Ops for other epochs, kept for catch-up; per-epoch, deduplicated.
        self.epoch_buffers: dict[int, dict[Identity, Operation]] = {}
        # Approximate duplicate filter: highest contiguous seq per origin.
        self.delivered_summary: dict[Disambiguator, int] = {}
        self.delivered_all: set[Identity] = set()
        self.delivered_by_epoch: dict[int, set[Identity]] = {}
        # TID -> identities of the ops that created/tombstoned it, this epoch.
        # Several sites may race to delete one node, so deletes are a list.
        self.applied_inserts: dict[TID, Identity] = {}
        self.applied_deletes: dict[TID, list[Identity]] = {}
        self.announcements: dict[int, FlattenAnnouncement] = {}
        self.crashed = False
        self.unreachable = False
        self._delivered_since_take: list[Operation] = []

    def __repr__(self):
        return f"Site({self.id!r}, {self.role.value}, epoch={self.replica.epoch})"

    # -- local updates ------------------------------------------------------

    def submit_local(
        self,
        kind: OpKind,
        *,
        position: Optional[int] = None,
        tid: Optional[TID] = None,
        atom: Optional[bytes] = None,
    ) -> Operation:
        """Initiate an update here: allocate, apply, stamp, queue for dispatch."""
        if kind is OpKind.INSERT:
            if atom is None:
                raise ProtocolError("insert needs an atom")
            if tid is None:
                tid = self.replica.alloc_tid_at_position(position, self.id)
        else:
            if atom is not None:
                raise ProtocolError("delete carries no atom")
            if tid is None:
                tid = self.replica.tid_of_live_index(position)
        op = Operation(self.replica.epoch, kind, tid, atom, self.id, self.next_seq)
        self.next_seq += 1
        result = self._apply(op)
        if result is not EffectReport.APPLIED:
            raise ProtocolError(f"local {kind.value} was not fresh: {result}")
        self._record(op)
        self.outbox.append(op)
        return op

    def _apply(self, op: Operation) -> EffectReport:
        if op.epoch != self.replica.epoch:
            raise EpochMismatch(
                f"op epoch {op.epoch} vs replica epoch {self.replica.epoch}"
            )
        if op.kind is OpKind.INSERT:
            return self.replica.insert(op.tid, op.atom)
        return self.replica.delete(op.tid)

    def _record(self, op: Operation) -> None:
        ident = op.identity
        self.delivered_all.add(ident)
        self.delivered_by_epoch.setdefault(op.epoch, set()).add(ident)
        if op.kind is OpKind.INSERT:
            self.applied_inserts[op.tid] = ident
        else:
            idents = self.applied_deletes.setdefault(op.tid, [])
            if ident not in idents:
                idents.append(ident)
        seq = self.delivered_summary.get(op.origin, 0)
        while (op.origin, seq + 1) in self.delivered_all:
            seq += 1
        self.delivered_summary[op.origin] = seq

    # -- remote delivery ----------------------------------------------------

    def deliver(self, op: Operation) -> DeliverResult:
        """Replay a remote operation, buffering until causally ready.

        Any number of redeliveries of the same message leaves the replica
        unchanged; out-of-epoch operations are stored for catch-up.
        """
        ident = op.identity
        if op.origin_seq <= self.delivered_summary.get(op.origin, 0):
            return DeliverResult.DUPLICATE
        if ident in self.delivered_all:
            return DeliverResult.DUPLICATE
        if op.epoch != self.replica.epoch:
            self.epoch_buffers.setdefault(op.epoch, {}).setdefault(ident, op)
            return DeliverResult.WRONG_EPOCH
        if ident in self._pending_ids:
            return DeliverResult.DUPLICATE
        if causal_ready(self.replica, op):
            result = self._apply(op)
            self._record(op)
            # Even when the effect already existed (a concurrent delete beat
            # this one to the same node), the identity is news and must keep
            # propagating, or other sites would wait on it forever.
            self._delivered_since_take.append(op)
            self._drain_pending()
            if result is not EffectReport.APPLIED:
                return DeliverResult.DUPLICATE
            return DeliverResult.APPLIED
        self.pending.append(op)
        self._pending_ids.add(ident)
        return DeliverResult.BUFFERED

    def _drain_pending(self) -> None:
        progress = True
        while progress:
            progress = False
            still: list[Operation] = []
            for op in self.pending:
                if causal_ready(self.replica, op):
                    self._apply(op)
                    self._record(op)
                    self._pending_ids.discard(op.identity)
                    self._delivered_since_take.append(op)
                    progress = True
                else:
                    still.append(op)
            self.pending = still

    def take_delivered(self) -> list[Operation]:
        """Operations newly recorded since the last call (what relays forward)."""
        out = self._delivered_since_take
        self._delivered_since_take = []
        return out

    # -- flatten voting and commit -------------------------------------------

    def vote_on_prepare(self, msg: PrepareMessage) -> Vote:
        """Yes only when this site has seen exactly the coordinator's ops
        and has nothing of its own in flight."""
        if self.role is not Role.CORE:
            raise ProtocolError("only core sites vote")
        ok = (
            self.replica.epoch == msg.old_epoch
            and not self.outbox
            and not self.pending
            and ids_digest(self.delivered_by_epoch.get(msg.old_epoch, ()))
            == msg.op_set_digest
        )
        return Vote(self.id, VoteDecision.YES if ok else VoteDecision.NO)

    def _commit_flatten(self) -> str:
        assert not self.outbox and not self.pending
        self.replica, digest = flatten_for_commit(self.replica)
        self.applied_inserts = {}
        self.applied_deletes = {}
        return digest

    def receive_decision(self, ann: FlattenAnnouncement) -> None:
        self.announcements.setdefault(ann.old_epoch, ann)

    # -- catch-up -------------------------------------------------------------

    def mark_colors(self, core_op_identities: Iterable[Identity]) -> None:
        """Color the tree: cyan for effects the core committed, black otherwise.

        A node may be a cyan node with a black tombstone (core inserted it,
        this side deleted it). The converse cannot happen honestly: the core
        cannot have committed a delete for a node it never saw.
        """
        if self.role is not Role.NEBULA:
            raise ProtocolError("coloring is a nebula-side step")
        ids = frozenset(core_op_identities)
        for tid, mini in self.replica.walk():
            ins = self.applied_inserts.get(tid)
            mini.color = Color.CYAN if (ins is None or ins in ids) else Color.BLACK
            if mini.tombstone:
                didents = self.applied_deletes.get(tid)
                if not didents:
                    raise ProtocolError(f"tombstone at {tid!r} has no recorded delete")
                # Cyan as soon as any delete of this node committed: the core
                # dropped the node, so it must leave the flattened list too.
                mini.tombstone_color = (
                    Color.CYAN if any(d in ids for d in didents) else Color.BLACK
                )
                if mini.color is Color.BLACK and mini.tombstone_color is Color.CYAN:
                    raise InvariantViolation(
                        f"black node with cyan tombstone at {tid!r}"
                    )
            else:
                mini.tombstone_color = None

    def _collect_catch_up(
        self,
    ) -> tuple[list[_CyanEntry], dict[int, list[MiniNode]], dict[int, TID]]:
        """Step one: the ordered cyan list plus black subtrees per gap.

        Black nodes only ever hang below the cyan skeleton (a cyan node's
        ancestors are all cyan, because the core applied it only after its
        ancestors existed there), so a maximal black subtree is intact and
        its whole span falls in a single gap between consecutive cyan list
        entries. Gap 0 is the virtual sentinel before the first entry.
        """
        node_tids = {id(mini): tid for tid, mini in self.replica.walk()}
        cyans: list[_CyanEntry] = []
        groups: dict[int, list[MiniNode]] = {}
        doc = self.replica
        if doc.root.minis:
            stack: list[list] = [[doc.root, 0, 0]]
            while stack:
                frame = stack[-1]
                major, idx = frame[0], frame[1]
                if idx >= len(major.minis):
                    stack.pop()
                    continue
                mini = major.minis[idx]
                if frame[2] == 0:
                    if mini.color is Color.BLACK:
                        groups.setdefault(len(cyans), []).append(mini)
                        frame[1] += 1
                        continue
                    frame[2] = 1
                    if mini.left is not None:
                        stack.append([mini.left, 0, 0])
                        continue
                if frame[2] == 1:
                    frame[2] = 2
                    tid = node_tids[id(mini)]
                    if not mini.tombstone:
                        cyans.append(
                            _CyanEntry(mini.atom, mini.disambiguator, tid, None)
                        )
                    elif mini.tombstone_color is Color.BLACK:
                        # One delete is enough to kill the node at the core;
                        # redundant racing deletes stay local.
                        cyans.append(
                            _CyanEntry(
                                mini.atom,
                                mini.disambiguator,
                                tid,
                                min(self.applied_deletes[tid]),
                            )
                        )
                    # A cyan tombstone drops out of the list; its children
                    # are walked normally and its black subtrees land in the
                    # current gap, i.e. at the end of the last entry built.
                    if mini.right is not None:
                        stack.append([mini.right, 0, 0])
                        continue
                frame[1] += 1
                frame[2] = 0
        return cyans, groups, node_tids

    def catch_up(
        self, buffered_old_core_ops: Iterable[Operation], new_epoch: int
    ) -> list[Operation]:
        """Translate this site's black operations into the new epoch.

        Applies any remaining old core updates, colors the tree, rebuilds
        the cyan skeleton exactly as the core's flatten did, reattaches the
        black subtrees at order-preserving free slots, and reads the
        translated operations (original identities, new TIDs) off the new
        tree. The emitted set covers every black operation in the tree, not
        only the ones this site originated.
        """
        if self.role is not Role.NEBULA:
            raise ProtocolError("catch-up is a nebula-side step")
        if self.replica.epoch != new_epoch - 1:
            raise EpochMismatch(
                f"replica at epoch {self.replica.epoch}, cannot enter {new_epoch}"
            )
        old_epoch = new_epoch - 1
        ann = self.announcements.get(old_epoch)
        if ann is None or ann.new_epoch != new_epoch:
            raise EpochMismatch(f"no commit announcement for epoch {old_epoch}")
        for op in buffered_old_core_ops:
            self.deliver(op)
        missing = ann.committed_ids - self.delivered_by_epoch.get(old_epoch, set())
        if missing:
            raise ProtocolError(
                f"catch-up started before {len(missing)} committed ops arrived"
            )
        self.mark_colors(ann.committed_ids)
        old_ins = self.applied_inserts
        old_del = self.applied_deletes
        cyans, groups, node_tids = self._collect_catch_up()

        new_doc = build_balanced([(e.atom, e.dis) for e in cyans])
        new_doc.epoch = new_epoch
        new_infos = list(new_doc.walk())

        emissions: list[Operation] = []
        new_ins: dict[TID, Identity] = {}
        new_del: dict[TID, list[Identity]] = {}
        for entry, (new_tid, new_mini) in zip(cyans, new_infos):
            if entry.black_tomb is not None:
                new_mini.tombstone = True
                new_mini.tombstone_color = Color.BLACK
                origin, seq = entry.black_tomb
                emissions.append(
                    Operation(new_epoch, OpKind.DELETE, new_tid, None, origin, seq)
                )
                new_del[new_tid] = [entry.black_tomb]

        for gap in sorted(groups):
            roots = groups[gap]
            if not cyans:
                first = roots[0]
                new_doc.root.minis.append(first)
                anchor, direction = _rightmost_free(first)
                rest = roots[1:]
            else:
                anchor, direction = _gap_slot(new_infos, gap)
                rest = roots
            for root in rest:
                _attach_at(anchor, direction, root)
                anchor, direction = _rightmost_free(root)
        new_doc.recompute_counters()

        for new_tid, mini in new_doc.walk():
            if mini.color is Color.BLACK:
                old_tid = node_tids[id(mini)]
                origin, seq = old_ins[old_tid]
                emissions.append(
                    Operation(new_epoch, OpKind.INSERT, new_tid, mini.atom, origin, seq)
                )
                new_ins[new_tid] = (origin, seq)
                if mini.tombstone:
                    dorigin, dseq = min(old_del[old_tid])
                    emissions.append(
                        Operation(new_epoch, OpKind.DELETE, new_tid, None, dorigin, dseq)
                    )
                    new_del[new_tid] = [(dorigin, dseq)]
        emissions.sort(
            key=lambda op: (op.tid.depth, 0 if op.kind is OpKind.INSERT else 1)
        )

        for mini, _, _, _ in new_doc.iter_nodes():
            mini.color = None
            mini.tombstone_color = None
        self.replica = new_doc
        self.applied_inserts = new_ins
        self.applied_deletes = new_del
        epoch_set = self.delivered_by_epoch.setdefault(new_epoch, set())
        epoch_set.update(op.identity for op in emissions)
        self.pending.clear()
        self._pending_ids.clear()
        self.outbox = [op for op in self.outbox if op.epoch >= new_epoch]
        return emissions

    def maybe_catch_up(self) -> list[Operation]:
        """Chain catch-ups for every completed announcement.

        Returns the emissions of the last epoch entered: anything the core
        still has not seen is re-translated into the following epoch under
        its original identity, so earlier batches are superseded.
        """
        emissions: list[Operation] = []
        while self.role is Role.NEBULA:
            ann = self.announcements.get(self.replica.epoch)
            if ann is None:
                break
            have = self.delivered_by_epoch.get(self.replica.epoch, set())
            # len() guard keeps the hot path cheap: a subset needs at least
            # as many delivered identities as the committed set holds.
            if len(have) < len(ann.committed_ids) or not ann.committed_ids <= have:
                break
            emissions = self.catch_up([], ann.new_epoch)
            self._drain_epoch_buffer()
        return emissions

    def _drain_epoch_buffer(self) -> None:
        ops = self.epoch_buffers.pop(self.replica.epoch, None)
        if ops:
            for op in ops.values():
                self.deliver(op)


def _gap_slot(
    new_infos: list[tuple[TID, MiniNode]], gap: int
) -> tuple[MiniNode, int]:
    """The free slot whose infix position is gap ``gap`` of the new tree.

    Between consecutive infix neighbours one of (left.right, right.left) is
    always absent in a freshly built tree, so attaching there cannot collide
    with a cyan node and never needs the major-node merge case.
    """
    if gap == 0:
        return new_infos[0][1], LEFT
    if gap == len(new_infos):
        return new_infos[-1][1], RIGHT
    left_mini = new_infos[gap - 1][1]
    if left_mini.right is None:
        return left_mini, RIGHT
    return new_infos[gap][1], LEFT


def _attach_at(parent: MiniNode, direction: int, root: MiniNode) -> None:
    assert parent.child(direction) is None
    parent.set_child(direction, MajorNode([root]))


def _rightmost_free(root: MiniNode) -> tuple[MiniNode, int]:
    cur = root
    while cur.right is not None:
        cur = cur.right.minis[-1]
    return cur, RIGHT


Observer = Callable[[Disambiguator, Disambiguator, object], None]


def initiate_flatten(
    coordinator: Site,
    core_members: Iterable[Site],
    observer: Optional[Observer] = None,
) -> FlattenOutcome:
    """Run one update-wins two-phase-commit flatten round.

    The round aborts if any member is crashed or unreachable or votes no;
    in that case no replica changes. On commit every member flattens
    locally (deterministic, so the replicas stay equal) and enters the next
    epoch.
    """
    if coordinator.role is not Role.CORE:
        raise ProtocolError("only a core site may coordinate a flatten")
    members = list(core_members)
    if coordinator not in members:
        members.insert(0, coordinator)
    old_epoch = coordinator.replica.epoch
    prepare = PrepareMessage(
        coordinator.id,
        old_epoch,
        ids_digest(coordinator.delivered_by_epoch.get(old_epoch, ())),
    )
    for member in members:
        if observer is not None:
            observer(coordinator.id, member.id, Prepare(prepare))
        if member.crashed:
            return FlattenOutcome(False, reason=AbortReason.CRASHED_MEMBER)
        if member.unreachable:
            return FlattenOutcome(False, reason=AbortReason.TIMEOUT)
        vote = member.vote_on_prepare(prepare)
        if observer is not None:
            observer(member.id, coordinator.id, VoteMsg(vote))
        if vote.decision is VoteDecision.NO:
            return FlattenOutcome(False, reason=AbortReason.NO_VOTE)
    committed_ids = frozenset(coordinator.delivered_by_epoch.get(old_epoch, set()))
    doc_digest = ""
    for member in members:
        digest = member._commit_flatten()
        if member is coordinator:
            doc_digest = digest
    announcement = FlattenAnnouncement(
        old_epoch,
        old_epoch + 1,
        committed_ids,
        doc_digest,
    )
    for member in members:
        member.receive_decision(announcement)
    return FlattenOutcome(True, old_epoch + 1, None, announcement)
