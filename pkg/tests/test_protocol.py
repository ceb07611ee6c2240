from random import Random

import pytest

from treedoc import (
    AbortReason,
    DeliverResult,
    EffectReport,
    InvariantViolation,
    OpKind,
    Operation,
    ProtocolError,
    Role,
    Site,
    TID,
    VoteDecision,
    causal_ready,
    ids_digest,
    initiate_flatten,
)
from treedoc.protocol import PrepareMessage

from conftest import build_abcdef, tid


def gossip(sites):
    """Flush every outbox to every other site until the system is quiet."""
    progress = True
    while progress:
        progress = False
        for site in sites:
            ops, site.outbox = site.outbox, []
            for op in ops:
                progress = True
                for other in sites:
                    if other is not site:
                        other.deliver(op)


def make_cores(n=3):
    return [Site(f"c{i}".encode(), Role.CORE) for i in range(n)]


# -- submit ------------------------------------------------------------------


def test_submit_insert_on_empty_site():
    site = Site(b"A", Role.CORE)
    op = site.submit_local(OpKind.INSERT, position=0, atom=b"x")
    assert op.kind is OpKind.INSERT
    assert op.epoch == 0
    assert op.origin_seq == 1
    assert site.replica.text() == "x"
    assert site.outbox == [op]


def test_submit_counter_increments():
    site = Site(b"A", Role.CORE)
    one = site.submit_local(OpKind.INSERT, position=0, atom=b"x")
    two = site.submit_local(OpKind.INSERT, position=1, atom=b"y")
    assert (one.origin_seq, two.origin_seq) == (1, 2)


def test_concurrent_submits_get_distinct_tids():
    a, b = Site(b"A", Role.CORE), Site(b"B", Role.CORE)
    seed = a.submit_local(OpKind.INSERT, position=0, atom=b"s")
    gossip([a, b])
    op_a = a.submit_local(OpKind.INSERT, position=1, atom=b"1")
    op_b = b.submit_local(OpKind.INSERT, position=1, atom=b"2")
    assert op_a.tid != op_b.tid
    assert seed.tid < op_a.tid and seed.tid < op_b.tid


def test_submit_validates_arguments():
    site = Site(b"A", Role.CORE)
    with pytest.raises(ProtocolError):
        site.submit_local(OpKind.INSERT, position=0)  # no atom
    with pytest.raises(ProtocolError):
        site.submit_local(OpKind.DELETE, position=0, atom=b"x")


# -- causal readiness ----------------------------------------------------------


def test_causal_ready_cases():
    site = Site(b"A", Role.CORE)
    root_insert = Operation(0, OpKind.INSERT, TID(b"X"), b"x", b"X", 1)
    assert causal_ready(site.replica, root_insert)
    orphan = Operation(0, OpKind.INSERT, tid((1, 0), root=b"X", dis=b"X"), b"d", b"X", 2)
    assert not causal_ready(site.replica, orphan)
    abcdef = build_abcdef()
    site.replica = abcdef
    assert causal_ready(site.replica, Operation(0, OpKind.DELETE, tid((0,)), None, b"X", 3))


# -- deliver -------------------------------------------------------------------


def _chain_ops():
    origin = Site(b"O", Role.CORE)
    first = origin.submit_local(OpKind.INSERT, position=0, atom=b"p")
    second = origin.submit_local(OpKind.INSERT, position=1, atom=b"q")
    return origin, first, second


def test_deliver_buffers_until_causally_ready():
    origin, first, second = _chain_ops()
    assert second.tid.parent() == first.tid  # a real descendant
    site = Site(b"R", Role.CORE)
    assert site.deliver(second) is DeliverResult.BUFFERED
    assert site.replica.text() == ""
    assert site.deliver(first) is DeliverResult.APPLIED
    assert site.replica.text() == "pq"
    assert not site.pending
    in_order = Site(b"S", Role.CORE)
    in_order.deliver(first)
    in_order.deliver(second)
    assert site.replica.structurally_equal(in_order.replica)


def test_deliver_duplicate_reports_duplicate():
    origin, first, _ = _chain_ops()
    site = Site(b"R", Role.CORE)
    assert site.deliver(first) is DeliverResult.APPLIED
    before = site.replica.state_digest()
    assert site.deliver(first) is DeliverResult.DUPLICATE
    assert site.replica.state_digest() == before


def test_deliver_duplicate_while_buffered():
    _, _, second = _chain_ops()
    site = Site(b"R", Role.CORE)
    assert site.deliver(second) is DeliverResult.BUFFERED
    assert site.deliver(second) is DeliverResult.DUPLICATE
    assert len(site.pending) == 1


def test_deliver_wrong_epoch_is_buffered_for_catch_up():
    site = Site(b"B", Role.CORE)
    initiate_flatten(site, [site])
    assert site.replica.epoch == 1
    stale = Operation(0, OpKind.INSERT, TID(b"X"), b"x", b"X", 1)
    assert site.deliver(stale) is DeliverResult.WRONG_EPOCH
    assert stale.identity in site.epoch_buffers[0]
    assert site.replica.text() == ""


def test_any_delivery_order_converges():
    # Fresh replicas fed the same operation set in unrelated shuffled
    # orders (buffering sorts out causal readiness) end up identical.
    rng = Random(5150)
    for _ in range(30):
        origins = [Site(bytes([65 + i]), Role.CORE) for i in range(3)]
        ops = []
        for i in range(25):
            site = origins[rng.randrange(3)]
            live = site.replica.live_count
            if live and rng.random() < 0.35:
                op = site.submit_local(OpKind.DELETE, position=rng.randrange(live))
            else:
                op = site.submit_local(
                    OpKind.INSERT, position=rng.randint(0, live), atom=b"%d" % i
                )
            site.outbox.clear()
            for other in origins:
                if other is not site:
                    other.deliver(op)
            ops.append(op)
        replica_a = Site(b"RA", Role.CORE)
        replica_b = Site(b"RB", Role.CORE)
        order_a, order_b = ops[:], ops[:]
        rng.shuffle(order_a)
        rng.shuffle(order_b)
        for op in order_a:
            replica_a.deliver(op)
        for op in order_b:
            replica_b.deliver(op)
        assert replica_a.replica.structurally_equal(origins[0].replica)
        assert replica_a.replica.structurally_equal(replica_b.replica)
        assert not replica_a.pending and not replica_b.pending


def test_duplicate_tolerance_any_redelivery_count():
    origin = Site(b"O", Role.CORE)
    ops = []
    rng = Random(4)
    for i in range(30):
        live = origin.replica.live_count
        if live and rng.random() < 0.3:
            ops.append(origin.submit_local(OpKind.DELETE, position=rng.randrange(live)))
        else:
            ops.append(
                origin.submit_local(
                    OpKind.INSERT, position=rng.randint(0, live), atom=b"%d" % i
                )
            )
    baseline = Site(b"B", Role.CORE)
    for op in ops:
        baseline.deliver(op)
    noisy = Site(b"N", Role.CORE)
    scrambled = ops * 3
    rng.shuffle(scrambled)
    for op in scrambled:
        noisy.deliver(op)
    assert noisy.replica.structurally_equal(baseline.replica)
    assert not noisy.pending


# -- votes and the flatten round ------------------------------------------------


def test_vote_yes_when_synchronized_and_idle():
    a, b, c = make_cores()
    a.submit_local(OpKind.INSERT, position=0, atom=b"x")
    gossip([a, b, c])
    prepare = PrepareMessage(a.id, 0, ids_digest(a.delivered_by_epoch[0]))
    assert b.vote_on_prepare(prepare).decision is VoteDecision.YES


def test_vote_no_on_undelivered_local_op():
    a, b, c = make_cores()
    a.submit_local(OpKind.INSERT, position=0, atom=b"x")
    gossip([a, b, c])
    b.submit_local(OpKind.INSERT, position=1, atom=b"y")  # stays in b's outbox
    prepare = PrepareMessage(a.id, 0, ids_digest(a.delivered_by_epoch[0]))
    assert b.vote_on_prepare(prepare).decision is VoteDecision.NO


def test_vote_no_on_buffered_pending_op():
    a, b, c = make_cores()
    orphan = Operation(0, OpKind.INSERT, tid((0,), root=b"X", dis=b"X"), b"x", b"X", 7)
    assert b.deliver(orphan) is DeliverResult.BUFFERED
    prepare = PrepareMessage(a.id, 0, ids_digest(a.delivered_by_epoch.get(0, set())))
    assert b.vote_on_prepare(prepare).decision is VoteDecision.NO


def test_flatten_commits_on_synchronized_idle_cores():
    cores = make_cores()
    rng = Random(8)
    for i in range(40):
        site = cores[rng.randrange(3)]
        live = site.replica.live_count
        if live and rng.random() < 0.4:
            site.submit_local(OpKind.DELETE, position=rng.randrange(live))
        else:
            site.submit_local(OpKind.INSERT, position=rng.randint(0, live), atom=b"%d" % i)
        gossip(cores)
    outcome = initiate_flatten(cores[0], cores)
    assert outcome.committed
    assert outcome.new_epoch == 1
    for site in cores:
        assert site.replica.epoch == 1
        assert site.replica.tombstone_count == 0
        assert site.replica.structurally_equal(cores[0].replica)


def test_update_wins_aborts_and_preserves_state():
    cores = make_cores()
    cores[0].submit_local(OpKind.INSERT, position=0, atom=b"x")
    gossip(cores)
    survivor = cores[1].submit_local(OpKind.INSERT, position=1, atom=b"y")
    snapshots = [s.replica.state_digest() for s in cores]
    outcome = initiate_flatten(cores[0], cores)
    assert not outcome.committed
    assert outcome.reason is AbortReason.NO_VOTE
    assert [s.replica.state_digest() for s in cores] == snapshots
    # the concurrent update survives and the next round can commit
    gossip(cores)
    assert all(s.replica.text() == "xy" for s in cores)
    retry = initiate_flatten(cores[0], cores)
    assert retry.committed
    assert survivor.identity in retry.announcement.committed_ids


def test_flatten_aborts_on_crashed_member():
    cores = make_cores()
    gossip(cores)
    cores[2].crashed = True
    outcome = initiate_flatten(cores[0], cores)
    assert not outcome.committed
    assert outcome.reason is AbortReason.CRASHED_MEMBER


def test_flatten_aborts_on_unreachable_member():
    cores = make_cores()
    cores[1].unreachable = True
    outcome = initiate_flatten(cores[0], cores)
    assert not outcome.committed
    assert outcome.reason is AbortReason.TIMEOUT


def test_epoch_isolation_never_applies_across_epochs():
    site = Site(b"B", Role.CORE)
    initiate_flatten(site, [site])
    newer = Operation(4, OpKind.INSERT, TID(b"X"), b"x", b"X", 1)
    before = site.replica.state_digest()
    assert site.deliver(newer) is DeliverResult.WRONG_EPOCH
    assert site.replica.state_digest() == before


# -- colors ---------------------------------------------------------------------


def _core_and_nebula():
    core = Site(b"A", Role.CORE)
    nebula = Site(b"N", Role.NEBULA)
    return core, nebula


def _ship(core, nebula):
    ops, core.outbox = core.outbox, []
    for op in ops:
        nebula.deliver(op)


def test_all_core_ops_color_cyan_and_emit_nothing():
    core, nebula = _core_and_nebula()
    core.submit_local(OpKind.INSERT, position=0, atom=b"a")
    core.submit_local(OpKind.INSERT, position=1, atom=b"b")
    core.submit_local(OpKind.DELETE, position=0)
    _ship(core, nebula)
    outcome = initiate_flatten(core, [core])
    nebula.receive_decision(outcome.announcement)
    emissions = nebula.catch_up([], 1)
    assert emissions == []
    assert nebula.replica.structurally_equal(core.replica)


def test_core_insert_nebula_delete_is_cyan_node_black_tombstone():
    core, nebula = _core_and_nebula()
    core.submit_local(OpKind.INSERT, position=0, atom=b"a")
    _ship(core, nebula)
    nebula.submit_local(OpKind.DELETE, position=0)
    from treedoc import Color

    nebula.mark_colors({op for op in core.delivered_by_epoch[0]})
    (t, mini), = list(nebula.replica.walk())
    assert mini.color is Color.CYAN
    assert mini.tombstone
    assert mini.tombstone_color is Color.BLACK


def test_nebula_only_insert_is_black():
    from treedoc import Color

    core, nebula = _core_and_nebula()
    nebula.submit_local(OpKind.INSERT, position=0, atom=b"n")
    nebula.mark_colors(set())
    (_, mini), = list(nebula.replica.walk())
    assert mini.color is Color.BLACK
    assert mini.tombstone_color is None


def test_black_node_with_cyan_tombstone_is_rejected():
    _, nebula = _core_and_nebula()
    nebula.submit_local(OpKind.INSERT, position=0, atom=b"x")
    delete = nebula.submit_local(OpKind.DELETE, position=0)
    with pytest.raises(InvariantViolation):
        nebula.mark_colors({delete.identity})


def test_mark_colors_is_nebula_only():
    core, _ = _core_and_nebula()
    with pytest.raises(ProtocolError):
        core.mark_colors(set())


# -- catch-up ---------------------------------------------------------------------


def test_catch_up_walkthrough_insert_between_and_delete():
    core, nebula = _core_and_nebula()
    core.submit_local(OpKind.INSERT, position=0, atom=b"a")
    core.submit_local(OpKind.INSERT, position=1, atom=b"c")
    _ship(core, nebula)
    insert_b = nebula.submit_local(OpKind.INSERT, position=1, atom=b"b")
    delete_c = nebula.submit_local(OpKind.DELETE, position=2)
    outcome = initiate_flatten(core, [core])
    nebula.receive_decision(outcome.announcement)

    emissions = nebula.catch_up([], 1)
    kinds = sorted(op.kind.value for op in emissions)
    assert kinds == ["delete", "insert"]
    sent_insert = next(op for op in emissions if op.kind is OpKind.INSERT)
    sent_delete = next(op for op in emissions if op.kind is OpKind.DELETE)
    assert sent_insert.atom == b"b"
    assert sent_insert.epoch == 1 and sent_delete.epoch == 1
    assert sent_insert.identity == insert_b.identity
    assert sent_delete.identity == delete_c.identity

    for op in emissions:
        assert core.deliver(op) is DeliverResult.APPLIED
    assert core.replica.text() == "ab"
    assert nebula.replica.text() == "ab"
    assert core.replica.structurally_equal(nebula.replica)
    core_live = {t for t, m in core.replica.walk() if not m.tombstone}
    neb_live = {t for t, m in nebula.replica.walk() if not m.tombstone}
    assert core_live == neb_live


def test_catch_up_insert_lands_right_after_anchor():
    core, nebula = _core_and_nebula()
    core.submit_local(OpKind.INSERT, position=0, atom=b"a")
    core.submit_local(OpKind.INSERT, position=1, atom=b"z")
    _ship(core, nebula)
    nebula.submit_local(OpKind.INSERT, position=1, atom=b"x")
    outcome = initiate_flatten(core, [core])
    nebula.receive_decision(outcome.announcement)
    emissions = nebula.catch_up([], 1)
    assert len(emissions) == 1
    for op in emissions:
        core.deliver(op)
    assert core.replica.text() == "axz"
    assert core.replica.structurally_equal(nebula.replica)


def test_catch_up_translates_delete_of_core_atom():
    core, nebula = _core_and_nebula()
    core.submit_local(OpKind.INSERT, position=0, atom=b"c")
    _ship(core, nebula)
    nebula.submit_local(OpKind.DELETE, position=0)
    outcome = initiate_flatten(core, [core])
    nebula.receive_decision(outcome.announcement)
    emissions = nebula.catch_up([], 1)
    assert [op.kind for op in emissions] == [OpKind.DELETE]
    assert core.replica.text() == "c"  # core still has it live
    core.deliver(emissions[0])
    assert core.replica.text() == ""
    assert core.replica.structurally_equal(nebula.replica)


def test_catch_up_requires_all_committed_ops():
    core, nebula = _core_and_nebula()
    stranded = core.submit_local(OpKind.INSERT, position=0, atom=b"a")
    core.outbox.clear()  # never reaches the nebula
    outcome = initiate_flatten(core, [core])
    nebula.receive_decision(outcome.announcement)
    with pytest.raises(ProtocolError):
        nebula.catch_up([], 1)
    # handing the missing ops to catch_up directly is enough
    emissions = nebula.catch_up([stranded], 1)
    assert emissions == []
    assert nebula.replica.structurally_equal(core.replica)


def test_catch_up_emits_ops_received_from_other_nebula_sites():
    core = Site(b"A", Role.CORE)
    n1 = Site(b"N1", Role.NEBULA)
    n2 = Site(b"N2", Role.NEBULA)
    core.submit_local(OpKind.INSERT, position=0, atom=b"a")
    ops, core.outbox = core.outbox, []
    for op in ops:
        n1.deliver(op)
        n2.deliver(op)
    foreign = n1.submit_local(OpKind.INSERT, position=1, atom=b"x")
    n2.deliver(foreign)  # nebula-to-nebula exchange, then n1 goes dark
    outcome = initiate_flatten(core, [core])
    n2.receive_decision(outcome.announcement)
    emissions = n2.catch_up([], 1)
    assert [op.identity for op in emissions] == [foreign.identity]
    for op in emissions:
        core.deliver(op)
    assert core.replica.text() == "ax"
    assert core.replica.structurally_equal(n2.replica)


def test_multi_epoch_lag_chains_catch_ups():
    core, nebula = _core_and_nebula()
    first = core.submit_local(OpKind.INSERT, position=0, atom=b"a")
    _ship(core, nebula)
    mine = nebula.submit_local(OpKind.INSERT, position=1, atom=b"n")
    nebula.outbox.clear()  # cut off from the core for two epochs

    one = initiate_flatten(core, [core])
    second = core.submit_local(OpKind.INSERT, position=1, atom=b"b")
    core.outbox.clear()
    two = initiate_flatten(core, [core])
    assert core.replica.epoch == 2

    nebula.receive_decision(one.announcement)
    nebula.receive_decision(two.announcement)
    assert nebula.deliver(second) is DeliverResult.WRONG_EPOCH
    emissions = nebula.maybe_catch_up()
    assert nebula.replica.epoch == 2
    assert [op.identity for op in emissions] == [mine.identity]
    assert all(op.epoch == 2 for op in emissions)
    for op in emissions:
        core.deliver(op)
    assert core.replica.text() == nebula.replica.text() == "abn"
    assert core.replica.structurally_equal(nebula.replica)


def test_catch_up_checks_epoch_and_announcement():
    from treedoc import EpochMismatch

    _, nebula = _core_and_nebula()
    with pytest.raises(EpochMismatch):
        nebula.catch_up([], 2)  # nebula is at epoch 0
    with pytest.raises(EpochMismatch):
        nebula.catch_up([], 1)  # no announcement stored


def test_black_subtree_under_cyan_tombstone_reattaches_in_order():
    core, nebula = _core_and_nebula()
    core.submit_local(OpKind.INSERT, position=0, atom=b"a")
    core.submit_local(OpKind.INSERT, position=1, atom=b"k")
    core.submit_local(OpKind.INSERT, position=2, atom=b"z")
    delete_k = core.submit_local(OpKind.DELETE, position=1)
    _ship(core, nebula)
    # nebula hangs two atoms around the now-dead "k": order must survive
    nebula.submit_local(OpKind.INSERT, position=1, atom=b"p")
    nebula.submit_local(OpKind.INSERT, position=2, atom=b"q")
    assert nebula.replica.text() == "apqz"
    outcome = initiate_flatten(core, [core])
    nebula.receive_decision(outcome.announcement)
    emissions = nebula.catch_up([], 1)
    assert len(emissions) == 2
    for op in emissions:
        core.deliver(op)
    assert core.replica.text() == "apqz"
    assert core.replica.structurally_equal(nebula.replica)
    assert delete_k.identity in outcome.announcement.committed_ids


def test_catch_up_matches_single_site_oracle():
    # The converged text must equal what a site that applied every old-epoch
    # operation and then flattened would read.
    from treedoc import flatten_local

    rng = Random(77)
    for _ in range(30):
        core = Site(b"A", Role.CORE)
        nebula = Site(b"N", Role.NEBULA)
        oracle = Site(b"O", Role.CORE)
        for _ in range(rng.randint(1, 12)):
            live = core.replica.live_count
            if live and rng.random() < 0.3:
                core.submit_local(OpKind.DELETE, position=rng.randrange(live))
            else:
                core.submit_local(
                    OpKind.INSERT,
                    position=rng.randint(0, live),
                    atom=bytes([97 + rng.randrange(26)]),
                )
        ops, core.outbox = core.outbox, []
        for op in ops:
            nebula.deliver(op)
            oracle.deliver(op)
        for _ in range(rng.randint(0, 10)):
            live = nebula.replica.live_count
            if live and rng.random() < 0.4:
                nebula.submit_local(OpKind.DELETE, position=rng.randrange(live))
            else:
                nebula.submit_local(
                    OpKind.INSERT,
                    position=rng.randint(0, live),
                    atom=bytes([65 + rng.randrange(26)]),
                )
        for op in nebula.outbox:
            oracle.deliver(op)
        expected = flatten_local(oracle.replica).new_doc.text()

        outcome = initiate_flatten(core, [core])
        nebula.receive_decision(outcome.announcement)
        emissions = nebula.maybe_catch_up()
        for op in emissions:
            core.deliver(op)
        assert core.replica.text() == expected
        assert core.replica.structurally_equal(nebula.replica)


def test_catch_up_stress_interleaved_rounds():
    # Multiple rounds of core edits shipped to the nebula with local nebula
    # edits in between: black subtrees end up nested under cyan nodes that
    # later rounds tombstone, deletes race from both sides, and black
    # chains stack. The single-site oracle still has to predict the text.
    from treedoc import flatten_local

    rng = Random(1234)
    for _ in range(40):
        core = Site(b"A", Role.CORE)
        nebula = Site(b"N", Role.NEBULA)
        oracle = Site(b"O", Role.CORE)
        for _ in range(3):
            for _ in range(rng.randint(0, 6)):
                live = core.replica.live_count
                if live and rng.random() < 0.35:
                    core.submit_local(OpKind.DELETE, position=rng.randrange(live))
                else:
                    core.submit_local(
                        OpKind.INSERT,
                        position=rng.randint(0, live),
                        atom=bytes([97 + rng.randrange(26)]),
                    )
            ops, core.outbox = core.outbox, []
            for op in ops:
                nebula.deliver(op)
                oracle.deliver(op)
            for _ in range(rng.randint(0, 6)):
                live = nebula.replica.live_count
                if live and rng.random() < 0.35:
                    op = nebula.submit_local(OpKind.DELETE, position=rng.randrange(live))
                else:
                    op = nebula.submit_local(
                        OpKind.INSERT,
                        position=rng.randint(0, live),
                        atom=bytes([65 + rng.randrange(26)]),
                    )
                oracle.deliver(op)
        expected = flatten_local(oracle.replica).new_doc.text()

        outcome = initiate_flatten(core, [core])
        assert outcome.committed
        nebula.receive_decision(outcome.announcement)
        emissions = nebula.maybe_catch_up()
        assert nebula.replica.epoch == 1
        for op in emissions:
            core.deliver(op)
        assert core.replica.text() == expected
        assert core.replica.structurally_equal(nebula.replica)
        assert nebula.replica.counters_consistent()


def test_racing_deletes_count_as_cyan_and_stay_local():
    # The nebula tombstones an atom, then the core's concurrent delete of
    # the same atom arrives (ALREADY_TOMBSTONE). One committed delete is
    # enough: the node drops out of the flattened list and the redundant
    # local delete identity is not re-sent.
    core, nebula = _core_and_nebula()
    core.submit_local(OpKind.INSERT, position=0, atom=b"x")
    _ship(core, nebula)
    nebula.submit_local(OpKind.DELETE, position=0)
    core.submit_local(OpKind.DELETE, position=0)
    _ship(core, nebula)
    outcome = initiate_flatten(core, [core])
    nebula.receive_decision(outcome.announcement)
    emissions = nebula.maybe_catch_up()
    assert emissions == []
    assert core.replica.text() == "" == nebula.replica.text()
    assert nebula.replica.structurally_equal(core.replica)


def test_emitted_tombstoned_black_nodes_round_trip():
    # A nebula atom inserted and deleted in the same epoch still crosses the
    # epoch boundary as an insert+delete pair so structures stay identical.
    core, nebula = _core_and_nebula()
    core.submit_local(OpKind.INSERT, position=0, atom=b"a")
    _ship(core, nebula)
    nebula.submit_local(OpKind.INSERT, position=1, atom=b"x")
    nebula.submit_local(OpKind.DELETE, position=1)
    outcome = initiate_flatten(core, [core])
    nebula.receive_decision(outcome.announcement)
    emissions = nebula.catch_up([], 1)
    assert [op.kind for op in emissions] == [OpKind.INSERT, OpKind.DELETE]
    for op in emissions:
        core.deliver(op)
    assert core.replica.text() == "a"
    assert core.replica.structurally_equal(nebula.replica)
    assert core.replica.tombstone_count == 1
