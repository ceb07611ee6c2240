import copy
import math
from random import Random

from treedoc import TID, Treedoc, build_balanced, flatten_local

from conftest import random_doc, tid


def _entries(text: str, dis=b"A"):
    return [(ch.encode(), dis) for ch in text]


def test_build_balanced_empty():
    doc = build_balanced([])
    assert doc.text() == ""
    assert doc.live_count == 0


def test_build_balanced_abcdef_shape():
    doc = build_balanced(_entries("abcdef"))
    assert doc.text() == "abcdef"
    root_mini = doc.root.minis[0]
    assert root_mini.atom == b"d"  # midpoint at index n // 2
    stats = doc.stats()
    # three node levels for six atoms: ceil(log2(7)); paths are two deep
    assert stats.max_depth == 2
    assert stats.max_depth + 1 == math.ceil(math.log2(7))


def test_build_balanced_properties():
    rng = Random(5)
    for n in range(1, 65):
        text = "".join(chr(97 + rng.randrange(26)) for _ in range(n))
        doc = build_balanced(_entries(text))
        assert doc.text() == text
        levels = doc.stats().max_depth + 1
        assert levels <= math.ceil(math.log2(n + 1))
        assert doc.counters_consistent()


def test_build_balanced_keeps_disambiguators():
    entries = [(b"x", b"A"), (b"y", b"B"), (b"z", b"C")]
    doc = build_balanced(entries)
    got = [(m.atom, m.disambiguator) for m, _, _, _ in doc.iter_nodes()]
    assert got == entries


def test_flatten_drops_tombstones(abcdef_doc):
    abcdef_doc.delete(tid((0,)))  # b
    abcdef_doc.delete(tid((1, 0)))  # d
    result = flatten_local(abcdef_doc)
    assert result.new_doc.text() == "acef"
    stats = result.new_doc.stats()
    assert stats.live_count == 4
    assert stats.tombstone_count == 0
    assert result.new_doc.epoch == abcdef_doc.epoch + 1


def test_flatten_single_atom_doc():
    doc = Treedoc()
    doc.insert(TID(b"A"), b"x")
    result = flatten_local(doc)
    assert result.new_doc.epoch == 1
    assert result.new_doc.text() == "x"
    # same shape as before, one level up in epoch
    assert [m.atom for m, _, _, _ in result.new_doc.iter_nodes()] == [b"x"]


def test_flatten_deep_spine_compacts():
    doc = Treedoc()
    cur = TID(b"A")
    doc.insert(cur, b"x")
    for _ in range(999):
        cur = doc.alloc_tid_after(cur, b"A")
        doc.insert(cur, b"x")
    result = flatten_local(doc)
    assert result.new_doc.stats().max_depth <= 10
    assert result.new_doc.live_count == 1000


def test_mapping_is_an_order_preserving_bijection(abcdef_doc):
    abcdef_doc.delete(tid((0, 0)))  # drop "a"; mapping covers live atoms only
    old_live = [t for t, m in abcdef_doc.walk() if not m.tombstone]
    result = flatten_local(abcdef_doc)
    mapping = result.mapping
    assert sorted(mapping) == sorted(old_live)
    new_live = [t for t, _ in result.new_doc.walk()]
    assert sorted(mapping.values()) == sorted(new_live)
    assert len(set(mapping.values())) == len(mapping)
    image_in_old_order = [mapping[t] for t in old_live]
    assert image_in_old_order == sorted(image_in_old_order)


def test_flatten_preserves_content():
    rng = Random(13)
    for _ in range(20):
        doc = random_doc(rng, rng.randint(0, 120), delete_ratio=0.4)
        text = doc.text()
        result = flatten_local(doc)
        assert result.new_doc.text() == text
        assert result.new_doc.counters_consistent()


def test_flatten_is_deterministic():
    rng = Random(19)
    doc = random_doc(rng, 70, delete_ratio=0.3)
    twin = copy.deepcopy(doc)
    a = flatten_local(doc)
    b = flatten_local(twin)
    assert a.new_doc.structurally_equal(b.new_doc)
    assert a.new_doc.state_digest() == b.new_doc.state_digest()
    assert a.mapping == b.mapping


def test_flatten_compacts_tid_encoding():
    # Uniform one-byte site ids: mean encoded TID size never grows across a
    # flatten of a tree that has tombstones or is deeper than balanced.
    rng = Random(37)
    checked = 0
    while checked < 30:
        doc = random_doc(rng, rng.randint(2, 150), delete_ratio=0.4)
        stats = doc.stats()
        n = stats.live_count
        unbalanced = stats.max_depth + 1 > math.ceil(math.log2(n + 1)) if n else False
        if stats.tombstone_count == 0 and not unbalanced:
            continue
        result = flatten_local(doc)
        assert (
            result.new_doc.stats().mean_tid_encoded_bytes
            <= stats.mean_tid_encoded_bytes
        )
        checked += 1
