from random import Random

import pytest

from treedoc import TID, PathElement, Treedoc

A = b"A"

# The running example: a six-atom document reading "abcdef" whose TIDs are
# bare bit paths under one site. "c" sits at the root (empty path), "b" at 0,
# "d" at 10.
ABCDEF_PATHS = {
    "c": (),
    "b": (0,),
    "e": (1,),
    "a": (0, 0),
    "d": (1, 0),
    "f": (1, 1),
}
ABCDEF_INSERT_ORDER = ["c", "b", "e", "a", "d", "f"]


def tid(bits, root=A, dis=A) -> TID:
    """TID from bare direction bits with one shared disambiguator."""
    return TID(root, tuple(PathElement(b, dis) for b in bits))


def build_abcdef() -> Treedoc:
    doc = Treedoc()
    for atom in ABCDEF_INSERT_ORDER:
        doc.insert(tid(ABCDEF_PATHS[atom]), atom.encode())
    return doc


@pytest.fixture
def abcdef_doc() -> Treedoc:
    return build_abcdef()


SITES = (b"A", b"B", b"C")


def random_doc(rng: Random, n_ops: int, delete_ratio: float = 0.3) -> Treedoc:
    """A document grown by random position-based edits from several sites."""
    doc = Treedoc()
    for _ in range(n_ops):
        live = doc.live_count
        if live > 0 and rng.random() < delete_ratio:
            doc.delete(doc.tid_of_live_index(rng.randrange(live)))
        else:
            site = SITES[rng.randrange(len(SITES))]
            t = doc.alloc_tid_at_position(rng.randint(0, live), site)
            doc.insert(t, bytes([97 + rng.randrange(26)]))
    return doc
