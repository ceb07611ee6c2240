"""Tree-path identifiers (TIDs) and their total order.

A TID names one mini-node in the document tree: a disambiguator selects an
entry of the root major node, then each path element walks into the left or
right child of the current mini-node and selects an entry of that child by
disambiguator. The order over TIDs is the infix traversal order of the tree
and is computable from the identifiers alone:

* at the first position where two TIDs differ in direction, left sorts
  before right;
* a node sorts before its own ancestor when it continues leftward and after
  it when it continues rightward (so ``0 < "" < 1`` for bare paths);
* entries sharing a position are ordered by disambiguator.

Comparison is implemented by mapping every TID to a plain tuple whose
lexicographic order realises those rules: each element becomes
``(0, dis)`` for a left step or ``(2, dis)`` for a right step, the root
entry becomes ``(1, dis)``, and a ``(1, b"")`` terminator marks the
ancestor position itself. The key is built once per TID (lazily, on first
comparison), so comparisons and sorting reduce to tuple comparison.
"""

from __future__ import annotations

from typing import Iterator, NamedTuple, Optional

from .errors import MalformedTID

LEFT = 0
RIGHT = 1

# A site identifier: non-empty bytes, ordered lexicographically, unique per
# site across the whole system.
Disambiguator = bytes


class PathElement(NamedTuple):
    direction: int  # LEFT or RIGHT
    disambiguator: Disambiguator


def _check_disambiguator(dis: bytes) -> None:
    if not isinstance(dis, bytes) or len(dis) == 0:
        raise MalformedTID(f"disambiguator must be non-empty bytes, got {dis!r}")


class TID:
    """Immutable identifier of one mini-node.

    ``root_disambiguator`` selects the entry of the root major node; it may
    be ``None`` only for the empty TID (used when writing bare example paths
    such as ``10``; an absent disambiguator sorts before every real one).
    """

    __slots__ = ("root_disambiguator", "path", "_key", "_hash")

    def __init__(
        self,
        root_disambiguator: Optional[Disambiguator] = None,
        path: tuple[PathElement, ...] = (),
    ):
        if root_disambiguator is not None:
            _check_disambiguator(root_disambiguator)
        elems = []
        for elem in path:
            direction, dis = elem
            if direction not in (LEFT, RIGHT):
                raise MalformedTID(f"direction must be 0 or 1, got {direction!r}")
            _check_disambiguator(dis)
            elems.append(PathElement(direction, dis))
        if elems and root_disambiguator is None:
            raise MalformedTID("a TID with a non-empty path needs a root disambiguator")
        object.__setattr__(self, "root_disambiguator", root_disambiguator)
        object.__setattr__(self, "path", tuple(elems))
        object.__setattr__(self, "_key", None)
        object.__setattr__(self, "_hash", hash((root_disambiguator, self.path)))

    @classmethod
    def _make(cls, root_disambiguator, path: tuple) -> "TID":
        # Trusted fast path for elements taken from an existing tree;
        # skips the per-element validation of __init__.
        self = object.__new__(cls)
        object.__setattr__(self, "root_disambiguator", root_disambiguator)
        object.__setattr__(self, "path", path)
        object.__setattr__(self, "_key", None)
        object.__setattr__(self, "_hash", hash((root_disambiguator, path)))
        return self

    def _sort_key(self) -> tuple:
        # Built on first comparison; most TIDs are only hashed, never ordered.
        key = self._key
        if key is None:
            key = [(1, self.root_disambiguator or b"")]
            key.extend((2 if d else 0, dis) for d, dis in self.path)
            key.append((1, b""))
            key = tuple(key)
            object.__setattr__(self, "_key", key)
        return key

    def __setattr__(self, name, value):
        raise AttributeError("TID is immutable")

    # -- ordering ---------------------------------------------------------

    def __eq__(self, other):
        if not isinstance(other, TID):
            return NotImplemented
        return (
            self.root_disambiguator == other.root_disambiguator
            and self.path == other.path
        )

    def __hash__(self):
        return self._hash

    def __lt__(self, other: "TID") -> bool:
        return self._sort_key() < other._sort_key()

    def __le__(self, other: "TID") -> bool:
        return self._sort_key() <= other._sort_key()

    def __gt__(self, other: "TID") -> bool:
        return self._sort_key() > other._sort_key()

    def __ge__(self, other: "TID") -> bool:
        return self._sort_key() >= other._sort_key()

    # -- structure --------------------------------------------------------

    @property
    def depth(self) -> int:
        """Number of path elements below the root entry."""
        return len(self.path)

    def child(self, direction: int, dis: Disambiguator) -> "TID":
        if self.root_disambiguator is None:
            raise MalformedTID("cannot extend a TID that has no root disambiguator")
        if direction not in (LEFT, RIGHT):
            raise MalformedTID(f"direction must be 0 or 1, got {direction!r}")
        _check_disambiguator(dis)
        return TID._make(
            self.root_disambiguator, self.path + (PathElement(direction, dis),)
        )

    def parent(self) -> Optional["TID"]:
        """TID of the mini-node this one hangs off, or None at root level."""
        if not self.path:
            return None
        return TID._make(self.root_disambiguator, self.path[:-1])

    def ancestors(self) -> Iterator["TID"]:
        """Proper ancestors, outermost first."""
        if self.root_disambiguator is None:
            return
        for i in range(len(self.path)):
            yield TID._make(self.root_disambiguator, self.path[:i])

    def __repr__(self):
        return f"TID({self.pretty()})"

    def pretty(self) -> str:
        root = self.root_disambiguator
        parts = ["~" if root is None else root.decode("latin-1")]
        parts.extend(f"{d}{dis.decode('latin-1')}" for d, dis in self.path)
        return "/".join(parts)

    # -- wire encoding ----------------------------------------------------

    def encode(self) -> bytes:
        """Serialize as direction bits plus length-prefixed disambiguators.

        The root entry is carried as the first pair with a zero direction
        bit. Layout: varint pair count, then ceil(n/8) bytes of packed
        direction bits, then each disambiguator length-prefixed (varint).
        """
        pairs: list[tuple[int, bytes]] = []
        if self.root_disambiguator is not None:
            pairs.append((0, self.root_disambiguator))
            pairs.extend(self.path)
        out = bytearray(_encode_varint(len(pairs)))
        bits = bytearray((len(pairs) + 7) // 8)
        for i, (direction, _) in enumerate(pairs):
            if direction:
                bits[i // 8] |= 1 << (i % 8)
        out += bits
        for _, dis in pairs:
            out += _encode_varint(len(dis))
            out += dis
        return bytes(out)

    @classmethod
    def decode(cls, data: bytes) -> "TID":
        try:
            count, pos = _decode_varint(data, 0)
            nbits = (count + 7) // 8
            bits = data[pos : pos + nbits]
            pos += nbits
            dirs = [(bits[i // 8] >> (i % 8)) & 1 for i in range(count)]
            diss: list[bytes] = []
            for _ in range(count):
                length, pos = _decode_varint(data, pos)
                diss.append(data[pos : pos + length])
                pos += length
        except IndexError:
            raise MalformedTID("truncated TID encoding") from None
        if pos != len(data):
            raise MalformedTID("trailing bytes after encoded TID")
        if count == 0:
            return cls(None, ())
        path = tuple(PathElement(d, dis) for d, dis in zip(dirs[1:], diss[1:]))
        return cls(diss[0], path)

    def encoded_size(self) -> int:
        """len(self.encode()) without building the bytes."""
        if self.root_disambiguator is None:
            return 1  # varint 0
        n = len(self.path) + 1
        size = _varint_len(n) + (n + 7) // 8
        size += _varint_len(len(self.root_disambiguator)) + len(self.root_disambiguator)
        for _, dis in self.path:
            size += _varint_len(len(dis)) + len(dis)
        return size


def compare_tid(a: TID, b: TID) -> int:
    """-1, 0 or 1 as ``a`` sorts before, equal to, or after ``b``."""
    ka, kb = a._sort_key(), b._sort_key()
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


# -- varints (unsigned LEB128) -------------------------------------------


def _encode_varint(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _decode_varint(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def _varint_len(value: int) -> int:
    n = 1
    while value > 0x7F:
        value >>= 7
        n += 1
    return n


def selector_cost(dis: Disambiguator) -> int:
    """Encoded cost of one disambiguator inside a TID."""
    return _varint_len(len(dis)) + len(dis)
