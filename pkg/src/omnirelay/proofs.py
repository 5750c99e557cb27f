"""Transaction tries and inclusion proofs.

Two schemes are supported:

* ``BINARY_MERKLE``: leaves ``H(0x00 || digest)``, inner nodes
  ``H(0x01 || left || right)``, odd node duplicated at each level.
* ``MERKLE_PATRICIA``: a radix-16 trie keyed by the nibbles of the
  transaction index (big-endian, minimal length, ``0 -> 0x00``). Every child
  is referenced by hash; there is no inline-node shortcut.

Node serializations (MPT)::

    leaf      0x00 | n:u8 | n nibble bytes | value[32]
    extension 0x01 | n:u8 | n nibble bytes | child[32]     (n >= 1)
    branch    0x02 | bitmap:u16 | child[32] per set bit | has_value:u8 | value[32]?

Proofs list serialized nodes from the root down to the node holding the value.
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from .hashing import EMPTY_ROOT, HASH_LEN, keccak256

log = logging.getLogger(__name__)

LEAF, EXTENSION, BRANCH = 0, 1, 2
BM_LEAF, BM_INNER = b"\x00", b"\x01"


class SchemeTag(enum.IntEnum):
    BINARY_MERKLE = 1
    MERKLE_PATRICIA = 2


@dataclass(frozen=True)
class ProofScheme:
    tag: SchemeTag
    arity: int
    key_encoding: str = "be-minimal-index"

    @property
    def name(self) -> str:
        return self.tag.name.lower()


BINARY_MERKLE = ProofScheme(SchemeTag.BINARY_MERKLE, 2)
MERKLE_PATRICIA = ProofScheme(SchemeTag.MERKLE_PATRICIA, 16)
SCHEMES = {s.name: s for s in (BINARY_MERKLE, MERKLE_PATRICIA)}
_BY_TAG = {s.tag: s for s in SCHEMES.values()}


def scheme_by_name(name: str) -> ProofScheme:
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown proof scheme {name!r}; expected one of {sorted(SCHEMES)}") from None


class IndexOutOfRange(IndexError):
    pass


class ProofFormatError(ValueError):
    pass


class DuplicateLeaf(ValueError):
    """Binary trees need distinct leaves: a repeated digest is indistinguishable from padding."""


@dataclass(frozen=True)
class TrieRoot:
    digest: bytes


@dataclass(frozen=True)
class TransactionProof:
    tx_digest: bytes
    key: bytes
    nodes: tuple[bytes, ...]
    scheme: SchemeTag


# -- keys ---------------------------------------------------------------------


def encode_index(index: int) -> bytes:
    if index < 0:
        raise ValueError("index must be non-negative")
    return index.to_bytes(max(1, (index.bit_length() + 7) // 8), "big")


def decode_index(key: bytes) -> int | None:
    """Index for a canonical key, ``None`` for anything else."""
    if not key:
        return None
    index = int.from_bytes(key, "big")
    return index if encode_index(index) == key else None


def to_nibbles(key: bytes) -> tuple[int, ...]:
    out = []
    for b in key:
        out.append(b >> 4)
        out.append(b & 0x0F)
    return tuple(out)


def _digest_of(item) -> bytes:
    if isinstance(item, (bytes, bytearray)):
        return bytes(item)
    return item.id.digest


# -- MPT nodes ----------------------------------------------------------------


def leaf_node(path: Sequence[int], value: bytes) -> bytes:
    return bytes([LEAF, len(path), *path]) + value


def extension_node(path: Sequence[int], child: bytes) -> bytes:
    return bytes([EXTENSION, len(path), *path]) + child


def branch_node(children: dict[int, bytes], value: bytes | None) -> bytes:
    bitmap = 0
    for nib in children:
        bitmap |= 1 << nib
    body = b"".join(children[n] for n in sorted(children))
    tail = b"\x01" + value if value is not None else b"\x00"
    return bytes([BRANCH]) + struct.pack(">H", bitmap) + body + tail


@dataclass(frozen=True)
class MptNode:
    kind: int
    path: tuple[int, ...] = ()
    value: bytes | None = None
    child: bytes | None = None
    children: tuple[tuple[int, bytes], ...] = ()


def parse_mpt_node(raw: bytes) -> MptNode:
    """Strict parser; raises ProofFormatError on any non-canonical encoding."""
    if not raw:
        raise ProofFormatError("empty node")
    kind = raw[0]
    if kind in (LEAF, EXTENSION):
        if len(raw) < 2:
            raise ProofFormatError("short node")
        n = raw[1]
        if len(raw) != 2 + n + HASH_LEN:
            raise ProofFormatError("bad node length")
        path = tuple(raw[2 : 2 + n])
        if any(x > 0x0F for x in path):
            raise ProofFormatError("nibble out of range")
        tail = bytes(raw[2 + n :])
        if kind == LEAF:
            return MptNode(LEAF, path, value=tail)
        if n == 0:
            raise ProofFormatError("empty extension path")
        return MptNode(EXTENSION, path, child=tail)
    if kind == BRANCH:
        if len(raw) < 4:
            raise ProofFormatError("short branch")
        (bitmap,) = struct.unpack_from(">H", raw, 1)
        nibs = [i for i in range(16) if bitmap >> i & 1]
        pos = 3 + HASH_LEN * len(nibs)
        if len(raw) < pos + 1:
            raise ProofFormatError("short branch body")
        children = tuple((nib, bytes(raw[3 + HASH_LEN * j : 3 + HASH_LEN * (j + 1)])) for j, nib in enumerate(nibs))
        flag = raw[pos]
        if flag == 0 and len(raw) == pos + 1:
            value = None
        elif flag == 1 and len(raw) == pos + 1 + HASH_LEN:
            value = bytes(raw[pos + 1 :])
        else:
            raise ProofFormatError("bad branch value slot")
        if len(children) + (value is not None) < 2:
            raise ProofFormatError("degenerate branch")
        return MptNode(BRANCH, children=children, value=value)
    raise ProofFormatError(f"unknown node tag {kind}")


# -- builders -----------------------------------------------------------------


class TxTrie:
    """A built trie over an ordered list of transaction digests.

    Build once, then call :meth:`prove` for any index; the module-level
    helpers rebuild on every call.
    """

    def __init__(self, items: Iterable, scheme: ProofScheme = MERKLE_PATRICIA):
        self.scheme = scheme
        self.digests = [_digest_of(x) for x in items]
        if scheme.tag is SchemeTag.BINARY_MERKLE:
            if len(set(self.digests)) != len(self.digests):
                raise DuplicateLeaf("binary merkle tree over repeated digests")
            self._build_binary()
        else:
            self._build_mpt()

    @property
    def root(self) -> TrieRoot:
        return TrieRoot(self._root)

    def _build_binary(self) -> None:
        level = [keccak256(BM_LEAF + d) for d in self.digests]
        self._levels = [level]
        while len(level) > 1:
            if len(level) % 2:
                level = level + [level[-1]]
                self._levels[-1] = level
            level = [keccak256(BM_INNER + level[i] + level[i + 1]) for i in range(0, len(level), 2)]
            self._levels.append(level)
        self._root = level[0] if level else EMPTY_ROOT

    def _build_mpt(self) -> None:
        self._nodes: dict[bytes, bytes] = {}
        items = sorted((to_nibbles(encode_index(i)), d) for i, d in enumerate(self.digests))
        self._root = self._mpt(items, 0) if items else EMPTY_ROOT

    def _mpt(self, items: list[tuple[tuple[int, ...], bytes]], depth: int) -> bytes:
        if len(items) == 1:
            key, value = items[0]
            return self._store(leaf_node(key[depth:], value))
        first, last = items[0][0], items[-1][0]
        # items are sorted, so the shared prefix of first and last is shared by all
        cp = 0
        while depth + cp < min(len(first), len(last)) and first[depth + cp] == last[depth + cp]:
            cp += 1
        if cp:
            child = self._mpt(items, depth + cp)
            return self._store(extension_node(first[depth : depth + cp], child))
        value = None
        groups: dict[int, list] = {}
        for key, v in items:
            if len(key) == depth:
                value = v
            else:
                groups.setdefault(key[depth], []).append((key, v))
        children = {nib: self._mpt(group, depth + 1) for nib, group in groups.items()}
        return self._store(branch_node(children, value))

    def _store(self, raw: bytes) -> bytes:
        h = keccak256(raw)
        self._nodes[h] = raw
        return h

    def prove(self, index: int) -> TransactionProof:
        if not 0 <= index < len(self.digests):
            raise IndexOutOfRange(f"index {index} outside 0..{len(self.digests) - 1}")
        key = encode_index(index)
        if self.scheme.tag is SchemeTag.BINARY_MERKLE:
            nodes = self._prove_binary(index)
        else:
            nodes = self._prove_mpt(to_nibbles(key))
        return TransactionProof(self.digests[index], key, tuple(nodes), self.scheme.tag)

    def _prove_binary(self, index: int) -> list[bytes]:
        depth = len(self._levels) - 1
        nodes = []
        for lvl in range(depth, 0, -1):
            pos = index >> lvl
            below = self._levels[lvl - 1]
            nodes.append(BM_INNER + below[2 * pos] + below[2 * pos + 1])
        nodes.append(BM_LEAF + self.digests[index])
        return nodes

    def _prove_mpt(self, key: tuple[int, ...]) -> list[bytes]:
        nodes = []
        ref, pos = self._root, 0
        while True:
            raw = self._nodes[ref]
            nodes.append(raw)
            node = parse_mpt_node(raw)
            if node.kind == LEAF:
                return nodes
            if node.kind == EXTENSION:
                ref, pos = node.child, pos + len(node.path)
            elif pos == len(key):
                return nodes
            else:
                ref = dict(node.children)[key[pos]]
                pos += 1


def build_trie(txs: Sequence, scheme: ProofScheme = MERKLE_PATRICIA) -> TrieRoot:
    return TxTrie(txs, scheme).root


def prove_inclusion(txs: Sequence, index: int, scheme: ProofScheme = MERKLE_PATRICIA) -> TransactionProof:
    if not 0 <= index < len(txs):
        raise IndexOutOfRange(f"index {index} outside 0..{len(txs) - 1}")
    return TxTrie(txs, scheme).prove(index)


# -- verification -------------------------------------------------------------


def inclusion_failure(root: TrieRoot | bytes, proof: TransactionProof) -> str | None:
    """Reason code if ``proof`` does not verify against ``root``, else ``None``.

    Total over arbitrary inputs: malformed data yields a reason, never an exception.
    """
    try:
        digest = root.digest if isinstance(root, TrieRoot) else bytes(root)
        nodes = [bytes(n) for n in proof.nodes]
        tx_digest = bytes(proof.tx_digest)
        key = bytes(proof.key)
        tag = SchemeTag(proof.scheme)
    except (TypeError, ValueError, AttributeError):
        return "malformed"
    if len(digest) != HASH_LEN or len(tx_digest) != HASH_LEN:
        return "bad-length"
    if not nodes:
        return "no-nodes"
    index = decode_index(key)
    if index is None:
        return "non-canonical-key"
    if tag is SchemeTag.BINARY_MERKLE:
        return _binary_failure(digest, nodes, index, tx_digest)
    return _mpt_failure(digest, nodes, to_nibbles(key), tx_digest)


def _binary_failure(root: bytes, nodes: list[bytes], index: int, tx_digest: bytes) -> str | None:
    depth = len(nodes) - 1
    if index >> depth:
        return "key-beyond-depth"
    expected = root
    for k, raw in enumerate(nodes[:-1]):
        if len(raw) != 1 + 2 * HASH_LEN or raw[:1] != BM_INNER:
            return "bad-inner-node"
        if keccak256(raw) != expected:
            return "hash-mismatch"
        bit = index >> (depth - 1 - k) & 1
        if bit and raw[1 : 1 + HASH_LEN] == raw[1 + HASH_LEN :]:
            # right child equal to left only happens for the padding copy;
            # digests in a block are unique, so no real leaf lives there
            return "padding-slot"
        expected = raw[1 + HASH_LEN * bit : 1 + HASH_LEN * (bit + 1)]
    leaf = nodes[-1]
    if len(leaf) != 1 + HASH_LEN or leaf[:1] != BM_LEAF:
        return "bad-leaf-node"
    if keccak256(leaf) != expected:
        return "hash-mismatch"
    if leaf[1:] != tx_digest:
        return "value-mismatch"
    return None


def _mpt_failure(root: bytes, nodes: list[bytes], key: tuple[int, ...], tx_digest: bytes) -> str | None:
    expected, pos = root, 0
    for i, raw in enumerate(nodes):
        last = i == len(nodes) - 1
        if keccak256(raw) != expected:
            return "hash-mismatch"
        try:
            node = parse_mpt_node(raw)
        except ProofFormatError:
            return "bad-node"
        if node.kind == LEAF:
            if not last:
                return "nodes-after-leaf"
            if key[pos:] != node.path:
                return "path-mismatch"
            return None if node.value == tx_digest else "value-mismatch"
        if node.kind == EXTENSION:
            if key[pos : pos + len(node.path)] != node.path:
                return "path-mismatch"
            pos += len(node.path)
            expected = node.child
        elif pos == len(key):
            if not last:
                return "nodes-after-value"
            return None if node.value == tx_digest else "value-mismatch"
        else:
            children = dict(node.children)
            if key[pos] not in children:
                return "missing-child"
            expected = children[key[pos]]
            pos += 1
        if last:
            return "proof-ends-early"
    return "proof-ends-early"


def verify_inclusion(root: TrieRoot | bytes, proof: TransactionProof) -> bool:
    reason = inclusion_failure(root, proof)
    if reason is not None:
        log.debug("inclusion proof rejected: %s", reason)
    return reason is None


# -- wire format --------------------------------------------------------------


def serialize_proof(proof: TransactionProof) -> bytes:
    """``tag:u8 | klen:u16 | key | count:u16 | (len:u32 | node)*``"""
    out = [bytes([int(proof.scheme)]), struct.pack(">H", len(proof.key)), proof.key, struct.pack(">H", len(proof.nodes))]
    for n in proof.nodes:
        out.append(struct.pack(">I", len(n)))
        out.append(n)
    return b"".join(out)


def _value_of_last(tag: SchemeTag, nodes: Sequence[bytes]) -> bytes:
    if not nodes:
        return b""
    last = nodes[-1]
    if tag is SchemeTag.BINARY_MERKLE:
        return last[1:] if len(last) == 1 + HASH_LEN and last[:1] == BM_LEAF else b""
    try:
        return parse_mpt_node(last).value or b""
    except ProofFormatError:
        return b""


def deserialize_proof(data: bytes) -> TransactionProof:
    """Parse the wire format; the proven digest is read from the final node."""
    try:
        tag = SchemeTag(data[0])
        (klen,) = struct.unpack_from(">H", data, 1)
        pos = 3
        key = data[pos : pos + klen]
        if len(key) != klen:
            raise ProofFormatError("truncated key")
        pos += klen
        (count,) = struct.unpack_from(">H", data, pos)
        pos += 2
        nodes = []
        for _ in range(count):
            (n,) = struct.unpack_from(">I", data, pos)
            pos += 4
            node = data[pos : pos + n]
            if len(node) != n:
                raise ProofFormatError("truncated node")
            nodes.append(bytes(node))
            pos += n
    except (IndexError, struct.error, ValueError) as exc:
        raise ProofFormatError(str(exc)) from exc
    if pos != len(data):
        raise ProofFormatError("trailing bytes")
    return TransactionProof(_value_of_last(tag, nodes), bytes(key), tuple(nodes), tag)


def verify_serialized(root: TrieRoot | bytes, data: bytes) -> bool:
    try:
        proof = deserialize_proof(data)
    except ProofFormatError as exc:
        log.debug("inclusion proof rejected: unparseable (%s)", exc)
        return False
    return verify_inclusion(root, proof)


def scheme_for_tag(tag: SchemeTag) -> ProofScheme:
    return _BY_TAG[SchemeTag(tag)]
