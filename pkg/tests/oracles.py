"""Reference implementations used only by the tests.

They share no code with the package: hashing goes straight to pycryptodome,
node layouts are re-encoded here, and the Patricia trie is built by
one-key-at-a-time insertion in a caller-chosen order instead of the
package's sorted recursive construction.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field

from Crypto.Hash import keccak


def H(data: bytes) -> bytes:
    return keccak.new(digest_bits=256, data=data).digest()


EMPTY = H(b"")


def index_key(i: int) -> bytes:
    n = 1
    while i >= 256**n:
        n += 1
    return i.to_bytes(n, "big")


def nibbles(b: bytes) -> list[int]:
    return [x for byte in b for x in divmod(byte, 16)]


# -- binary merkle ---------------------------------------------------------------


def binary_root(digests: list[bytes]) -> bytes:
    if not digests:
        return EMPTY
    level = [H(b"\x00" + d) for d in digests]
    while len(level) != 1:
        if len(level) & 1:
            level.append(level[-1])
        level = [H(b"\x01" + a + b) for a, b in zip(level[0::2], level[1::2])]
    return level[0]


# -- patricia trie by incremental insertion ---------------------------------------


@dataclass
class Leaf:
    path: list[int]
    value: bytes


@dataclass
class Ext:
    path: list[int]
    child: object


@dataclass
class Branch:
    children: dict[int, object] = field(default_factory=dict)
    value: bytes | None = None


def _common(a: list[int], b: list[int]) -> int:
    n = 0
    while n < len(a) and n < len(b) and a[n] == b[n]:
        n += 1
    return n


def _attach(branch: Branch, path: list[int], make):
    if not path:
        return make(None)
    branch.children[path[0]] = make(path[1:])
    return None


def insert(node, path: list[int], value: bytes):
    if node is None:
        return Leaf(path, value)
    if isinstance(node, Branch):
        if not path:
            node.value = value
        else:
            node.children[path[0]] = insert(node.children.get(path[0]), path[1:], value)
        return node
    if isinstance(node, Leaf):
        if node.path == path:
            node.value = value
            return node
        cp = _common(node.path, path)
        b = Branch()
        old_rest, new_rest = node.path[cp:], path[cp:]
        if old_rest:
            b.children[old_rest[0]] = Leaf(old_rest[1:], node.value)
        else:
            b.value = node.value
        if new_rest:
            b.children[new_rest[0]] = Leaf(new_rest[1:], value)
        else:
            b.value = value
        return Ext(path[:cp], b) if cp else b
    # extension
    cp = _common(node.path, path)
    if cp == len(node.path):
        node.child = insert(node.child, path[cp:], value)
        return node
    b = Branch()
    rest = node.path[cp + 1 :]
    b.children[node.path[cp]] = Ext(rest, node.child) if rest else node.child
    b = insert(b, path[cp:], value)
    return Ext(path[:cp], b) if cp else b


def encode(node, sink: dict[bytes, bytes]) -> bytes:
    """Serialize ``node`` bottom-up, record every node in ``sink``, return its hash."""
    if isinstance(node, Leaf):
        raw = bytes([0, len(node.path)] + node.path) + node.value
    elif isinstance(node, Ext):
        raw = bytes([1, len(node.path)] + node.path) + encode(node.child, sink)
    else:
        keys = sorted(node.children)
        bitmap = sum(1 << k for k in keys)
        raw = b"\x02" + struct.pack(">H", bitmap) + b"".join(encode(node.children[k], sink) for k in keys)
        raw += b"\x00" if node.value is None else b"\x01" + node.value
    h = H(raw)
    sink[h] = raw
    return h


def patricia(digests: list[bytes], order_seed: int | None = None) -> tuple[bytes, dict[bytes, bytes]]:
    """Root and node table; keys are inserted in a shuffled order when a seed is given."""
    order = list(range(len(digests)))
    if order_seed is not None:
        random.Random(order_seed).shuffle(order)
    root = None
    for i in order:
        root = insert(root, nibbles(index_key(i)), digests[i])
    if root is None:
        return EMPTY, {}
    sink: dict[bytes, bytes] = {}
    return encode(root, sink), sink


# -- chains ------------------------------------------------------------------


def canonical_hashes(chain, head_hash: bytes) -> list[bytes]:
    """Walk parent links from ``head_hash`` back to genesis, genesis first."""
    out = []
    block = chain.block_by_hash(head_hash)
    while block is not None:
        out.append(block.hash)
        if block.height == 0:
            break
        block = chain.block_by_hash(block.header.parent_hash)
    return out[::-1]


def packet_wire(chain: int, address: bytes, payload: bytes) -> bytes:
    return chain.to_bytes(2, "big") + address + payload
