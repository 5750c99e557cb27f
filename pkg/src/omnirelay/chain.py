"""Deterministic simulated blockchains.

Blocks are produced on demand (``mine_block``), reorgs are scripted
(``inject_reorg``) and finality is probabilistic: a block is treated as
stable once it has ``confirmation_depth`` confirmations, counting itself.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .hashing import ZERO_HASH, keccak256, length_prefixed, split_length_prefixed, u16, u64
from .packet import ADDRESS_LEN, Packet, RelayerArgs, check_address, check_chain_id, decode_packet, encode_packet
from .proofs import MERKLE_PATRICIA, ProofScheme, build_trie

EVM_CONFIRMATIONS = 15


class ChainError(Exception):
    pass


class DuplicateTransaction(ChainError):
    pass


class UnknownTransaction(ChainError, KeyError):
    pass


class InvalidFork(ChainError):
    pass


class HeightUnavailable(ChainError, IndexError):
    pass


class TxKind(enum.IntEnum):
    PLAIN = 0
    APP_CALL = 1


@dataclass(frozen=True)
class TxId:
    chain: int
    digest: bytes
    block_height: int | None = None
    index_in_block: int | None = None

    @property
    def key(self) -> tuple[int, bytes]:
        """Identity that survives re-inclusion at a different height."""
        return (self.chain, self.digest)


@dataclass(frozen=True)
class Transaction:
    chain: int
    sender: bytes
    kind: TxKind = TxKind.PLAIN
    embedded_packet: Packet | None = None
    relayer_args: RelayerArgs = field(default_factory=RelayerArgs)
    nonce: int = 0
    id: TxId | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        check_chain_id(self.chain)
        object.__setattr__(self, "sender", check_address(self.sender))
        if (self.kind is TxKind.APP_CALL) != (self.embedded_packet is not None):
            raise ValueError("an embedded packet is required for AppCall and forbidden otherwise")
        if self.id is None:
            object.__setattr__(self, "id", TxId(self.chain, keccak256(self.encode())))

    def encode(self) -> bytes:
        pkt = encode_packet(self.embedded_packet) if self.embedded_packet is not None else b""
        return length_prefixed(
            u16(self.chain), self.sender, bytes([self.kind]), pkt, self.relayer_args.encode(), u64(self.nonce)
        )

    @property
    def digest(self) -> bytes:
        return self.id.digest

    def at(self, height: int | None, index: int | None) -> Transaction:
        return replace(self, id=replace(self.id, block_height=height, index_in_block=index))


def decode_transaction(data: bytes) -> Transaction:
    """Inverse of ``Transaction.encode``; raises ValueError on malformed input."""
    fields = split_length_prefixed(data)
    if len(fields) != 6:
        raise ValueError("transaction encoding needs 6 fields")
    chain_b, sender, kind_b, pkt, args, nonce_b = fields
    if len(chain_b) != 2 or len(sender) != ADDRESS_LEN or len(kind_b) != 1 or len(nonce_b) != 8:
        raise ValueError("bad field width")
    kind = TxKind(kind_b[0])
    if kind is TxKind.PLAIN and pkt:
        raise ValueError("plain transaction carries a packet")
    tx = Transaction(
        chain=struct.unpack(">H", chain_b)[0],
        sender=sender,
        kind=kind,
        embedded_packet=decode_packet(pkt) if kind is TxKind.APP_CALL else None,
        relayer_args=RelayerArgs.decode(args),
        nonce=struct.unpack(">Q", nonce_b)[0],
    )
    if tx.encode() != data:
        raise ValueError("non-canonical transaction encoding")
    return tx


def header_hash(chain: int, height: int, parent_hash: bytes, tx_root: bytes) -> bytes:
    return keccak256(u16(chain) + u64(height) + parent_hash + tx_root)


@dataclass(frozen=True)
class BlockHeader:
    chain: int
    height: int
    parent_hash: bytes
    tx_root: bytes
    header_hash: bytes = b""

    def __post_init__(self) -> None:
        if not self.header_hash:
            object.__setattr__(self, "header_hash", header_hash(self.chain, self.height, self.parent_hash, self.tx_root))

    def is_consistent(self) -> bool:
        return self.header_hash == header_hash(self.chain, self.height, self.parent_hash, self.tx_root)


@dataclass(frozen=True)
class BlockId:
    """Names one block: ``cur_blk_id`` plus the hash, so it stays unambiguous across reorgs."""

    chain: int
    height: int
    hash: bytes


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[Transaction, ...] = ()

    @property
    def hash(self) -> bytes:
        return self.header.header_hash

    @property
    def height(self) -> int:
        return self.header.height

    @property
    def id(self) -> BlockId:
        return BlockId(self.header.chain, self.header.height, self.header.header_hash)


def make_block(chain: int, height: int, parent_hash: bytes, txs: Iterable[Transaction], scheme: ProofScheme) -> Block:
    placed = tuple(tx.at(height, i) for i, tx in enumerate(txs))
    root = build_trie(placed, scheme).digest
    return Block(BlockHeader(chain, height, parent_hash, root), placed)


class ChainState:
    def __init__(self, chain_id: int, confirmation_depth: int = EVM_CONFIRMATIONS, scheme: ProofScheme = MERKLE_PATRICIA):
        if confirmation_depth < 1:
            raise ValueError("confirmation_depth must be at least 1")
        self.chain_id = check_chain_id(chain_id)
        self.confirmation_depth = confirmation_depth
        self.scheme = scheme
        genesis = make_block(chain_id, 0, ZERO_HASH, (), scheme)
        self.canonical: list[Block] = [genesis]
        self.orphaned: list[Block] = []
        self.mempool: list[Transaction] = []
        self.evicted: list[Transaction] = []
        self._seen: dict[bytes, Transaction] = {}
        self._location: dict[bytes, tuple[int, int]] = {}
        self._by_hash: dict[bytes, Block] = {genesis.hash: genesis}

    # -- reads ----------------------------------------------------------------

    @property
    def head(self) -> BlockHeader:
        return self.canonical[-1].header

    @property
    def height(self) -> int:
        return len(self.canonical) - 1

    def read_header(self, height: int) -> BlockHeader:
        if not 0 <= height <= self.height:
            raise HeightUnavailable(f"chain {self.chain_id} has no canonical block at height {height}")
        return self.canonical[height].header

    def block_at(self, height: int) -> Block:
        self.read_header(height)
        return self.canonical[height]

    def block_by_hash(self, h: bytes) -> Block | None:
        return self._by_hash.get(h)

    def is_canonical(self, h: bytes) -> bool:
        block = self._by_hash.get(h)
        return block is not None and block.height <= self.height and self.canonical[block.height].hash == h

    def transaction(self, digest: bytes) -> Transaction | None:
        return self._seen.get(digest)

    def tx_id(self, digest: bytes) -> TxId | None:
        """Completed TxId if the transaction is in a canonical block."""
        loc = self._location.get(digest)
        if loc is None:
            return None
        return TxId(self.chain_id, digest, *loc)

    def confirmations_of(self, t: TxId) -> int:
        if t.digest not in self._seen:
            raise UnknownTransaction(t.digest.hex())
        loc = self._location.get(t.digest)
        if loc is None:
            return 0
        return self.height - loc[0] + 1

    def block_confirmations(self, h: bytes) -> int:
        if not self.is_canonical(h):
            return 0
        return self.height - self._by_hash[h].height + 1

    # -- writes ---------------------------------------------------------------

    def submit_transaction(self, tx: Transaction) -> TxId:
        if tx.chain != self.chain_id:
            raise ValueError(f"transaction for chain {tx.chain} submitted to chain {self.chain_id}")
        if tx.digest in self._seen:
            raise DuplicateTransaction(tx.digest.hex())
        tx = tx.at(None, None)
        self._seen[tx.digest] = tx
        self.mempool.append(tx)
        return tx.id

    def revert_transaction(self, digest: bytes) -> None:
        """Drop a still-pending transaction whose execution failed."""
        self.mempool = [tx for tx in self.mempool if tx.digest != digest]
        self._seen.pop(digest, None)

    def mine_block(self) -> BlockHeader:
        block = make_block(self.chain_id, self.height + 1, self.head.header_hash, self.mempool, self.scheme)
        self.mempool = []
        self._append(block)
        return block.header

    def build_branch(self, fork_height: int, tx_lists: Sequence[Sequence[Transaction]]) -> list[Block]:
        """Blocks that fork off the canonical block at ``fork_height - 1``."""
        parent = self.read_header(fork_height - 1).header_hash
        out = []
        for offset, txs in enumerate(tx_lists):
            block = make_block(self.chain_id, fork_height + offset, parent, txs, self.scheme)
            out.append(block)
            parent = block.hash
        return out

    def inject_reorg(self, fork_height: int, replacement: Sequence[Block], requeue: bool = True) -> list[Block]:
        """Replace the canonical suffix from ``fork_height`` with ``replacement``.

        Displaced transactions not present in the replacement go back to the
        mempool, or are evicted for good when ``requeue`` is false (a
        double-spend in the winning branch). Returns the newly canonical blocks.
        """
        if not 1 <= fork_height <= self.height:
            raise InvalidFork(f"fork height {fork_height} outside 1..{self.height}")
        displaced = self.canonical[fork_height:]
        if len(replacement) <= len(displaced):
            raise InvalidFork("replacement branch must be strictly longer than the displaced suffix")
        parent = self.canonical[fork_height - 1].hash
        for offset, block in enumerate(replacement):
            hdr = block.header
            if hdr.chain != self.chain_id or hdr.height != fork_height + offset:
                raise InvalidFork("replacement block has wrong chain or height")
            if hdr.parent_hash != parent or not hdr.is_consistent():
                raise InvalidFork(f"replacement block at height {hdr.height} does not link")
            if build_trie(block.transactions, self.scheme).digest != hdr.tx_root:
                raise InvalidFork(f"replacement block at height {hdr.height} has a bad tx_root")
            parent = hdr.header_hash

        replacement_hashes = {b.hash for b in replacement}
        displaced_hashes = {b.hash for b in displaced}
        del self.canonical[fork_height:]
        for block in displaced:
            for tx in block.transactions:
                self._location.pop(tx.digest, None)
        self.orphaned = [b for b in self.orphaned if b.hash not in replacement_hashes]
        self.orphaned.extend(b for b in displaced if b.hash not in replacement_hashes)

        kept: set[bytes] = set()
        for block in replacement:
            kept.update(tx.digest for tx in block.transactions)
            self._append(block)
        fresh = [b for b in replacement if b.hash not in displaced_hashes]

        self.mempool = [tx for tx in self.mempool if tx.digest not in kept]
        lost = [tx.at(None, None) for b in displaced for tx in b.transactions if tx.digest not in kept]
        if requeue:
            self.mempool = lost + self.mempool
        else:
            self.evicted.extend(lost)
        return fresh

    def _append(self, block: Block) -> None:
        self.canonical.append(block)
        self._by_hash.setdefault(block.hash, block)
        for tx in block.transactions:
            self._seen.setdefault(tx.digest, tx.at(None, None))
            self._location[tx.digest] = (block.height, tx.id.index_in_block)

    # -- integrity checks used by tests and the auditor --------------------------

    def check_integrity(self) -> list[str]:
        problems = []
        for i, block in enumerate(self.canonical):
            if block.height != i:
                problems.append(f"height {i}: stored height {block.height}")
            if i and block.header.parent_hash != self.canonical[i - 1].hash:
                problems.append(f"height {i}: parent link broken")
            if build_trie(block.transactions, self.scheme).digest != block.header.tx_root:
                problems.append(f"height {i}: tx_root mismatch")
        return problems
