"""Simulated distributed ledger hosting the registry contract.

The registry keeps append-only lists of web-of-trust edges, transformation
edges, and revocation entries, plus a DID-to-key map. A single deterministic
block producer appends one block per submitted batch; every node folds the
same block log independently, so any two nodes with the same log hold
byte-identical state. Agreement on ordering is all the system needs, so
there is no consensus engine to configure.

Payload bytes are stored opaque under the ``open`` access mode; signature
validation is the reader's job. The restricted modes decode just enough of
a payload to check its origin vertex.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .canonical import FormatError, canonical_bytes, decode_canonical, require_keys, sha256
from .identity import Did, did_from_public_key, parse_did

OPEN = "open"
SELF_ORIGIN = "self-origin-only"
MEMBERS_ONLY = "members-only"
ACCESS_MODES = (OPEN, SELF_ORIGIN, MEMBERS_ONLY)

GENESIS_CALLER = "did:wot:" + "0" * 64
GENESIS_PARENT = bytes(32)
DEFAULT_NODE_COUNT = 3
DEFAULT_TICK = 13  # seconds per block, after mainnet block time

LOG_MAGIC = b"WOTL"
LOG_VERSION = 1

# Which payload field names the origin vertex, per call kind.
_ORIGIN_FIELD = {"addWot": "certifier", "addTransform": "publisher", "addRevocation": "issuer"}
_LIST_FIELD = {"addWot": "edge", "addTransform": "edge", "addRevocation": "entry"}


class LedgerError(Exception):
    """Infrastructure failure, as opposed to a rejected transaction."""


class LedgerIntegrityError(LedgerError):
    """A block failed digest or chain verification during replay."""


@dataclass(frozen=True)
class RegistryAddress:
    """Opaque 20-byte identifier of the deployed registry contract."""

    value: bytes

    def __post_init__(self) -> None:
        if len(self.value) != 20:
            raise ValueError("registry address must be 20 bytes")

    @property
    def hex(self) -> str:
        return self.value.hex()


@dataclass(frozen=True)
class Transaction:
    caller: str
    call: dict
    nonce: int

    def to_wire(self) -> dict:
        return {"caller": self.caller, "call": self.call, "nonce": self.nonce}

    @classmethod
    def from_wire(cls, obj: Any) -> "Transaction":
        require_keys(obj, {"caller", "call", "nonce"}, "transaction")
        if not isinstance(obj["call"], dict) or not isinstance(obj["nonce"], int):
            raise FormatError("transaction: bad field types")
        return cls(caller=obj["caller"], call=obj["call"], nonce=obj["nonce"])


def add_wot_call(edge_bytes: bytes) -> dict:
    return {"kind": "addWot", "edge": edge_bytes.hex()}


def add_transform_call(edge_bytes: bytes) -> dict:
    return {"kind": "addTransform", "edge": edge_bytes.hex()}


def add_revocation_call(entry_bytes: bytes) -> dict:
    return {"kind": "addRevocation", "entry": entry_bytes.hex()}


def register_did_call(did: Did, public_key: bytes) -> dict:
    return {"kind": "registerDid", "did": str(did), "publicKey": public_key.hex()}


@dataclass(frozen=True)
class Block:
    height: int
    time: int
    parent_digest: bytes
    txs: tuple[Transaction, ...]
    digest: bytes

    @classmethod
    def produce(
        cls, height: int, time: int, parent_digest: bytes, txs: Sequence[Transaction]
    ) -> "Block":
        digest = sha256(_block_body_bytes(height, time, parent_digest, txs))
        return cls(height, time, parent_digest, tuple(txs), digest)

    def encode(self) -> bytes:
        body = _block_body(self.height, self.time, self.parent_digest, self.txs)
        body["digest"] = self.digest.hex()
        return canonical_bytes(body)


def _block_body(height: int, time: int, parent_digest: bytes, txs: Sequence[Transaction]) -> dict:
    return {
        "height": height,
        "time": time,
        "parentDigest": parent_digest.hex(),
        "txs": [tx.to_wire() for tx in txs],
    }


def _block_body_bytes(height: int, time: int, parent_digest: bytes, txs: Sequence[Transaction]) -> bytes:
    return canonical_bytes(_block_body(height, time, parent_digest, txs))


def decode_block(raw: bytes) -> Block:
    """Parse one encoded block, verifying its digest against its contents."""
    try:
        obj = decode_canonical(raw)
    except FormatError as exc:
        raise LedgerIntegrityError(f"undecodable block: {exc}") from exc
    try:
        require_keys(obj, {"height", "time", "parentDigest", "txs", "digest"}, "block")
        height, time = obj["height"], obj["time"]
        if not isinstance(height, int) or not isinstance(time, int):
            raise FormatError("block: height/time must be integers")
        parent = bytes.fromhex(obj["parentDigest"])
        digest = bytes.fromhex(obj["digest"])
        txs = tuple(Transaction.from_wire(tx) for tx in obj["txs"])
    except (FormatError, ValueError) as exc:
        raise LedgerIntegrityError(f"malformed block: {exc}") from exc
    if sha256(_block_body_bytes(height, time, parent, txs)) != digest:
        raise LedgerIntegrityError(f"block {height}: digest mismatch")
    return Block(height, time, parent, txs, digest)


@dataclass
class RegistryState:
    """Append-only registry contents; a pure fold over the block log."""

    wot_edges: list[bytes] = field(default_factory=list)
    transform_edges: list[bytes] = field(default_factory=list)
    revocations: list[bytes] = field(default_factory=list)
    did_bindings: dict[str, bytes] = field(default_factory=dict)

    def apply(self, tx: Transaction) -> None:
        kind = tx.call.get("kind")
        if kind == "addWot":
            self.wot_edges.append(bytes.fromhex(tx.call["edge"]))
        elif kind == "addTransform":
            self.transform_edges.append(bytes.fromhex(tx.call["edge"]))
        elif kind == "addRevocation":
            self.revocations.append(bytes.fromhex(tx.call["entry"]))
        elif kind == "registerDid":
            self.did_bindings.setdefault(tx.call["did"], bytes.fromhex(tx.call["publicKey"]))
        # genesis carries deploy configuration only; no registry effect

    def digest(self) -> bytes:
        return sha256(
            canonical_bytes(
                {
                    "didBindings": [[did, key.hex()] for did, key in self.did_bindings.items()],
                    "revocations": [entry.hex() for entry in self.revocations],
                    "transformEdges": [edge.hex() for edge in self.transform_edges],
                    "wotEdges": [edge.hex() for edge in self.wot_edges],
                }
            )
        )


CensorFn = Callable[[int, Transaction], bool]


class LedgerNode:
    """One replica: folds the block log into registry state.

    A node configured with a censor predicate silently drops matching
    transactions while folding; attestation across nodes exposes this.
    """

    def __init__(self, censor: CensorFn | None = None):
        self.state = RegistryState()
        self.censor = censor
        self.unreachable = False
        self._height = -1

    def apply_block(self, block: Block) -> None:
        for tx in block.txs:
            if self.censor is not None and self.censor(block.height, tx):
                continue
            self.state.apply(tx)
        self._height = block.height

    def refold(self, blocks: Iterable[Block]) -> None:
        self.state = RegistryState()
        self._height = -1
        for block in blocks:
            self.apply_block(block)

    def state_digest(self) -> bytes:
        if self.unreachable:
            raise LedgerError("node unreachable")
        return self.state.digest()


@dataclass(frozen=True)
class Receipt:
    accepted: bool
    block_height: int | None = None
    reason: str | None = None


class Ledger:
    """Handle over the simulated ledger: block producer plus replica nodes.

    Reads are served from node 0 and never advance the chain. Writes are
    serialized through :meth:`submit` / :meth:`submit_batch`.
    """

    def __init__(
        self,
        access_mode: str = OPEN,
        members: Iterable[Did | str] = (),
        node_count: int = DEFAULT_NODE_COUNT,
        tick: int = DEFAULT_TICK,
        genesis_time: int = 0,
    ):
        if access_mode not in ACCESS_MODES:
            raise ValueError(f"access mode must be one of {ACCESS_MODES}")
        self.access_mode = access_mode
        self.members = tuple(str(m) for m in members)
        self.tick = tick
        self.genesis_time = genesis_time
        self.nodes = [LedgerNode() for _ in range(node_count)]
        self.blocks: list[Block] = []
        self._next_nonce: dict[str, int] = {}
        self._participants: set[str] = set(self.members)
        genesis_call = {
            "kind": "genesis",
            "accessMode": access_mode,
            "members": sorted(self.members),
            "nodes": node_count,
            "tick": tick,
            "genesisTime": genesis_time,
        }
        self._append_block([Transaction(GENESIS_CALLER, genesis_call, 0)])
        self.address = RegistryAddress(self.blocks[0].digest[:20])

    # -- chain production ----------------------------------------------------

    def _append_block(self, txs: Sequence[Transaction]) -> Block:
        height = len(self.blocks)
        parent = self.blocks[-1].digest if self.blocks else GENESIS_PARENT
        block = Block.produce(height, self.genesis_time + self.tick * height, parent, txs)
        self.blocks.append(block)
        for node in self.nodes:
            node.apply_block(block)
        return block

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    # -- validation ----------------------------------------------------------

    def _payload_origin(self, call: dict) -> str:
        kind = call["kind"]
        raw = bytes.fromhex(call[_LIST_FIELD[kind]])
        obj = decode_canonical(raw)
        if not isinstance(obj, dict) or not isinstance(obj.get(_ORIGIN_FIELD[kind]), str):
            raise FormatError(f"{kind} payload has no {_ORIGIN_FIELD[kind]} field")
        return obj[_ORIGIN_FIELD[kind]]

    def _validate(self, tx: Transaction, pending_nonces: dict[str, int],
                  pending_participants: set[str], pending_bindings: dict[str, bytes]) -> str | None:
        """Return a rejection reason, or None if the transaction is acceptable."""
        expected = pending_nonces.get(tx.caller, 0)
        if tx.nonce != expected:
            return f"nonce-mismatch: expected {expected}, got {tx.nonce}"
        kind = tx.call.get("kind")
        try:
            parse_did(tx.caller)
        except Exception:
            return "malformed-caller"
        if kind == "registerDid":
            try:
                did = parse_did(tx.call["did"])
                public_key = bytes.fromhex(tx.call["publicKey"])
                if did_from_public_key(public_key) != did:
                    return "did-key-mismatch"
            except Exception:
                return "malformed-registration"
            bound = pending_bindings.get(str(did), self.nodes[0].state.did_bindings.get(str(did)))
            if bound is not None and bound != public_key:
                return "did-conflict"
            return None
        if kind not in _LIST_FIELD:
            return f"unknown-call-kind: {kind!r}"
        try:
            bytes.fromhex(tx.call[_LIST_FIELD[kind]])
        except (KeyError, TypeError, ValueError):
            return "malformed-payload"
        if self.access_mode == OPEN:
            return None
        try:
            origin = self._payload_origin(tx.call)
        except FormatError:
            return "malformed-edge"
        if self.access_mode == SELF_ORIGIN or kind == "addRevocation":
            # Revocation entries are origin-restricted in both non-open modes:
            # only the stated issuer may publish them.
            if origin != tx.caller:
                return "not-own-vertex"
        if self.access_mode == MEMBERS_ONLY and kind in ("addWot", "addTransform"):
            if origin not in self._participants and origin not in pending_participants:
                return "not-a-member"
        return None

    # -- writes ----------------------------------------------------------------

    def submit(self, tx: Transaction) -> Receipt:
        return self.submit_batch([tx])[0]

    def submit_batch(self, txs: Sequence[Transaction]) -> list[Receipt]:
        """Validate a batch in order and commit the accepted ones in one block."""
        pending_nonces = dict(self._next_nonce)
        pending_participants: set[str] = set()
        pending_bindings: dict[str, bytes] = {}
        accepted: list[Transaction] = []
        results: list[tuple[bool, str | None]] = []
        for tx in txs:
            reason = self._validate(tx, pending_nonces, pending_participants, pending_bindings)
            if reason is not None:
                results.append((False, reason))
                continue
            pending_nonces[tx.caller] = tx.nonce + 1
            kind = tx.call["kind"]
            if kind == "registerDid":
                pending_bindings[tx.call["did"]] = bytes.fromhex(tx.call["publicKey"])
            elif kind == "addWot":
                obj = decode_canonical(bytes.fromhex(tx.call["edge"])) if self.access_mode != OPEN else None
                if obj is not None:
                    pending_participants.add(obj.get("certifier", ""))
                    pending_participants.add(obj.get("issuer", ""))
            accepted.append(tx)
            results.append((True, None))
        if accepted:
            block = self._append_block(accepted)
            height: int | None = block.height
            self._next_nonce.update(pending_nonces)
            self._participants.update(pending_participants)
        else:
            height = None
        return [
            Receipt(ok, height if ok else None, reason) for ok, reason in results
        ]

    def next_nonce(self, caller: Did | str) -> int:
        return self._next_nonce.get(str(caller), 0)

    # -- registry reads (free; served from node 0) ----------------------------

    def get_wot(self) -> list[bytes]:
        return list(self.nodes[0].state.wot_edges)

    def get_transform(self) -> list[bytes]:
        return list(self.nodes[0].state.transform_edges)

    def get_revocations(self) -> list[bytes]:
        return list(self.nodes[0].state.revocations)

    def resolve_did(self, did: Did | str) -> bytes | None:
        return self.nodes[0].state.did_bindings.get(str(did))

    def register_did(self, did: Did, public_key: bytes) -> Receipt:
        tx = Transaction(str(did), register_did_call(did, public_key), self.next_nonce(did))
        return self.submit(tx)

    # -- test/attack harness ---------------------------------------------------

    def set_node_censor(self, index: int, censor: CensorFn | None) -> None:
        """Configure a node to drop matching transactions and refold its state."""
        node = self.nodes[index]
        node.censor = censor
        node.refold(self.blocks)

    # -- persistence -----------------------------------------------------------

    def save(self, path: Path | str) -> None:
        chunks = [LOG_MAGIC, bytes([LOG_VERSION])]
        for block in self.blocks:
            encoded = block.encode()
            chunks.append(struct.pack(">I", len(encoded)))
            chunks.append(encoded)
        Path(path).write_bytes(b"".join(chunks))

    @classmethod
    def load(cls, path: Path | str) -> "Ledger":
        blocks = read_block_log(path)
        verify_chain(blocks)
        genesis = blocks[0].txs[0].call
        if genesis.get("kind") != "genesis":
            raise LedgerIntegrityError("block log has no genesis configuration")
        ledger = cls(
            access_mode=genesis["accessMode"],
            members=genesis["members"],
            node_count=genesis["nodes"],
            tick=genesis["tick"],
            genesis_time=genesis["genesisTime"],
        )
        if ledger.blocks[0].digest != blocks[0].digest:
            raise LedgerIntegrityError("genesis block does not match its configuration")
        for block in blocks[1:]:
            ledger.blocks.append(block)
            for node in ledger.nodes:
                node.apply_block(block)
            for tx in block.txs:
                ledger._next_nonce[tx.caller] = tx.nonce + 1
                if tx.call.get("kind") == "addWot":
                    try:
                        obj = decode_canonical(bytes.fromhex(tx.call["edge"]))
                        ledger._participants.add(obj.get("certifier", ""))
                        ledger._participants.add(obj.get("issuer", ""))
                    except FormatError:
                        pass
        return ledger


def read_block_log(path: Path | str) -> list[Block]:
    raw = Path(path).read_bytes()
    if raw[:4] != LOG_MAGIC:
        raise LedgerIntegrityError("not a block log: bad magic")
    if len(raw) < 5 or raw[4] != LOG_VERSION:
        raise LedgerIntegrityError("unsupported block log version")
    blocks = []
    offset = 5
    while offset < len(raw):
        if offset + 4 > len(raw):
            raise LedgerIntegrityError("truncated block log")
        (length,) = struct.unpack(">I", raw[offset:offset + 4])
        offset += 4
        if offset + length > len(raw):
            raise LedgerIntegrityError("truncated block log")
        blocks.append(decode_block(raw[offset:offset + length]))
        offset += length
    return blocks


def verify_chain(blocks: Sequence[Block]) -> None:
    """Check digests, parent links, heights, and time monotonicity."""
    previous: Block | None = None
    for i, block in enumerate(blocks):
        recomputed = sha256(_block_body_bytes(block.height, block.time, block.parent_digest, block.txs))
        if recomputed != block.digest:
            raise LedgerIntegrityError(f"block {block.height}: digest mismatch")
        if block.height != i:
            raise LedgerIntegrityError(f"block {i}: unexpected height {block.height}")
        expected_parent = previous.digest if previous is not None else GENESIS_PARENT
        if block.parent_digest != expected_parent:
            raise LedgerIntegrityError(f"block {block.height}: broken parent link")
        if previous is not None and block.time < previous.time:
            raise LedgerIntegrityError(f"block {block.height}: time went backwards")
        previous = block


class ListenerNode:
    """Read-only replica inside the verifier's trust boundary.

    Replays and verifies every block, then keeps only the registry state;
    block bodies are discarded. Reads are served locally without contacting
    the remote nodes the listener synced from.
    """

    def __init__(self, state: RegistryState, height: int, head_digest: bytes):
        self.state = state
        self.height = height
        self.head_digest = head_digest
        self.unreachable = False

    @classmethod
    def from_blocks(cls, blocks: Sequence[Block]) -> "ListenerNode":
        verify_chain(blocks)
        if not blocks:
            raise LedgerIntegrityError("empty block log")
        state = RegistryState()
        for block in blocks:
            for tx in block.txs:
                state.apply(tx)
        return cls(state, blocks[-1].height, blocks[-1].digest)

    @classmethod
    def from_encoded(cls, encoded_blocks: Iterable[bytes]) -> "ListenerNode":
        return cls.from_blocks([decode_block(raw) for raw in encoded_blocks])

    def state_digest(self) -> bytes:
        if self.unreachable:
            raise LedgerError("node unreachable")
        return self.state.digest()


def spawn_listener(ledger: Ledger) -> ListenerNode:
    """Replay the ledger's blocks through full verification, as over the wire."""
    return ListenerNode.from_encoded(block.encode() for block in ledger.blocks)


def listener_state(listener: ListenerNode) -> RegistryState:
    return listener.state


@dataclass(frozen=True)
class Attestation:
    digests: list[str | None]
    consistent: bool
    errors: dict[int, str]

    def to_json(self) -> dict:
        return {
            "digests": self.digests,
            "consistent": self.consistent,
            "errors": {str(k): v for k, v in self.errors.items()},
        }


def attest_digest(nodes: Sequence[LedgerNode | ListenerNode]) -> Attestation:
    """Compare state digests across nodes to detect censorship.

    ``consistent`` is true iff every reachable node reports the same digest;
    unreachable nodes are reported per-node and excluded from the comparison.
    With a single node the answer is trivially true and means nothing.
    """
    if not nodes:
        raise ValueError("need at least one node to attest")
    digests: list[str | None] = []
    errors: dict[int, str] = {}
    for i, node in enumerate(nodes):
        try:
            digests.append(node.state_digest().hex())
        except LedgerError as exc:
            digests.append(None)
            errors[i] = str(exc)
    reachable = [d for d in digests if d is not None]
    consistent = len(reachable) > 0 and len(set(reachable)) == 1
    return Attestation(digests=digests, consistent=consistent, errors=errors)
