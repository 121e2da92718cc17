"""Web-of-trust data model: signed trust statements, supersession, trust
paths, and legitimacy scoring.

The graph is a directed, edge-labeled multigraph over DIDs. An edge states
how legitimate the certifier considers the issuer (``legitimacy``) and how
much it trusts the issuer's own published statements (``confidence``), for
one context and one URI. Newer statements between the same vertices with
the same context and URI supersede older ones at query time; the registry
itself never deletes anything.

Levels are integer thousandths in [-1000, 1000] so canonical signing and
min/max arithmetic stay exact.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .canonical import FormatError, canonical_bytes, decode_canonical, require_keys
from .credential import Credential, VerifyOutcome, check_revocation, verify_credential_signature
from .identity import Did, KeyPair, parse_did, sign, verify

LEVEL_MIN = -1000
LEVEL_MAX = 1000
FULL_TRUST = LEVEL_MAX

CONTEXT_CREDENTIAL = "credential"
CONTEXT_TRANSFORMATION = "transformation"
CONTEXTS = (CONTEXT_CREDENTIAL, CONTEXT_TRANSFORMATION)

WILDCARD_URI = "*"

_WIRE_KEYS = {
    "certifier", "issuer", "legitimacy", "confidence",
    "context", "uri", "timestamp", "signature",
}


class TrustStatementError(ValueError):
    """Out-of-range levels, self-edges, or malformed statement fields."""


@dataclass(frozen=True)
class TrustStatement:
    certifier: Did
    issuer: Did
    legitimacy: int
    confidence: int
    context: str
    uri: str
    timestamp: int
    signature: bytes

    def _fields(self) -> dict:
        return {
            "certifier": str(self.certifier),
            "issuer": str(self.issuer),
            "legitimacy": self.legitimacy,
            "confidence": self.confidence,
            "context": self.context,
            "uri": self.uri,
            "timestamp": self.timestamp,
        }

    def signed_bytes(self) -> bytes:
        return canonical_bytes(self._fields())

    def to_bytes(self) -> bytes:
        wire = self._fields()
        wire["signature"] = self.signature.hex()
        return canonical_bytes(wire)

    @property
    def supersession_key(self) -> tuple[str, str, str, str]:
        return (str(self.certifier), str(self.issuer), self.context, self.uri)

    def matches(self, context: str, uri: str) -> bool:
        return self.context == context and (self.uri == uri or self.uri == WILDCARD_URI)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "TrustStatement":
        obj = decode_canonical(raw)
        require_keys(obj, _WIRE_KEYS, "trust statement")
        statement = cls(
            certifier=parse_did(obj["certifier"]),
            issuer=parse_did(obj["issuer"]),
            legitimacy=obj["legitimacy"],
            confidence=obj["confidence"],
            context=obj["context"],
            uri=obj["uri"],
            timestamp=obj["timestamp"],
            signature=bytes.fromhex(obj["signature"]),
        )
        _check_fields(statement)
        return statement


def _check_fields(statement: TrustStatement) -> None:
    for name, level in (("legitimacy", statement.legitimacy), ("confidence", statement.confidence)):
        if not isinstance(level, int) or isinstance(level, bool) or not LEVEL_MIN <= level <= LEVEL_MAX:
            raise TrustStatementError(
                f"{name} must be an integer in [{LEVEL_MIN}, {LEVEL_MAX}], got {level!r}"
            )
    if statement.context not in CONTEXTS:
        raise TrustStatementError(f"context must be one of {CONTEXTS}, got {statement.context!r}")
    if statement.certifier == statement.issuer:
        raise TrustStatementError("self-edges are not allowed")
    if not isinstance(statement.timestamp, int) or isinstance(statement.timestamp, bool):
        raise TrustStatementError("timestamp must be an integer")
    if not isinstance(statement.uri, str):
        raise TrustStatementError("uri must be a string")


def make_trust_statement(
    certifier_keypair: KeyPair,
    issuer: Did,
    legitimacy: int,
    confidence: int,
    context: str,
    uri: str,
    timestamp: int,
) -> TrustStatement:
    """Create and sign one web-of-trust edge."""
    unsigned = TrustStatement(
        certifier=certifier_keypair.did,
        issuer=issuer,
        legitimacy=legitimacy,
        confidence=confidence,
        context=context,
        uri=uri,
        timestamp=timestamp,
        signature=b"",
    )
    _check_fields(unsigned)
    return replace(
        unsigned, signature=sign(unsigned.signed_bytes(), certifier_keypair.secret_key)
    )


def validate_edge(edge: TrustStatement, ledger) -> VerifyOutcome:
    """Authenticate one edge against the certifier's registered key."""
    try:
        _check_fields(edge)
    except TrustStatementError as exc:
        return VerifyOutcome(False, str(exc))
    public_key = ledger.resolve_did(edge.certifier)
    if public_key is None:
        return VerifyOutcome(False, "certifier-unknown")
    if not verify(edge.signature, edge.signed_bytes(), public_key):
        return VerifyOutcome(False, "bad-signature")
    return VerifyOutcome(True)


@dataclass
class WotGraph:
    """Edges in ledger insertion order; order is what tie-breaks supersession."""

    edges: list[TrustStatement]

    @classmethod
    def from_wire(cls, raw_edges: Iterable[bytes]) -> "WotGraph":
        """Decode stored edge bytes, skipping ones that do not parse.

        The registry stores payloads opaque, so garbage may be on chain;
        filtering is the reader's job.
        """
        edges = []
        for raw in raw_edges:
            try:
                edges.append(TrustStatement.from_bytes(raw))
            except (FormatError, TrustStatementError, ValueError):
                continue
        return cls(edges)


def load_validated_graph(ledger) -> WotGraph:
    """Decode the on-ledger graph and drop edges with invalid signatures."""
    graph = WotGraph.from_wire(ledger.get_wot())
    return WotGraph([edge for edge in graph.edges if validate_edge(edge, ledger)])


def effective_indexed(edges: Sequence, at_time: int) -> list[tuple[int, object]]:
    """Supersession with original indices kept, for any edge type that has
    a ``supersession_key`` and a ``timestamp`` (transform edges reuse this
    rule)."""
    best: dict[tuple, tuple[int, object]] = {}
    for index, edge in enumerate(edges):
        if edge.timestamp > at_time:
            continue
        key = edge.supersession_key
        current = best.get(key)
        # >= implements the tie rule: equal timestamps resolve to the later
        # insertion.
        if current is None or edge.timestamp >= current[1].timestamp:
            best[key] = (index, edge)
    return sorted(best.values(), key=lambda pair: pair[0])


def effective_edges(edges: Sequence[TrustStatement], at_time: int) -> list[TrustStatement]:
    """The view of the multigraph at a point in time.

    Per (certifier, issuer, context, uri) key, exactly the edge with the
    greatest timestamp <= at_time survives; future edges are invisible.
    """
    return [edge for _, edge in effective_indexed(edges, at_time)]


@dataclass(frozen=True)
class TrustPath:
    """A simple path of edges, head-to-tail: each edge's issuer is the next
    edge's certifier."""

    edges: tuple[TrustStatement, ...]

    def __post_init__(self) -> None:
        if not self.edges:
            raise ValueError("a trust path has at least one edge")
        for left, right in zip(self.edges, self.edges[1:]):
            if left.issuer != right.certifier:
                raise ValueError("path edges do not chain")

    def __len__(self) -> int:
        return len(self.edges)

    @property
    def origin(self) -> Did:
        return self.edges[0].certifier

    @property
    def target(self) -> Did:
        return self.edges[-1].issuer


def pathfinder(
    graph: WotGraph | Sequence[TrustStatement],
    origin: Did,
    target: Did,
    context: str,
    uri: str,
    max_len: int,
    at_time: int,
) -> list[TrustPath]:
    """All simple paths from origin to target over the effective graph.

    Every edge on a path must match the context and the URI (an edge with
    uri ``*`` matches any URI). Output order is lexicographic by the edge
    insertion indices, which makes results reproducible across runs.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    edges = graph.edges if isinstance(graph, WotGraph) else list(graph)
    adjacency: dict[str, list[tuple[int, TrustStatement]]] = {}
    for index, edge in effective_indexed(edges, at_time):
        if edge.matches(context, uri):
            adjacency.setdefault(str(edge.certifier), []).append((index, edge))

    paths: list[TrustPath] = []
    stack: list[TrustStatement] = []
    visited = {str(origin)}

    def walk(vertex: str) -> None:
        for _, edge in adjacency.get(vertex, ()):
            head = str(edge.issuer)
            if head in visited:
                continue
            stack.append(edge)
            if head == str(target):
                paths.append(TrustPath(tuple(stack)))
            elif len(stack) < max_len:
                visited.add(head)
                walk(head)
                visited.remove(head)
            stack.pop()

    if origin != target:
        walk(str(origin))
    return paths


def calcscore(paths: Sequence[TrustPath]) -> int:
    """Aggregate paths into one legitimacy score.

    Per path: the minimum over the confidence of every non-terminal edge
    and the legitimacy of the terminal edge — interior edges are consumed
    as meta-statements about the next certifier, only the last edge speaks
    about the target itself. Across paths: the maximum. No paths at all
    scores exactly 0, which any positive threshold rejects, while keeping
    "unknown" distinguishable from explicit distrust (negative scores).
    """
    if not paths:
        return 0
    targets = {str(path.target) for path in paths}
    if len(targets) > 1:
        raise ValueError(f"paths must share one target, got {sorted(targets)}")
    best = LEVEL_MIN
    for path in paths:
        levels = [edge.confidence for edge in path.edges[:-1]]
        levels.append(path.edges[-1].legitimacy)
        best = max(best, min(levels))
    return best


def legitimacy_score(
    edges: WotGraph | Sequence[TrustStatement],
    roots: Sequence[Did],
    target: Did,
    context: str,
    uri: str,
    max_len: int,
    at_time: int,
) -> tuple[int, list[TrustPath]]:
    """Score a target from a verifier's trust roots.

    Roots are axiomatically trusted: a target that is itself a root scores
    full trust with no paths. (Definition-level: self-edges are forbidden,
    so nothing a root publishes can vouch for the root itself.)
    """
    if any(target == root for root in roots):
        return FULL_TRUST, []
    paths: list[TrustPath] = []
    for root in roots:
        paths.extend(pathfinder(edges, root, target, context, uri, max_len, at_time))
    return calcscore(paths), paths


def has_negative_direct_edge(
    edges: WotGraph | Sequence[TrustStatement],
    roots: Sequence[Did],
    target: Did,
    context: str,
    uri: str,
    at_time: int,
) -> bool:
    """Is there an effective root-to-target edge with negative legitimacy?

    Firsthand distrust published by a root; policies may let it veto any
    positive score reached through other paths.
    """
    sequence = edges.edges if isinstance(edges, WotGraph) else edges
    root_set = {str(root) for root in roots}
    for edge in effective_edges(sequence, at_time):
        if (
            str(edge.certifier) in root_set
            and edge.issuer == target
            and edge.matches(context, uri)
            and edge.legitimacy < 0
        ):
            return True
    return False


@dataclass(frozen=True)
class IssuerCheck:
    """Outcome of authenticating a credential's issuer through the graph."""

    accepted: bool
    score: int
    paths_used: list[TrustPath]
    reasons: list[str]


def verify_issuer_legitimacy(cred: Credential, policy, ledger, at_time: int) -> IssuerCheck:
    """Authenticate a credential's issuer via trust paths and the policy.

    Edges whose signatures do not verify are dropped before path-finding
    rather than treated as errors. The URI filter is the credential's
    schema: what the issuer must be trusted to issue.
    """
    reasons: list[str] = []
    outcome = verify_credential_signature(cred, ledger)
    if not outcome:
        reasons.append(outcome.reason or "bad-signature")
    status = check_revocation(cred, ledger.get_revocations(), at_time, ledger)
    if status.revoked:
        reasons.append("revoked")
    graph = load_validated_graph(ledger)
    score, paths = legitimacy_score(
        graph,
        policy.roots,
        cred.issuer,
        CONTEXT_CREDENTIAL,
        cred.schema,
        policy.max_path_len,
        at_time,
    )
    if score < policy.min_score:
        reasons.append("issuer-untrusted")
    if policy.veto_on_negative_direct_edge and has_negative_direct_edge(
        graph, policy.roots, cred.issuer, CONTEXT_CREDENTIAL, cred.schema, at_time
    ):
        reasons.append("veto-negative-direct-edge")
    return IssuerCheck(accepted=not reasons, score=score, paths_used=paths, reasons=reasons)
