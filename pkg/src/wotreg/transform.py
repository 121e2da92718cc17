"""Schema transformation: path expressions, JSON templates, and the
authenticated transformation graph.

A template is a JSON document shaped like the target schema whose string
leaves starting with ``$`` are path expressions evaluated against the source
claims. Templates live in the content store byte-exact; a signed graph edge
commits to a template by its content address and to the source and target
schema URIs it maps between. Verifiers walk edge chains source → target,
authenticating each edge's publisher through the web of trust before
applying anything.

The path grammar is a deliberately single-valued JSONPath subset:
``$`` root, ``.name`` child, ``['any name']`` quoted child, ``[n]`` index.
No wildcards, slices, filters, or recursive descent, so evaluation is total
and returns at most one value.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, replace
from typing import Any, Sequence

from .canonical import FormatError, canonical_bytes, decode_canonical, require_keys
from .castore import BlobNotFound, ContentAddress, ContentStore, StoreIntegrityError
from .credential import Credential, VerifyOutcome
from .identity import Did, KeyPair, parse_did, sign, verify
from .ledger import Transaction, add_transform_call
from .wot import CONTEXT_TRANSFORMATION, WotGraph, effective_indexed, legitimacy_score

_WIRE_KEYS = {"publisher", "sourceSchema", "targetSchema", "templateAddress", "timestamp", "signature"}


# ---------------------------------------------------------------------------
# Path expressions
# ---------------------------------------------------------------------------

class PathSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


@dataclass(frozen=True)
class Root:
    pass


@dataclass(frozen=True)
class Child:
    name: str


@dataclass(frozen=True)
class Index:
    n: int


PathStep = Root | Child | Index

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_-]*")
_INTEGER = re.compile(r"0|[1-9][0-9]*")


def parse_path(expr: str) -> list[PathStep]:
    """Parse a path expression into [Root, step, ...]."""
    if not expr.startswith("$"):
        raise PathSyntaxError("path must start with '$'", 0)
    steps: list[PathStep] = [Root()]
    pos = 1
    while pos < len(expr):
        ch = expr[pos]
        if ch == ".":
            match = _IDENT.match(expr, pos + 1)
            if match is None:
                raise PathSyntaxError("expected identifier after '.'", pos + 1)
            steps.append(Child(match.group()))
            pos = match.end()
        elif ch == "[":
            if expr.startswith("['", pos):
                end = expr.find("'", pos + 2)
                if end < 0 or not expr.startswith("']", end):
                    raise PathSyntaxError("unterminated ['...'] selector", pos)
                steps.append(Child(expr[pos + 2:end]))
                pos = end + 2
            else:
                match = _INTEGER.match(expr, pos + 1)
                if match is None or not expr.startswith("]", match.end()):
                    raise PathSyntaxError("expected non-negative integer index", pos + 1)
                steps.append(Index(int(match.group())))
                pos = match.end() + 1
        else:
            raise PathSyntaxError(f"unexpected character {ch!r}", pos)
    return steps


class _Missing:
    __slots__ = ()

    def __repr__(self) -> str:
        return "MISSING"

    def __bool__(self) -> bool:
        return False


MISSING = _Missing()


def eval_path(steps: Sequence[PathStep], doc: Any) -> Any:
    """Single value at the path, or MISSING on any absent or mistyped step."""
    value = doc
    for step in steps:
        if isinstance(step, Root):
            continue
        if isinstance(step, Child):
            if not isinstance(value, dict) or step.name not in value:
                return MISSING
            value = value[step.name]
        else:
            if not isinstance(value, list) or not 0 <= step.n < len(value):
                return MISSING
            value = value[step.n]
    return value


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------

class TemplateError(ValueError):
    """A template that is not well-formed or whose paths do not parse."""


@dataclass(frozen=True)
class Template:
    """A validated template body plus the exact bytes it was parsed from."""

    body: Any
    raw: bytes

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Template":
        try:
            body = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise TemplateError(f"template is not valid JSON: {exc}") from exc
        _validate_node(body, "")
        return cls(body=body, raw=raw)


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _validate_node(node: Any, at: str) -> None:
    if isinstance(node, str):
        if node.startswith("$$") or not node.startswith("$"):
            return
        try:
            parse_path(node)
        except PathSyntaxError as exc:
            raise TemplateError(f"bad path at {at or '<root>'}: {exc}") from exc
    elif isinstance(node, dict):
        if "$path" in node:
            if not isinstance(node["$path"], str):
                raise TemplateError(f"$path at {at or '<root>'} must be a string")
            try:
                parse_path(node["$path"])
            except PathSyntaxError as exc:
                raise TemplateError(f"bad $path at {at or '<root>'}: {exc}") from exc
            extra = set(node) - {"$path", "$default"}
            if extra:
                raise TemplateError(f"unexpected keys {sorted(extra)} at {at or '<root>'}")
        else:
            for key, value in node.items():
                _validate_node(value, _join(at, key))
    elif isinstance(node, list):
        for i, item in enumerate(node):
            _validate_node(item, f"{at}[{i}]")


@dataclass(frozen=True)
class TransformResult:
    claims: Any
    missing_fields: list[str]


def apply_template(template: Template, source_claims: Any) -> TransformResult:
    """Instantiate the template against a source claims document.

    A path miss with a ``$default`` takes the default silently; a miss
    without one maps to null and is reported, leaving the policy to decide
    whether the gap matters. ``$$``-prefixed strings escape to literal
    ``$``-prefixed output.
    """
    missing: list[str] = []

    def build(node: Any, at: str) -> Any:
        if isinstance(node, str):
            if node.startswith("$$"):
                return node[1:]
            if node.startswith("$"):
                value = eval_path(parse_path(node), source_claims)
                if value is MISSING:
                    missing.append(at)
                    return None
                return copy.deepcopy(value)
            return node
        if isinstance(node, dict):
            if "$path" in node:
                value = eval_path(parse_path(node["$path"]), source_claims)
                if value is not MISSING:
                    return copy.deepcopy(value)
                if "$default" in node:
                    return copy.deepcopy(node["$default"])
                missing.append(at)
                return None
            return {key: build(value, _join(at, key)) for key, value in node.items()}
        if isinstance(node, list):
            return [build(item, f"{at}[{i}]") for i, item in enumerate(node)]
        return node

    return TransformResult(claims=build(template.body, ""), missing_fields=missing)


# ---------------------------------------------------------------------------
# Transformation graph
# ---------------------------------------------------------------------------

class TransformEdgeError(ValueError):
    pass


@dataclass(frozen=True)
class TransformEdge:
    publisher: Did
    source_schema: str
    target_schema: str
    template_address: ContentAddress
    timestamp: int
    signature: bytes

    def _fields(self) -> dict:
        return {
            "publisher": str(self.publisher),
            "sourceSchema": self.source_schema,
            "targetSchema": self.target_schema,
            "templateAddress": self.template_address.hex,
            "timestamp": self.timestamp,
        }

    def signed_bytes(self) -> bytes:
        return canonical_bytes(self._fields())

    def to_bytes(self) -> bytes:
        wire = self._fields()
        wire["signature"] = self.signature.hex()
        return canonical_bytes(wire)

    @property
    def supersession_key(self) -> tuple[str, str, str]:
        return (str(self.publisher), self.source_schema, self.target_schema)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "TransformEdge":
        obj = decode_canonical(raw)
        require_keys(obj, _WIRE_KEYS, "transform edge")
        if obj["sourceSchema"] == obj["targetSchema"]:
            raise TransformEdgeError("source and target schema must differ")
        if not isinstance(obj["timestamp"], int) or isinstance(obj["timestamp"], bool):
            raise TransformEdgeError("timestamp must be an integer")
        return cls(
            publisher=parse_did(obj["publisher"]),
            source_schema=obj["sourceSchema"],
            target_schema=obj["targetSchema"],
            template_address=ContentAddress.from_hex(obj["templateAddress"]),
            timestamp=obj["timestamp"],
            signature=bytes.fromhex(obj["signature"]),
        )


def validate_transform_edge(edge: TransformEdge, ledger) -> VerifyOutcome:
    if edge.source_schema == edge.target_schema:
        return VerifyOutcome(False, "degenerate-edge")
    public_key = ledger.resolve_did(edge.publisher)
    if public_key is None:
        return VerifyOutcome(False, "publisher-unknown")
    if not verify(edge.signature, edge.signed_bytes(), public_key):
        return VerifyOutcome(False, "bad-signature")
    return VerifyOutcome(True)


@dataclass
class TransformGraph:
    """Directed multigraph whose vertices are schema URIs."""

    edges: list[TransformEdge]

    @classmethod
    def from_wire(cls, raw_edges) -> "TransformGraph":
        edges = []
        for raw in raw_edges:
            try:
                edges.append(TransformEdge.from_bytes(raw))
            except (FormatError, TransformEdgeError, ValueError):
                continue
        return cls(edges)


def make_transform_edge(
    publisher_keypair: KeyPair,
    source_schema: str,
    target_schema: str,
    template_address: ContentAddress,
    timestamp: int,
) -> TransformEdge:
    if source_schema == target_schema:
        raise TransformEdgeError("source and target schema must differ")
    unsigned = TransformEdge(
        publisher=publisher_keypair.did,
        source_schema=source_schema,
        target_schema=target_schema,
        template_address=template_address,
        timestamp=timestamp,
        signature=b"",
    )
    return replace(
        unsigned, signature=sign(unsigned.signed_bytes(), publisher_keypair.secret_key)
    )


class PublishError(Exception):
    """The registry refused the transformation edge."""


def publish_transform(
    publisher_keypair: KeyPair,
    source_schema: str,
    target_schema: str,
    template_bytes: bytes,
    store: ContentStore,
    ledger,
    timestamp: int,
) -> TransformEdge:
    """Store a template and announce it with a signed graph edge."""
    Template.from_bytes(template_bytes)
    address = store.put(template_bytes)
    edge = make_transform_edge(
        publisher_keypair, source_schema, target_schema, address, timestamp
    )
    caller = str(publisher_keypair.did)
    tx = Transaction(caller, add_transform_call(edge.to_bytes()), ledger.next_nonce(caller))
    receipt = ledger.submit(tx)
    if not receipt.accepted:
        raise PublishError(f"registry rejected edge: {receipt.reason}")
    return edge


def find_transform_paths(
    graph: TransformGraph | Sequence[TransformEdge],
    source_schema: str,
    target_schema: str,
    max_len: int,
    at_time: int,
) -> list[list[TransformEdge]]:
    """All simple schema paths source → target, up to max_len hops.

    Same supersession rule as the web of trust, keyed per
    (publisher, source, target). Equal schemas yield one empty path: the
    identity transformation.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if source_schema == target_schema:
        return [[]]
    edges = graph.edges if isinstance(graph, TransformGraph) else list(graph)
    adjacency: dict[str, list[tuple[int, TransformEdge]]] = {}
    for index, edge in effective_indexed(edges, at_time):
        adjacency.setdefault(edge.source_schema, []).append((index, edge))

    paths: list[list[TransformEdge]] = []
    stack: list[TransformEdge] = []
    visited = {source_schema}

    def walk(vertex: str) -> None:
        for _, edge in adjacency.get(vertex, ()):
            head = edge.target_schema
            if head in visited:
                continue
            stack.append(edge)
            if head == target_schema:
                paths.append(list(stack))
            elif len(stack) < max_len:
                visited.add(head)
                walk(head)
                visited.remove(head)
            stack.pop()

    walk(source_schema)
    return paths


# ---------------------------------------------------------------------------
# Authenticated chains
# ---------------------------------------------------------------------------

class ChainError(Exception):
    code = "chain-failure"

    def __init__(self, hop: int, detail: str):
        super().__init__(f"hop {hop}: {detail}")
        self.hop = hop
        self.detail = detail


class HopAuthFailure(ChainError):
    code = "hop-auth-failure"


class TemplateIntegrityFailure(ChainError):
    code = "template-integrity-failure"


class TemplateParseFailure(ChainError):
    code = "template-parse-failure"


@dataclass(frozen=True)
class HopReport:
    index: int
    publisher: Did
    source_schema: str
    target_schema: str
    publisher_score: int
    template_address: ContentAddress
    missing_fields: list[str]


@dataclass(frozen=True)
class ChainResult:
    claims: Any
    final_schema: str
    hops: list[HopReport]


def transform_chain(
    cred: Credential,
    path: Sequence[TransformEdge],
    wot_graph: WotGraph,
    policy,
    store: ContentStore,
    ledger,
    at_time: int,
) -> ChainResult:
    """Run a credential's claims through an authenticated template chain.

    The caller must have verified the original credential's signature first;
    transformation happens locally on a copy, so the signed original stays
    intact and verifiable. Each hop is authenticated before its template is
    fetched or applied: edge signature, then the publisher's legitimacy for
    transformations from the hop's source schema. The first failing hop
    aborts the chain.
    """
    claims = copy.deepcopy(cred.claims)
    schema = cred.schema
    hops: list[HopReport] = []
    for index, edge in enumerate(path):
        if edge.source_schema != schema:
            raise HopAuthFailure(index, f"edge source {edge.source_schema} != current schema {schema}")
        outcome = validate_transform_edge(edge, ledger)
        if not outcome:
            raise HopAuthFailure(index, outcome.reason or "invalid-edge")
        score, _ = legitimacy_score(
            wot_graph,
            policy.roots,
            edge.publisher,
            CONTEXT_TRANSFORMATION,
            edge.source_schema,
            policy.max_path_len,
            at_time,
        )
        if score < policy.min_transform_score:
            raise HopAuthFailure(
                index, f"publisher-untrusted: score {score} < {policy.min_transform_score}"
            )
        try:
            template_bytes = store.get(edge.template_address)
        except (BlobNotFound, StoreIntegrityError) as exc:
            raise TemplateIntegrityFailure(index, str(exc)) from exc
        try:
            template = Template.from_bytes(template_bytes)
        except TemplateError as exc:
            raise TemplateParseFailure(index, str(exc)) from exc
        result = apply_template(template, claims)
        claims = result.claims
        schema = edge.target_schema
        hops.append(
            HopReport(
                index=index,
                publisher=edge.publisher,
                source_schema=edge.source_schema,
                target_schema=edge.target_schema,
                publisher_score=score,
                template_address=edge.template_address,
                missing_fields=result.missing_fields,
            )
        )
    return ChainResult(claims=claims, final_schema=schema, hops=hops)
