"""Verifiable credentials: issue, sign, verify, and revoke.

A credential is a minimal envelope around a claims document: subject and
issuer DIDs, the URI of the schema the claims are encoded in, an issuance
time, and the issuer's signature over the canonical encoding of all of it.
Issuance is offline; only verification consults the registry.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .canonical import FormatError, canonical_bytes, decode_canonical, require_keys, sha256
from .identity import Did, KeyPair, parse_did, sign, verify

_WIRE_KEYS = {"subject", "issuer", "schema", "claims", "issuedAt", "signature"}
_REVOCATION_KEYS = {"issuer", "credentialDigest", "revokedAt", "signature"}


class CredentialError(ValueError):
    """Invalid credential fields or an illegal operation on one."""


@dataclass(frozen=True)
class VerifyOutcome:
    """Boolean verdict plus the reason when it is negative."""

    ok: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class Credential:
    subject: Did
    issuer: Did
    schema: str
    claims: Any
    issued_at: int
    signature: bytes

    def _fields(self) -> dict:
        return {
            "subject": str(self.subject),
            "issuer": str(self.issuer),
            "schema": self.schema,
            "claims": self.claims,
            "issuedAt": self.issued_at,
        }

    def signed_bytes(self) -> bytes:
        return canonical_bytes(self._fields())

    def to_bytes(self) -> bytes:
        wire = self._fields()
        wire["signature"] = self.signature.hex()
        return canonical_bytes(wire)

    def digest(self) -> bytes:
        return sha256(self.to_bytes())

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Credential":
        obj = decode_canonical(raw)
        require_keys(obj, _WIRE_KEYS, "credential")
        if not isinstance(obj["issuedAt"], int) or obj["issuedAt"] <= 0:
            raise FormatError("credential: issuedAt must be a positive integer")
        if not isinstance(obj["schema"], str):
            raise FormatError("credential: schema must be a string")
        try:
            signature = bytes.fromhex(obj["signature"])
        except (TypeError, ValueError) as exc:
            raise FormatError("credential: signature is not hex") from exc
        return cls(
            subject=parse_did(obj["subject"]),
            issuer=parse_did(obj["issuer"]),
            schema=obj["schema"],
            claims=obj["claims"],
            issued_at=obj["issuedAt"],
            signature=signature,
        )


def issue_credential(
    issuer_keypair: KeyPair, subject: Did, schema: str, claims: Any, issued_at: int
) -> Credential:
    """Encode claims under a schema and sign the envelope.

    Issuance never touches the ledger; if the issuer's DID is unregistered
    the credential is simply unverifiable later.
    """
    if issued_at <= 0:
        raise CredentialError("issuedAt must be a positive integer")
    canonical_bytes(claims)  # reject claims the canonical form cannot carry
    unsigned = Credential(
        subject=subject,
        issuer=issuer_keypair.did,
        schema=schema,
        claims=claims,
        issued_at=issued_at,
        signature=b"",
    )
    return Credential(
        subject=unsigned.subject,
        issuer=unsigned.issuer,
        schema=unsigned.schema,
        claims=unsigned.claims,
        issued_at=unsigned.issued_at,
        signature=sign(unsigned.signed_bytes(), issuer_keypair.secret_key),
    )


def verify_credential_signature(cred: Credential, ledger) -> VerifyOutcome:
    """Check the signature under the issuer key registered on the ledger."""
    public_key = ledger.resolve_did(cred.issuer)
    if public_key is None:
        return VerifyOutcome(False, "issuer-unknown")
    if not verify(cred.signature, cred.signed_bytes(), public_key):
        return VerifyOutcome(False, "bad-signature")
    return VerifyOutcome(True)


@dataclass(frozen=True)
class RevocationEntry:
    issuer: Did
    credential_digest: bytes
    revoked_at: int
    signature: bytes

    def _fields(self) -> dict:
        return {
            "issuer": str(self.issuer),
            "credentialDigest": self.credential_digest.hex(),
            "revokedAt": self.revoked_at,
        }

    def signed_bytes(self) -> bytes:
        return canonical_bytes(self._fields())

    def to_bytes(self) -> bytes:
        wire = self._fields()
        wire["signature"] = self.signature.hex()
        return canonical_bytes(wire)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "RevocationEntry":
        obj = decode_canonical(raw)
        require_keys(obj, _REVOCATION_KEYS, "revocation entry")
        if not isinstance(obj["revokedAt"], int):
            raise FormatError("revocation entry: revokedAt must be an integer")
        return cls(
            issuer=parse_did(obj["issuer"]),
            credential_digest=bytes.fromhex(obj["credentialDigest"]),
            revoked_at=obj["revokedAt"],
            signature=bytes.fromhex(obj["signature"]),
        )


def revoke_credential(issuer_keypair: KeyPair, cred: Credential, at: int) -> RevocationEntry:
    """Create a signed revocation entry; only the issuer may revoke."""
    if issuer_keypair.did != cred.issuer:
        raise CredentialError("only the credential's issuer may revoke it")
    unsigned = RevocationEntry(
        issuer=cred.issuer, credential_digest=cred.digest(), revoked_at=at, signature=b""
    )
    return RevocationEntry(
        issuer=unsigned.issuer,
        credential_digest=unsigned.credential_digest,
        revoked_at=unsigned.revoked_at,
        signature=sign(unsigned.signed_bytes(), issuer_keypair.secret_key),
    )


@dataclass(frozen=True)
class RevocationStatus:
    revoked: bool
    since: int | None = None


def check_revocation(
    cred: Credential, entries: list, at_time: int, ledger
) -> RevocationStatus:
    """Is the credential revoked at ``at_time``?

    An entry counts only if its digest matches the credential, it names the
    credential's issuer, and its signature verifies under that issuer's
    registered key — anyone else's "revocations" are ignored. Entries may be
    :class:`RevocationEntry` objects or raw wire bytes; undecodable bytes
    are skipped (the registry stores them opaque).
    """
    digest = cred.digest()
    issuer_key = ledger.resolve_did(cred.issuer)
    since: int | None = None
    for entry in entries:
        if isinstance(entry, bytes):
            try:
                entry = RevocationEntry.from_bytes(entry)
            except FormatError:
                continue
        if entry.credential_digest != digest or entry.issuer != cred.issuer:
            continue
        if entry.revoked_at > at_time:
            continue
        if issuer_key is None or not verify(entry.signature, entry.signed_bytes(), issuer_key):
            continue
        if since is None or entry.revoked_at < since:
            since = entry.revoked_at
    return RevocationStatus(revoked=since is not None, since=since)
