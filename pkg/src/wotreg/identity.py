"""Ed25519 key pairs, DID derivation, and ownership challenges.

DIDs use the method string ``wot``; the identifier is the lowercase hex of
the 32-byte public key, so DID ownership equals key ownership and resolution
never needs a separate DID document.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

DID_METHOD = "wot"
DID_PREFIX = f"did:{DID_METHOD}:"
KEY_LEN = 32
CHALLENGE_LEN = 32

_RAW = serialization.Encoding.Raw
_RAW_PUBLIC = serialization.PublicFormat.Raw
_RAW_PRIVATE = serialization.PrivateFormat.Raw
_NO_ENCRYPTION = serialization.NoEncryption()


class IdentityError(ValueError):
    """Malformed key material, DIDs, or proofs."""


@dataclass(frozen=True)
class KeyPair:
    """An Ed25519 key pair; ``secret_key`` is the 32-byte seed."""

    public_key: bytes
    secret_key: bytes

    @property
    def did(self) -> "Did":
        return did_from_public_key(self.public_key)


@dataclass(frozen=True)
class Did:
    """A ``did:wot:`` identifier; ``id`` is the hex of the public key."""

    id: str
    method: str = DID_METHOD

    def __post_init__(self) -> None:
        if self.method != DID_METHOD:
            raise IdentityError(f"unsupported DID method: {self.method!r}")
        try:
            raw = bytes.fromhex(self.id)
        except ValueError as exc:
            raise IdentityError(f"DID id is not hex: {self.id!r}") from exc
        if len(raw) != KEY_LEN or self.id != self.id.lower():
            raise IdentityError(
                f"DID id must be {2 * KEY_LEN} lowercase hex chars, got {self.id!r}"
            )

    @property
    def public_key(self) -> bytes:
        """The key the DID was derived from; resolution needs no registry."""
        return bytes.fromhex(self.id)

    def __str__(self) -> str:
        return DID_PREFIX + self.id


@dataclass(frozen=True)
class OwnershipProof:
    """Signature over a verifier-supplied challenge, claiming a DID."""

    did: Did
    challenge: bytes
    signature: bytes


def keygen(seed: bytes | None = None) -> KeyPair:
    """Generate a key pair, deterministically when a 32-byte seed is given."""
    if seed is None:
        seed = os.urandom(KEY_LEN)
    elif len(seed) != KEY_LEN:
        raise IdentityError(f"seed must be {KEY_LEN} bytes, got {len(seed)}")
    private = Ed25519PrivateKey.from_private_bytes(seed)
    public = private.public_key().public_bytes(_RAW, _RAW_PUBLIC)
    return KeyPair(public_key=public, secret_key=seed)


def sign(message: bytes, secret_key: bytes) -> bytes:
    if len(secret_key) != KEY_LEN:
        raise IdentityError(f"secret key must be {KEY_LEN} bytes")
    return Ed25519PrivateKey.from_private_bytes(secret_key).sign(message)


def verify(signature: bytes, message: bytes, public_key: bytes) -> bool:
    if len(public_key) != KEY_LEN:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


def did_from_public_key(public_key: bytes) -> Did:
    if len(public_key) != KEY_LEN:
        raise IdentityError(f"public key must be {KEY_LEN} bytes, got {len(public_key)}")
    return Did(id=public_key.hex())


def parse_did(text: str) -> Did:
    if not text.startswith(DID_PREFIX):
        raise IdentityError(f"DID must start with {DID_PREFIX!r}, got {text!r}")
    return Did(id=text[len(DID_PREFIX):])


def prove_ownership(keypair: KeyPair, challenge: bytes) -> OwnershipProof:
    if len(challenge) != CHALLENGE_LEN:
        raise IdentityError(f"challenge must be {CHALLENGE_LEN} bytes")
    return OwnershipProof(
        did=keypair.did,
        challenge=challenge,
        signature=sign(challenge, keypair.secret_key),
    )


def verify_ownership(proof: OwnershipProof, ledger) -> bool:
    """True iff the proof's signature verifies under the registered key."""
    public_key = ledger.resolve_did(proof.did)
    if public_key is None:
        return False
    return verify(proof.signature, proof.challenge, public_key)


def load_key_file(path) -> KeyPair:
    """Read a key file: the 32-byte seed hex-encoded on one line."""
    text = open(path, "r", encoding="utf-8").read().strip()
    try:
        seed = bytes.fromhex(text)
    except ValueError as exc:
        raise IdentityError(f"key file {path} is not hex") from exc
    return keygen(seed)


def save_key_file(path, keypair: KeyPair) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(keypair.secret_key.hex() + "\n")
