"""Content-addressed blob store: the address of a blob is its SHA-256 hash.

Stands in for a distributed file system. Integrity is intrinsic: ``get``
re-hashes the stored bytes and refuses to return anything that does not
match its address, so a corrupted or malicious store node is detected at
retrieval time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .canonical import sha256

ADDRESS_LEN = 32


class BlobNotFound(KeyError):
    """No blob stored under the requested address."""


class StoreIntegrityError(Exception):
    """Stored bytes do not hash to their address."""


@dataclass(frozen=True)
class ContentAddress:
    digest: bytes

    def __post_init__(self) -> None:
        if len(self.digest) != ADDRESS_LEN:
            raise ValueError(f"address must be {ADDRESS_LEN} bytes")

    @classmethod
    def for_blob(cls, blob: bytes) -> "ContentAddress":
        return cls(sha256(blob))

    @classmethod
    def from_hex(cls, text: str) -> "ContentAddress":
        return cls(bytes.fromhex(text))

    @property
    def hex(self) -> str:
        return self.digest.hex()

    def __str__(self) -> str:
        return self.hex


class ContentStore:
    """Map from content address to bytes, optionally persisted to a directory.

    On disk, each blob lives in one file named by its hex address. ``put`` of
    identical content from two writers converges to the same single entry.
    """

    def __init__(self, root: Path | str | None = None):
        self._blobs: dict[bytes, bytes] = {}
        self._root = Path(root) if root is not None else None
        if self._root is not None:
            self._root.mkdir(parents=True, exist_ok=True)

    def put(self, blob: bytes) -> ContentAddress:
        address = ContentAddress.for_blob(blob)
        if address.digest not in self._blobs:
            self._blobs[address.digest] = blob
            if self._root is not None:
                path = self._root / address.hex
                if not path.exists():
                    tmp = path.with_suffix(".tmp")
                    tmp.write_bytes(blob)
                    os.replace(tmp, path)
        return address

    def get(self, address: ContentAddress) -> bytes:
        blob = self._blobs.get(address.digest)
        if blob is None and self._root is not None:
            path = self._root / address.hex
            if path.exists():
                blob = path.read_bytes()
        if blob is None:
            raise BlobNotFound(address.hex)
        if sha256(blob) != address.digest:
            raise StoreIntegrityError(
                f"blob at {address.hex} does not hash to its address"
            )
        return blob

    def __contains__(self, address: ContentAddress) -> bool:
        if address.digest in self._blobs:
            return True
        return self._root is not None and (self._root / address.hex).exists()

    def addresses(self) -> list[ContentAddress]:
        known = {digest: None for digest in self._blobs}
        if self._root is not None:
            for path in sorted(self._root.iterdir()):
                if len(path.name) == 2 * ADDRESS_LEN:
                    try:
                        known.setdefault(bytes.fromhex(path.name), None)
                    except ValueError:
                        continue
        return [ContentAddress(digest) for digest in known]

    def gc(self, referenced: set[ContentAddress]) -> list[ContentAddress]:
        """Evict blobs not referenced by any transformation edge.

        Referenced blobs are pinned and never evicted; this is only ever run
        through an explicit command, never implicitly.
        """
        keep = {address.digest for address in referenced}
        evicted = []
        for address in self.addresses():
            if address.digest in keep:
                continue
            self._blobs.pop(address.digest, None)
            if self._root is not None:
                path = self._root / address.hex
                if path.exists():
                    path.unlink()
            evicted.append(address)
        return evicted
