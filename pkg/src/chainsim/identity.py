"""Identifier space shared by nodes and data objects.

A single 256-bit hash names every entity.  The byte string is read two
ways: big-endian unsigned integer for numeric ordering, and a bit vector
(most significant bit first) for prefix-membership level computation.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

ID_BYTES = 32
ID_BITS = ID_BYTES * 8


@dataclass(frozen=True)
class Identifier:
    bits: bytes

    def __post_init__(self):
        if len(self.bits) != ID_BYTES:
            raise ValueError(f"identifier must be {ID_BYTES} bytes, got {len(self.bits)}")

    @property
    def value(self) -> int:
        return int.from_bytes(self.bits, "big")

    def hex(self) -> str:
        return self.bits.hex()

    # big-endian fixed-width bytes compare exactly like unsigned integers
    def __lt__(self, other: "Identifier") -> bool:
        return self.bits < other.bits

    def __le__(self, other: "Identifier") -> bool:
        return self.bits <= other.bits

    def __gt__(self, other: "Identifier") -> bool:
        return self.bits > other.bits

    def __ge__(self, other: "Identifier") -> bool:
        return self.bits >= other.bits

    def __repr__(self) -> str:
        return f"Identifier({self.bits.hex()[:12]}…)"


ZERO_ID = Identifier(b"\x00" * ID_BYTES)


@dataclass(frozen=True)
class NodeKey:
    """Simulated key pair: an opaque, unique public-key byte string."""
    public_key: bytes
    node_index: int


@dataclass(frozen=True)
class Address:
    """Stable logical endpoint of one node (host:port analogue)."""
    node_index: int
    endpoint: str


def node_key_for(index: int) -> NodeKey:
    return NodeKey(public_key=f"node-{index}".encode(), node_index=index)


def address_for(index: int) -> Address:
    return Address(node_index=index, endpoint=f"10.0.{index // 256}.{index % 256}:7001")


def hash_bytes(*parts: bytes) -> Identifier:
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
    return Identifier(h.digest())


def derive_node_identifier(key: NodeKey) -> Identifier:
    if not key.public_key:
        raise ValueError("public key must be non-empty")
    return hash_bytes(key.public_key)


def derive_object_identifier(payload: bytes) -> Identifier:
    return hash_bytes(payload)


def common_prefix_len(a: Identifier, b: Identifier) -> int:
    """Number of leading bits shared by two identifiers."""
    x = a.value ^ b.value
    if x == 0:
        return ID_BITS
    return ID_BITS - x.bit_length()


def membership_prefix_len(a: Identifier, b: Identifier) -> int:
    """Shared prefix of the membership vectors of two identifiers.

    The membership vector reads the identifier bits least-significant
    first, so it is independent of the numeric ordering (which the
    leading bits dominate).  Reusing the leading bits would make every
    level list a contiguous slice of the sorted order and reduce routing
    to a linear walk.
    """
    x = a.value ^ b.value
    if x == 0:
        return ID_BITS
    return ((x & -x).bit_length()) - 1
