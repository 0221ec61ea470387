"""Additive secret sharing over Z_{2^lambda} and Z_2, plus the share-file format.

A secret x is held as two shares with x_A + x_B = x (mod 2^ring_bits); a bit
secret is the XOR of two bit shares.  Addition, subtraction, scaling by a
public constant and adding a public constant are all local; by convention
role A is the party that absorbs public constants.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import FormatError, ProtocolError
from .fixedpoint import FixedPointParams, RING_DTYPES

SHARE_MAGIC = b"SHR1"
_SHARE_HEADER = struct.Struct("<4sHHHQQ")


class Role(Enum):
    ALICE = "A"
    BOB = "B"

    @property
    def peer(self) -> "Role":
        return Role.BOB if self is Role.ALICE else Role.ALICE


@dataclass(frozen=True)
class RingShare:
    value: int
    role: Role


@dataclass(frozen=True)
class BitShare:
    bit: int
    role: Role


@dataclass(frozen=True)
class BitVectorShare:
    """`n` bit shares packed LSB-first into one arbitrary-precision integer."""

    bits: int
    n: int
    role: Role

    def bit_at(self, i: int) -> int:
        """Bit share at position i (1-based, LSB first)."""
        return (self.bits >> (i - 1)) & 1


@dataclass
class VectorShare:
    """Share of a vector or matrix; `values` keeps the ring's unsigned dtype."""

    values: np.ndarray
    role: Role

    @property
    def shape(self):
        return self.values.shape


def random_ring_array(rng: np.random.Generator, params: FixedPointParams, shape) -> np.ndarray:
    """Uniform ring elements drawn from a seeded generator."""
    dtype = params.dtype
    n = int(np.prod(shape)) if shape else 1
    buf = rng.bytes(n * np.dtype(dtype).itemsize)
    return np.frombuffer(buf, dtype=dtype).reshape(shape).copy()


def random_bits(rng: np.random.Generator, nbits: int) -> int:
    """Uniform `nbits`-bit integer (LSB-first packing convention)."""
    if nbits <= 0:
        return 0
    nbytes = (nbits + 7) // 8
    v = int.from_bytes(rng.bytes(nbytes), "little")
    return v & ((1 << nbits) - 1)


def split(x: int, params: FixedPointParams, rng: np.random.Generator):
    """Split one ring element into a uniform pair of additive shares."""
    r = int(random_ring_array(rng, params, ()) )
    return (
        RingShare(r & params.mask, Role.ALICE),
        RingShare((x - r) & params.mask, Role.BOB),
    )


def split_array(values: np.ndarray, params: FixedPointParams, rng: np.random.Generator):
    values = np.asarray(values, dtype=params.dtype)
    r = random_ring_array(rng, params, values.shape)
    return (
        VectorShare(r, Role.ALICE),
        VectorShare(values - r, Role.BOB),
    )


def split_bits(bits: int, n: int, rng: np.random.Generator):
    r = random_bits(rng, n)
    return (
        BitVectorShare(r, n, Role.ALICE),
        BitVectorShare(bits ^ r, n, Role.BOB),
    )


def _check_pair(a_role: Role, b_role: Role):
    if a_role == b_role:
        raise ProtocolError(f"cannot open two shares held by the same role {a_role.value}")


def open_shares(sa: RingShare, sb: RingShare, params: FixedPointParams) -> int:
    _check_pair(sa.role, sb.role)
    return (sa.value + sb.value) & params.mask


def open_arrays(sa: VectorShare, sb: VectorShare, params: FixedPointParams) -> np.ndarray:
    _check_pair(sa.role, sb.role)
    if sa.values.shape != sb.values.shape:
        raise ProtocolError(f"share shape mismatch: {sa.values.shape} vs {sb.values.shape}")
    return (sa.values.astype(params.dtype) + sb.values.astype(params.dtype))


def open_bits(sa: BitVectorShare, sb: BitVectorShare) -> int:
    _check_pair(sa.role, sb.role)
    if sa.n != sb.n:
        raise ProtocolError(f"bit-share length mismatch: {sa.n} vs {sb.n}")
    return sa.bits ^ sb.bits


def affine_combine(c0: int, terms, params: FixedPointParams) -> RingShare:
    """Local affine map c0 + sum(c_i * x_i) over shares of one role.

    Opening the result of both parties' combines yields the same affine map
    applied to the secrets; the public constant c0 is added by role A only.
    """
    roles = {share.role for _, share in terms}
    if len(roles) > 1:
        raise ProtocolError("affine_combine over mixed roles")
    role = roles.pop() if roles else Role.ALICE
    acc = c0 & params.mask if role is Role.ALICE else 0
    for c, share in terms:
        acc = (acc + (c & params.mask) * share.value) & params.mask
    return RingShare(acc, role)


def affine_combine_arrays(c0: int, terms, params: FixedPointParams, role: Role | None = None) -> VectorShare:
    """Vector form of :func:`affine_combine`."""
    roles = {share.role for _, share in terms}
    if len(roles) > 1:
        raise ProtocolError("affine_combine over mixed roles")
    if roles:
        role = roles.pop()
    if role is None:
        raise ProtocolError("role required when combining an empty term list")
    shape = terms[0][1].values.shape if terms else ()
    acc = np.zeros(shape, dtype=params.dtype)
    if role is Role.ALICE:
        acc += params.dtype(c0 & params.mask)
    for c, share in terms:
        acc += params.dtype(c & params.mask) * share.values.astype(params.dtype)
    return VectorShare(acc, role)


def pack_bits_to_words(bits: int, n: int) -> np.ndarray:
    """LSB-first packing of an n-bit integer into little-endian 64-bit words."""
    nwords = max(1, (n + 63) // 64)
    raw = bits.to_bytes(nwords * 8, "little")
    return np.frombuffer(raw, dtype=np.uint64).copy()


def unpack_words_to_bits(words: np.ndarray, n: int) -> int:
    v = int.from_bytes(np.asarray(words, dtype=np.uint64).tobytes(), "little")
    return v & ((1 << n) - 1) if n > 0 else 0


def write_share_file(path, values: np.ndarray, params: FixedPointParams):
    """Write one party's share matrix: SHR1 header then row-major u64 words."""
    values = np.atleast_2d(np.asarray(values, dtype=params.dtype))
    rows, cols = values.shape
    header = _SHARE_HEADER.pack(
        SHARE_MAGIC, params.ring_bits, params.frac_bits, params.int_bits, rows, cols
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.astype(np.uint64).tobytes())


def read_share_file(path):
    """Read a share file back as (values, params); verifies magic and size."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _SHARE_HEADER.size:
        raise FormatError(f"{path}: truncated share file header")
    magic, ring_bits, frac_bits, int_bits, rows, cols = _SHARE_HEADER.unpack_from(raw)
    if magic != SHARE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {SHARE_MAGIC!r}")
    if ring_bits not in RING_DTYPES:
        raise FormatError(f"{path}: unsupported ring width {ring_bits}")
    body = raw[_SHARE_HEADER.size:]
    expected = rows * cols * 8
    if len(body) != expected:
        raise FormatError(f"{path}: payload is {len(body)} bytes, expected {expected}")
    params = FixedPointParams(frac_bits=frac_bits, int_bits=int_bits, ring_bits=ring_bits)
    words = np.frombuffer(body, dtype=np.uint64).reshape(rows, cols)
    return words.astype(params.dtype), params
