"""BLS12-381 group arithmetic, hashing and authenticated encryption.

Group arithmetic and pairings run on mcl (via ``pymcl``); hash-to-G1 uses the
RFC 9380 ``BLS12381G1_XMD:SHA-256_SSWU_RO_`` suite from blst (via ``pyblst``)
and the result is re-encoded into mcl's point format.

Byte encodings (the wire format):

* G1: 48 bytes, mcl compressed form (little-endian x, top bit = y parity)
* G2: 96 bytes, mcl compressed form
* scalars: 32 bytes big-endian, strictly below the group order
"""

from __future__ import annotations

import hashlib
import random
import secrets

import gmpy2
import pymcl
from nacl.bindings import (
    crypto_aead_xchacha20poly1305_ietf_decrypt,
    crypto_aead_xchacha20poly1305_ietf_encrypt,
)
from nacl.exceptions import CryptoError
from pyblst import BlstP1Element
from pymcl import G1, G2, GT, Fr

Q = pymcl.r
FIELD_P = 0x1A0111EA397FE69A4B1BA7B6434BACD764774B84F38512BF6730D2A0F6B0F6241EABFFFEB153FFFFB9FEFFFFFFFFAAAB

DIGEST_SIZE = 32
SCALAR_SIZE = 32
G1_SIZE = 48
G2_SIZE = 96
AEAD_KEY_SIZE = 32
AEAD_NONCE_SIZE = 24
AEAD_TAG_SIZE = 16

HASH_TO_G1_DST = b"SIDECAR-V01-CS01-with-BLS12381G1_XMD:SHA-256_SSWU_RO_"

G1_GEN: G1 = pymcl.g1
G2_GEN: G2 = pymcl.g2

_MASK_381 = (1 << 381) - 1
_HALF_P = (FIELD_P - 1) // 2
_SQRT_EXP = gmpy2.mpz((FIELD_P + 1) // 4)
_P_MPZ = gmpy2.mpz(FIELD_P)


class DecodeError(ValueError):
    """Raised when bytes do not encode a valid element."""


class AeadError(Exception):
    """Authentication failed: wrong key or tampered ciphertext."""


def rand_bytes(n: int, rng: random.Random | None = None) -> bytes:
    if rng is None:
        return secrets.token_bytes(n)
    return rng.randbytes(n)


def h_digest(*parts: bytes) -> bytes:
    """SHA-256 over the concatenation of ``parts``."""
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.digest()


# ---------------------------------------------------------------- scalars

def scalar_from_int(value: int) -> Fr:
    return Fr(str(value % Q))


def scalar_to_int(e: Fr) -> int:
    return int(str(e))


def random_scalar(rng: random.Random | None = None) -> Fr:
    """Uniform nonzero scalar."""
    if rng is None:
        v = secrets.randbelow(Q - 1) + 1
    else:
        v = rng.randrange(1, Q)
    return Fr(str(v))


def scalar_inv(e: Fr) -> Fr:
    if e.is_zero():
        raise ZeroDivisionError("zero scalar has no inverse")
    return ~e


def scalar_to_bytes(e: Fr) -> bytes:
    return e.serialize()[::-1]


def scalar_from_bytes(data: bytes) -> Fr:
    if len(data) != SCALAR_SIZE:
        raise DecodeError(f"scalar must be {SCALAR_SIZE} bytes")
    if int.from_bytes(data, "big") >= Q:
        raise DecodeError("scalar out of range")
    return Fr.deserialize(data[::-1])


def hash_to_scalar(*parts: bytes) -> Fr:
    """Wide (512-bit) reduction of SHA-512 so the bias is negligible."""
    h = hashlib.sha512()
    for p in parts:
        h.update(p)
    return Fr(str(int.from_bytes(h.digest(), "big") % Q))


# ---------------------------------------------------------------- groups

def g1_exp(p: G1, e: Fr) -> G1:
    return p * e


def g1_identity() -> G1:
    return G1()


def g1_to_bytes(p: G1) -> bytes:
    return p.serialize()


def g1_from_bytes(data: bytes, allow_identity: bool = False) -> G1:
    if len(data) != G1_SIZE:
        raise DecodeError(f"G1 element must be {G1_SIZE} bytes")
    try:
        p = G1.deserialize(data)
    except Exception as exc:  # mcl raises a bare RuntimeError
        raise DecodeError("invalid G1 encoding") from exc
    if not allow_identity and p.is_zero():
        raise DecodeError("identity not allowed")
    return p


def g2_to_bytes(p: G2) -> bytes:
    return p.serialize()


def g2_from_bytes(data: bytes, allow_identity: bool = False) -> G2:
    if len(data) != G2_SIZE:
        raise DecodeError(f"G2 element must be {G2_SIZE} bytes")
    try:
        p = G2.deserialize(data)
    except Exception as exc:
        raise DecodeError("invalid G2 encoding") from exc
    if not allow_identity and p.is_zero():
        raise DecodeError("identity not allowed")
    return p


def gt_to_bytes(e: GT) -> bytes:
    return e.serialize()


def pairing(p: G1, q: G2) -> GT:
    return pymcl.pairing(p, q)


def zcash_g1_to_mcl(data: bytes) -> bytes:
    """Re-encode a ZCash/IETF compressed G1 point as mcl's compressed form."""
    flags = data[0]
    if not flags & 0x80 or flags & 0x40:
        raise DecodeError("expected a compressed, non-identity point")
    x = int.from_bytes(data, "big") & _MASK_381
    rhs = (gmpy2.mpz(x) ** 3 + 4) % _P_MPZ
    y = int(gmpy2.powmod(rhs, _SQRT_EXP, _P_MPZ))
    if (y > _HALF_P) != bool(flags & 0x20):
        y = FIELD_P - y
    out = bytearray(x.to_bytes(G1_SIZE, "little"))
    if y & 1:
        out[-1] |= 0x80
    return bytes(out)


def h_to_group(data: bytes, dst: bytes = HASH_TO_G1_DST) -> G1:
    """Hash arbitrary bytes to G1 (random-oracle suite, constant time in blst)."""
    compressed = BlstP1Element().hash_to_group(data, dst).compress()
    return G1.deserialize(zcash_g1_to_mcl(compressed))


def pairing_check(pk: G2, h: G1, g: G2, y: G1) -> bool:
    """True iff e(h, pk) == e(y, g)."""
    return pymcl.pairing(h, pk) == pymcl.pairing(y, g)


# ---------------------------------------------------------------- AEAD

def aead_seal(key: bytes, msg: bytes, rng: random.Random | None = None) -> bytes:
    """XChaCha20-Poly1305; output is nonce || ciphertext || tag."""
    if len(key) != AEAD_KEY_SIZE:
        raise ValueError("AEAD key must be 32 bytes")
    nonce = rand_bytes(AEAD_NONCE_SIZE, rng)
    return nonce + crypto_aead_xchacha20poly1305_ietf_encrypt(msg, None, nonce, key)


def aead_open(key: bytes, ct: bytes) -> bytes:
    if len(key) != AEAD_KEY_SIZE:
        raise ValueError("AEAD key must be 32 bytes")
    if len(ct) < AEAD_NONCE_SIZE + AEAD_TAG_SIZE:
        raise AeadError("ciphertext too short")
    nonce, body = ct[:AEAD_NONCE_SIZE], ct[AEAD_NONCE_SIZE:]
    try:
        return crypto_aead_xchacha20poly1305_ietf_decrypt(body, None, nonce, key)
    except CryptoError as exc:
        raise AeadError("wrong key or tampered ciphertext") from exc
