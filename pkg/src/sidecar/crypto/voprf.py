"""Verifiable oblivious PRF of the 2HashDH family over a Type-3 pairing.

The PRF is F_sk(m) = H1(m)^sk in G1 with public key pk = g2^sk. A client
blinds H1(m) with a random exponent r, the server raises the blinded point to
sk, and the client strips r. Verification is a pairing equation, so no DLEQ
proof is needed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable

from pymcl import G1, G2, Fr

from sidecar.crypto import pairing as pc


@dataclass(frozen=True)
class BlindingState:
    r: Fr
    input: bytes
    x: G1


@dataclass(frozen=True)
class KeyPair:
    sk: Fr
    pk: G2

    @classmethod
    def generate(cls, rng: random.Random | None = None) -> "KeyPair":
        sk = pc.random_scalar(rng)
        return cls(sk, pc.G2_GEN * sk)


def blind(input: bytes, rng: random.Random | None = None, r: Fr | None = None) -> BlindingState:
    """Blind ``input``. Passing ``r`` explicitly is meant for tests."""
    if r is None:
        r = pc.random_scalar(rng)
    elif r.is_zero():
        raise ValueError("blinding exponent must be nonzero")
    return BlindingState(r, input, pc.h_to_group(input) * r)


def evaluate(sk: Fr, x: G1) -> G1:
    if not isinstance(x, G1):
        raise pc.DecodeError("expected a G1 element")
    return x * sk


def unblind(y: G1, st: BlindingState) -> G1:
    return y * pc.scalar_inv(st.r)


def verify_output(pk: G2, input: bytes, v: G1) -> bool:
    """True iff v = H1(input)^sk for the sk behind pk = g2^sk."""
    try:
        return pc.pairing_check(pk, pc.h_to_group(input), pc.G2_GEN, v)
    except Exception:
        return False


def verify_many(pk: G2, input: bytes, values: Iterable[G1]) -> list[bool]:
    """Batch form of :func:`verify_output` sharing the left-hand pairing."""
    lhs = pc.pairing(pc.h_to_group(input), pk)
    return [pc.pairing(v, pc.G2_GEN) == lhs for v in values]
