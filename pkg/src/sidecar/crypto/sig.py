"""Long-term node signing keys (Ed25519)."""

from __future__ import annotations

import random
from dataclasses import dataclass

from nacl.exceptions import BadSignatureError
from nacl.signing import SigningKey, VerifyKey

from sidecar.crypto.pairing import rand_bytes

SIG_SIZE = 64
VK_SIZE = 32


@dataclass
class NodeKey:
    signing: SigningKey

    @classmethod
    def generate(cls, rng: random.Random | None = None) -> "NodeKey":
        return cls(SigningKey(rand_bytes(32, rng)))

    @classmethod
    def from_seed(cls, seed: bytes) -> "NodeKey":
        return cls(SigningKey(seed))

    @property
    def seed(self) -> bytes:
        return bytes(self.signing)

    @property
    def public(self) -> bytes:
        return bytes(self.signing.verify_key)

    def sign(self, msg: bytes) -> bytes:
        return self.signing.sign(msg).signature


def verify_sig(ipk: bytes, msg: bytes, sig: bytes) -> bool:
    if len(ipk) != VK_SIZE or len(sig) != SIG_SIZE:
        return False
    try:
        VerifyKey(ipk).verify(msg, sig)
    except (BadSignatureError, ValueError):
        return False
    return True
