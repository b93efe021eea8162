"""Short group signatures (Boneh-Boyen-Shacham) with generator-update revocation.

Notation is additive for G1/G2 and multiplicative for GT, matching mcl.

gpk = (g1, g2, h, u, v, w) with u*xi1 = v*xi2 = h and w = g2*gamma.
A member holds (A, x) with A = g1 * 1/(gamma + x).

Revoking (A*, x*) publishes (A*, x*, g2* = g2 * 1/(gamma + x*)) and moves the
group to g1' = A*, g2' = g2*, w' = g2 - g2* * x*. Every remaining member can
update locally via A' = (A* - A) * 1/(x - x*); the revoked member cannot.
Verifiers that track the latest gpk therefore reject the revoked key while
old signatures still verify under the older gpk they were made for.
"""

from __future__ import annotations

import hashlib
import random
import threading
from dataclasses import dataclass, field

from pymcl import G1, G2, GT, Fr

from sidecar.crypto import pairing as pc

SIG_SIZE = 3 * pc.G1_SIZE + 6 * pc.SCALAR_SIZE


class GroupSigError(Exception):
    pass


class RevokedError(GroupSigError):
    pass


@dataclass
class GroupPublicKey:
    g1: G1
    g2: G2
    h: G1
    u: G1
    v: G1
    w: G2
    epoch: int = 0
    _e_hw: GT | None = field(default=None, repr=False, compare=False)
    _e_hg2: GT | None = field(default=None, repr=False, compare=False)
    _e_g1g2: GT | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._e_hw = pc.pairing(self.h, self.w)
        self._e_hg2 = pc.pairing(self.h, self.g2)
        self._e_g1g2 = pc.pairing(self.g1, self.g2)

    def to_bytes(self) -> bytes:
        return (
            self.epoch.to_bytes(4, "big")
            + pc.g1_to_bytes(self.g1)
            + pc.g2_to_bytes(self.g2)
            + pc.g1_to_bytes(self.h)
            + pc.g1_to_bytes(self.u)
            + pc.g1_to_bytes(self.v)
            + pc.g2_to_bytes(self.w)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "GroupPublicKey":
        if len(data) != 4 + 4 * pc.G1_SIZE + 2 * pc.G2_SIZE:
            raise pc.DecodeError("bad gpk length")
        epoch = int.from_bytes(data[:4], "big")
        off = 4
        parts = []
        for kind in ("g1", "g2", "g1", "g1", "g1", "g2"):
            n = pc.G1_SIZE if kind == "g1" else pc.G2_SIZE
            dec = pc.g1_from_bytes if kind == "g1" else pc.g2_from_bytes
            parts.append(dec(data[off:off + n]))
            off += n
        return cls(*parts, epoch=epoch)

    def fingerprint(self) -> bytes:
        return pc.h_digest(self.to_bytes())


@dataclass(frozen=True)
class RevocationEntry:
    """Published per revoked key; applying it yields the next epoch's gpk."""

    epoch: int  # epoch the entry moves the group into
    a_star: G1
    x_star: Fr
    g2_star: G2

    def to_bytes(self) -> bytes:
        return (
            self.epoch.to_bytes(4, "big")
            + pc.g1_to_bytes(self.a_star)
            + pc.scalar_to_bytes(self.x_star)
            + pc.g2_to_bytes(self.g2_star)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "RevocationEntry":
        if len(data) != 4 + pc.G1_SIZE + pc.SCALAR_SIZE + pc.G2_SIZE:
            raise pc.DecodeError("bad revocation entry length")
        a = 4 + pc.G1_SIZE
        b = a + pc.SCALAR_SIZE
        return cls(
            int.from_bytes(data[:4], "big"),
            pc.g1_from_bytes(data[4:a]),
            pc.scalar_from_bytes(data[a:b]),
            pc.g2_from_bytes(data[b:]),
        )


def next_gpk(gpk: GroupPublicKey, entry: RevocationEntry) -> GroupPublicKey:
    if entry.epoch != gpk.epoch + 1:
        raise GroupSigError("revocation entry out of order")
    w_new = gpk.g2 - entry.g2_star * entry.x_star
    return GroupPublicKey(entry.a_star, entry.g2_star, gpk.h, gpk.u, gpk.v, w_new, entry.epoch)


@dataclass
class GroupMemberKey:
    a: G1
    x: Fr
    gpk: GroupPublicKey

    def apply_revocation(self, entry: RevocationEntry) -> None:
        if entry.epoch <= self.gpk.epoch:
            return
        diff = self.x - entry.x_star
        if diff.is_zero():
            raise RevokedError("this member key has been revoked")
        self.a = (entry.a_star - self.a) * pc.scalar_inv(diff)
        self.gpk = next_gpk(self.gpk, entry)

    def to_bytes(self) -> bytes:
        return pc.g1_to_bytes(self.a) + pc.scalar_to_bytes(self.x) + self.gpk.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "GroupMemberKey":
        a = pc.g1_from_bytes(data[:pc.G1_SIZE])
        x = pc.scalar_from_bytes(data[pc.G1_SIZE:pc.G1_SIZE + pc.SCALAR_SIZE])
        gpk = GroupPublicKey.from_bytes(data[pc.G1_SIZE + pc.SCALAR_SIZE:])
        return cls(a, x, gpk)


def _challenge(gpk: GroupPublicKey, msg: bytes, t1: G1, t2: G1, t3: G1,
               r1: G1, r2: G1, r3: GT, r4: G1, r5: G1) -> Fr:
    h = hashlib.sha512()
    h.update(gpk.fingerprint())
    h.update(len(msg).to_bytes(4, "big"))
    h.update(msg)
    for p in (t1, t2, t3, r1, r2):
        h.update(pc.g1_to_bytes(p))
    h.update(pc.gt_to_bytes(r3))
    h.update(pc.g1_to_bytes(r4))
    h.update(pc.g1_to_bytes(r5))
    return pc.scalar_from_int(int.from_bytes(h.digest(), "big"))


def gsign(gsk: GroupMemberKey, msg: bytes, rng: random.Random | None = None) -> bytes:
    gpk = gsk.gpk
    alpha, beta = pc.random_scalar(rng), pc.random_scalar(rng)
    t1 = gpk.u * alpha
    t2 = gpk.v * beta
    t3 = gsk.a + gpk.h * (alpha + beta)
    d1, d2 = gsk.x * alpha, gsk.x * beta

    ra, rb, rx, rd1, rd2 = (pc.random_scalar(rng) for _ in range(5))
    r1 = gpk.u * ra
    r2 = gpk.v * rb
    r3 = (pc.pairing(t3, gpk.g2) ** rx) * (gpk._e_hw ** (-ra - rb)) * (gpk._e_hg2 ** (-rd1 - rd2))
    r4 = t1 * rx - gpk.u * rd1
    r5 = t2 * rx - gpk.v * rd2

    c = _challenge(gpk, msg, t1, t2, t3, r1, r2, r3, r4, r5)
    s = (ra + c * alpha, rb + c * beta, rx + c * gsk.x, rd1 + c * d1, rd2 + c * d2)
    return b"".join(
        [pc.g1_to_bytes(t1), pc.g1_to_bytes(t2), pc.g1_to_bytes(t3), pc.scalar_to_bytes(c)]
        + [pc.scalar_to_bytes(e) for e in s]
    )


def _parse(sig: bytes) -> tuple[G1, G1, G1, Fr, list[Fr]]:
    if len(sig) != SIG_SIZE:
        raise pc.DecodeError("bad group signature length")
    n = pc.G1_SIZE
    t1 = pc.g1_from_bytes(sig[0:n])
    t2 = pc.g1_from_bytes(sig[n:2 * n])
    t3 = pc.g1_from_bytes(sig[2 * n:3 * n])
    off = 3 * n
    scalars = [pc.scalar_from_bytes(sig[off + i * 32: off + (i + 1) * 32]) for i in range(6)]
    return t1, t2, t3, scalars[0], scalars[1:]


def gverify(gpk: GroupPublicKey, msg: bytes, sig: bytes) -> bool:
    try:
        t1, t2, t3, c, (sa, sb, sx, sd1, sd2) = _parse(sig)
    except pc.DecodeError:
        return False
    r1 = gpk.u * sa - t1 * c
    r2 = gpk.v * sb - t2 * c
    r3 = (
        pc.pairing(t3, gpk.g2 * sx + gpk.w * c)
        * (gpk._e_hw ** (-sa - sb))
        * (gpk._e_hg2 ** (-sd1 - sd2))
        * (gpk._e_g1g2 ** (-c))
    )
    r4 = t1 * sx - gpk.u * sd1
    r5 = t2 * sx - gpk.v * sd2
    return _challenge(gpk, msg, t1, t2, t3, r1, r2, r3, r4, r5) == c


@dataclass
class _Member:
    identity: str
    x: Fr
    a_by_epoch: dict[int, G1]
    revoked: bool = False


class ManagerState:
    """Issuer and opener in one object. Mutations are serialized by a lock."""

    def __init__(self, rng: random.Random | None = None) -> None:
        self._rng = rng
        g1 = pc.G1_GEN * pc.random_scalar(rng)
        g2 = pc.G2_GEN * pc.random_scalar(rng)
        h = pc.G1_GEN * pc.random_scalar(rng)
        self._xi1 = pc.random_scalar(rng)
        self._xi2 = pc.random_scalar(rng)
        self._gamma = pc.random_scalar(rng)
        u = h * pc.scalar_inv(self._xi1)
        v = h * pc.scalar_inv(self._xi2)
        self.gpk = GroupPublicKey(g1, g2, h, u, v, g2 * self._gamma, 0)
        self.gpk_history: list[GroupPublicKey] = [self.gpk]
        self.revocations: list[RevocationEntry] = []
        self._members: list[_Member] = []
        self._by_a: dict[bytes, _Member] = {}
        self._lock = threading.Lock()

    @property
    def roster(self) -> list[str]:
        return [m.identity for m in self._members]

    def is_revoked(self, identity: str) -> bool:
        ms = [m for m in self._members if m.identity == identity]
        return bool(ms) and all(m.revoked for m in ms)

    def join(self, identity: str) -> GroupMemberKey:
        """Issue a key. Rejoining an active identity yields an additional fresh key."""
        with self._lock:
            if self.is_revoked(identity):
                raise RevokedError(f"{identity} is revoked")
            while True:
                x = pc.random_scalar(self._rng)
                s = self._gamma + x
                if not s.is_zero() and all(m.x != x for m in self._members):
                    break
            a = self.gpk.g1 * pc.scalar_inv(s)
            m = _Member(identity, x, {self.gpk.epoch: a})
            self._members.append(m)
            self._by_a[pc.g1_to_bytes(a)] = m
            return GroupMemberKey(a, x, self.gpk)

    def open(self, msg: bytes, sig: bytes) -> str:
        """Return the identity behind a valid signature under any past or current gpk."""
        try:
            t1, t2, t3, _, _ = _parse(sig)
        except pc.DecodeError as exc:
            raise GroupSigError("malformed signature") from exc
        if not any(gverify(g, msg, sig) for g in reversed(self.gpk_history)):
            raise GroupSigError("signature does not verify")
        a = t3 - t1 * self._xi1 - t2 * self._xi2
        m = self._by_a.get(pc.g1_to_bytes(a))
        if m is None:
            raise GroupSigError("signer not in roster")
        return m.identity

    def revoke(self, identity: str) -> list[RevocationEntry]:
        """Revoke every key issued to ``identity``; one entry (and epoch) per key."""
        with self._lock:
            targets = [m for m in self._members if m.identity == identity and not m.revoked]
            if not targets:
                raise GroupSigError(f"no active keys for {identity}")
            out = []
            for t in targets:
                epoch = self.gpk.epoch + 1
                s_inv = pc.scalar_inv(self._gamma + t.x)
                entry = RevocationEntry(epoch, t.a_by_epoch[self.gpk.epoch], t.x, self.gpk.g2 * s_inv)
                t.revoked = True
                for m in self._members:
                    if m.revoked:
                        continue
                    a_new = entry.a_star * pc.scalar_inv(self._gamma + m.x)
                    m.a_by_epoch[epoch] = a_new
                    self._by_a[pc.g1_to_bytes(a_new)] = m
                self.gpk = next_gpk(self.gpk, entry)
                self.gpk_history.append(self.gpk)
                self.revocations.append(entry)
                out.append(entry)
            return out


def gsetup(rng: random.Random | None = None) -> tuple[GroupPublicKey, ManagerState]:
    mgr = ManagerState(rng)
    return mgr.gpk, mgr
