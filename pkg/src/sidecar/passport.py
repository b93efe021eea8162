"""Shape checks for PASSporT payloads (RFC 8225, SHAKEN extension RFC 8588).

The channel itself carries opaque bytes; this only tells a provider whether a
payload looks like a compact-serialized PASSporT before publishing it. The
ES256 signature is not verified here since that needs the signer's
certificate chain from the ``x5u`` URL.
"""

from __future__ import annotations

import base64
import binascii
import json
from dataclasses import dataclass

ATTEST_LEVELS = ("A", "B", "C")


class PassportError(ValueError):
    pass


@dataclass(frozen=True)
class Passport:
    header: dict
    claims: dict
    signature: bytes

    @property
    def orig(self) -> str:
        return self.claims["orig"]["tn"]

    @property
    def dest(self) -> list[str]:
        return list(self.claims["dest"]["tn"])


def _segment(s: str) -> bytes:
    if not s or "=" in s:
        raise PassportError("segment is empty or padded")
    try:
        return base64.urlsafe_b64decode(s + "=" * (-len(s) % 4))
    except (binascii.Error, ValueError) as exc:
        raise PassportError("segment is not base64url") from exc


def _json_object(raw: bytes, what: str) -> dict:
    try:
        obj = json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise PassportError(f"{what} is not JSON") from exc
    if not isinstance(obj, dict):
        raise PassportError(f"{what} is not an object")
    return obj


def parse_passport(token: bytes | str) -> Passport:
    if isinstance(token, bytes):
        try:
            token = token.decode("ascii")
        except UnicodeDecodeError as exc:
            raise PassportError("token is not ASCII") from exc
    parts = token.strip().split(".")
    if len(parts) != 3:
        raise PassportError("expected header.payload.signature")
    header = _json_object(_segment(parts[0]), "header")
    claims = _json_object(_segment(parts[1]), "payload")
    sig = _segment(parts[2])

    if header.get("typ") != "passport" or header.get("alg") != "ES256":
        raise PassportError("header must carry typ=passport and alg=ES256")
    if not isinstance(header.get("x5u"), str):
        raise PassportError("header lacks x5u")
    if not isinstance(claims.get("iat"), int):
        raise PassportError("iat must be an integer")
    orig, dest = claims.get("orig"), claims.get("dest")
    if not (isinstance(orig, dict) and isinstance(orig.get("tn"), str)):
        raise PassportError("orig.tn missing")
    if not (isinstance(dest, dict) and isinstance(dest.get("tn"), list) and dest["tn"]
            and all(isinstance(t, str) for t in dest["tn"])):
        raise PassportError("dest.tn must be a non-empty list")
    if header.get("ppt") == "shaken":
        if claims.get("attest") not in ATTEST_LEVELS:
            raise PassportError("attest must be A, B or C")
        if not isinstance(claims.get("origid"), str):
            raise PassportError("origid missing")
    if len(sig) != 64:
        raise PassportError("ES256 signature must be 64 bytes")
    return Passport(header, claims, sig)


def is_passport(token: bytes | str) -> bool:
    try:
        parse_passport(token)
    except PassportError:
        return False
    return True
