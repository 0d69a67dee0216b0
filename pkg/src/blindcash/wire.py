"""Canonical binary wire format.

Every protocol interaction is an Envelope: version byte, message-type byte,
4-byte big-endian body length, body. Bodies are fixed field sequences; big
integers travel as 16-bit-length-prefixed big-endian byte strings whose
width equals the relevant modulus width, amounts as 8-byte big-endian minor
units, hashes as raw 32 bytes. The encoding is canonical (fixed field order,
explicit lengths), so encode is injective and re-encoding a decoded message
reproduces the input bytes bit-exactly.

Signatures are computed over encoded bodies: the helpers at the bottom
produce the exact byte strings both signer and verifier hash.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import MalformedMessage, UnknownType, UnknownVersion

VERSION = 1


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise MalformedMessage("truncated field")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def h32(self) -> bytes:
        return self.take(32)

    def b16(self) -> bytes:
        return self.take(struct.unpack(">H", self.take(2))[0])

    def b32(self) -> bytes:
        return self.take(struct.unpack(">I", self.take(4))[0])

    def s16(self) -> str:
        raw = self.b16()
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedMessage(f"invalid utf-8: {exc}") from None

    def done(self):
        if self.pos != len(self.data):
            raise MalformedMessage(f"{len(self.data) - self.pos} trailing bytes")


def _w_u8(out: bytearray, v: int):
    if not 0 <= v <= 0xFF:
        raise MalformedMessage(f"u8 out of range: {v}")
    out.append(v)


def _w_u32(out: bytearray, v: int):
    if not 0 <= v <= 0xFFFFFFFF:
        raise MalformedMessage(f"u32 out of range: {v}")
    out += struct.pack(">I", v)


def _w_u64(out: bytearray, v: int):
    if not 0 <= v <= 0xFFFFFFFFFFFFFFFF:
        raise MalformedMessage(f"u64 out of range: {v}")
    out += struct.pack(">Q", v)


def _w_h32(out: bytearray, v: bytes):
    if len(v) != 32:
        raise MalformedMessage(f"hash must be 32 bytes, got {len(v)}")
    out += v


def _w_b16(out: bytearray, v: bytes):
    if len(v) > 0xFFFF:
        raise MalformedMessage("byte string too long for u16 prefix")
    out += struct.pack(">H", len(v))
    out += v


def _w_b32(out: bytearray, v: bytes):
    if len(v) > 0xFFFFFFFF:
        raise MalformedMessage("byte string too long for u32 prefix")
    out += struct.pack(">I", len(v))
    out += v


def _w_s16(out: bytearray, v: str):
    _w_b16(out, v.encode("utf-8"))


_WRITERS = {
    "u8": _w_u8, "u32": _w_u32, "u64": _w_u64,
    "h32": _w_h32, "b16": _w_b16, "b32": _w_b32, "str": _w_s16,
}
_READERS = {
    "u8": _Reader.u8, "u32": _Reader.u32, "u64": _Reader.u64,
    "h32": _Reader.h32, "b16": _Reader.b16, "b32": _Reader.b32, "str": _Reader.s16,
}


def _write_field(out: bytearray, kind, value):
    if isinstance(kind, tuple):          # ("list", elem_kinds)
        _, elem = kind
        if len(value) > 0xFFFF:
            raise MalformedMessage("list too long for u16 count")
        out += struct.pack(">H", len(value))
        for item in value:
            if len(elem) == 1:
                _WRITERS[elem[0]](out, item)
            else:
                if len(item) != len(elem):
                    raise MalformedMessage("list element arity mismatch")
                for k, v in zip(elem, item):
                    _WRITERS[k](out, v)
    else:
        _WRITERS[kind](out, value)


def _read_field(r: _Reader, kind):
    if isinstance(kind, tuple):
        _, elem = kind
        count = struct.unpack(">H", r.take(2))[0]
        items = []
        for _ in range(count):
            if len(elem) == 1:
                items.append(_READERS[elem[0]](r))
            else:
                items.append(tuple(_READERS[k](r) for k in elem))
        return items
    return _READERS[kind](r)


class Message:
    """Base for wire messages; subclasses define TYPE and SCHEMA."""

    TYPE = 0
    SCHEMA: tuple = ()

    def encode_body(self) -> bytes:
        out = bytearray()
        for (name, kind) in self.SCHEMA:
            try:
                _write_field(out, kind, getattr(self, name))
            except (TypeError, struct.error) as exc:
                raise MalformedMessage(f"bad field {name}: {exc}") from None
        return bytes(out)

    @classmethod
    def decode_body(cls, body: bytes):
        r = _Reader(body)
        values = {name: _read_field(r, kind) for (name, kind) in cls.SCHEMA}
        r.done()
        return cls(**values)


@dataclass
class Keys(Message):
    """Published denomination registry document."""
    TYPE = 1
    SCHEMA = (("registry_doc", "b32"),)
    registry_doc: bytes


@dataclass
class WithdrawReq(Message):
    """Withdrawal of one blinded coin.

    On the wallet->gateway hop the countersignature fields are empty; the
    gateway fills them before forwarding to the mint.
    """
    TYPE = 2
    SCHEMA = (
        ("denom_id", "h32"),
        ("f_blinded", "b16"),
        ("bank_id", "str"),
        ("countersig_e", "b16"),
        ("countersig_s", "b16"),
    )
    denom_id: bytes
    f_blinded: bytes
    bank_id: str
    countersig_e: bytes = b""
    countersig_s: bytes = b""


@dataclass
class WithdrawResp(Message):
    TYPE = 3
    SCHEMA = (("blind_sig", "b16"),)
    blind_sig: bytes


@dataclass
class DepositReq(Message):
    """One coin paying part (or all) of one contract to a merchant account."""
    TYPE = 4
    SCHEMA = (
        ("denom_id", "h32"),
        ("coin_pub", "b16"),
        ("denom_sig", "b16"),
        ("amount", "u64"),
        ("contract_hash", "h32"),
        ("merchant_bank_id", "str"),
        ("merchant_id", "str"),
        ("coin_sig_e", "b16"),
        ("coin_sig_s", "b16"),
    )
    denom_id: bytes
    coin_pub: bytes
    denom_sig: bytes
    amount: int
    contract_hash: bytes
    merchant_bank_id: str
    merchant_id: str
    coin_sig_e: bytes
    coin_sig_s: bytes


@dataclass
class DepositResp(Message):
    """Identical bytes on idempotent replay: timestamp is the original
    entry's."""
    TYPE = 5
    SCHEMA = (
        ("coin_pub", "b16"),
        ("contract_hash", "h32"),
        ("amount", "u64"),
        ("timestamp", "u64"),
    )
    coin_pub: bytes
    contract_hash: bytes
    amount: int
    timestamp: int


@dataclass
class RefreshCommitReq(Message):
    """Cut-and-choose commitment: kappa transfer pubs with blinded change
    candidates; signed with the old coin's private key."""
    TYPE = 6
    SCHEMA = (
        ("old_denom_id", "h32"),
        ("old_coin_pub", "b16"),
        ("old_denom_sig", "b16"),
        ("target_denom_id", "h32"),
        ("residual_claim", "u64"),
        ("commitments", ("list", ("b16", "b16"))),
        ("coin_sig_e", "b16"),
        ("coin_sig_s", "b16"),
    )
    old_denom_id: bytes
    old_coin_pub: bytes
    old_denom_sig: bytes
    target_denom_id: bytes
    residual_claim: int
    commitments: list
    coin_sig_e: bytes = b""
    coin_sig_s: bytes = b""

    def signing_bytes(self) -> bytes:
        """Body prefix covered by the old coin's signature."""
        out = bytearray()
        for (name, kind) in self.SCHEMA[:-2]:
            _write_field(out, kind, getattr(self, name))
        return b"refresh-commit/" + bytes(out)


@dataclass
class RefreshChallenge(Message):
    TYPE = 7
    SCHEMA = (("session_id", "h32"), ("gamma", "u32"))
    session_id: bytes
    gamma: int


@dataclass
class RefreshRevealReq(Message):
    """Transfer privs t_i for all i != gamma, in ascending index order."""
    TYPE = 8
    SCHEMA = (("session_id", "h32"), ("transfer_privs", ("list", ("b16",))))
    session_id: bytes
    transfer_privs: list


REFRESH_COMPLETED = 0
REFRESH_FORFEITED = 1


@dataclass
class RefreshRevealResp(Message):
    TYPE = 9
    SCHEMA = (("status", "u8"), ("blind_sig", "b16"))
    status: int
    blind_sig: bytes = b""


@dataclass
class LinkReq(Message):
    TYPE = 10
    SCHEMA = (("coin_pub", "b16"),)
    coin_pub: bytes


@dataclass
class LinkResp(Message):
    """(transfer pub T_gamma, blind signature, target denomination) per
    completed refresh of the queried coin."""
    TYPE = 11
    SCHEMA = (("entries", ("list", ("b16", "b16", "h32"))),)
    entries: list


@dataclass
class RevocationNotice(Message):
    TYPE = 12
    SCHEMA = (("denom_id", "h32"),)
    denom_id: bytes


@dataclass
class RefundReq(Message):
    """Disclosure of (C, s, b) proving legitimate withdrawal of a revoked
    coin; credit goes to the named bank's reserve account."""
    TYPE = 13
    SCHEMA = (
        ("denom_id", "h32"),
        ("coin_pub", "b16"),
        ("denom_sig", "b16"),
        ("blinding", "b16"),
        ("bank_id", "str"),
    )
    denom_id: bytes
    coin_pub: bytes
    denom_sig: bytes
    blinding: bytes
    bank_id: str


@dataclass
class RefundResp(Message):
    TYPE = 14
    SCHEMA = (("credited", "u64"),)
    credited: int


@dataclass
class Error(Message):
    TYPE = 15
    SCHEMA = (("code", "str"), ("detail", "str"))
    code: str
    detail: str


MESSAGE_TYPES = {
    cls.TYPE: cls
    for cls in (
        Keys, WithdrawReq, WithdrawResp, DepositReq, DepositResp,
        RefreshCommitReq, RefreshChallenge, RefreshRevealReq,
        RefreshRevealResp, LinkReq, LinkResp, RevocationNotice,
        RefundReq, RefundResp, Error,
    )
}


def encode(msg: Message) -> bytes:
    body = msg.encode_body()
    return struct.pack(">BBI", VERSION, msg.TYPE, len(body)) + body


def decode(data: bytes) -> Message:
    """Parse an envelope. Raises MalformedMessage / UnknownType /
    UnknownVersion; never anything else, whatever the input."""
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise MalformedMessage("not a byte string")
    data = bytes(data)
    if len(data) < 6:
        raise MalformedMessage("short envelope header")
    version, msg_type, body_len = struct.unpack(">BBI", data[:6])
    if version != VERSION:
        raise UnknownVersion(f"version {version}")
    cls = MESSAGE_TYPES.get(msg_type)
    if cls is None:
        raise UnknownType(f"message type {msg_type}")
    body = data[6:]
    if len(body) != body_len:
        raise MalformedMessage(f"body length {len(body)} != declared {body_len}")
    return cls.decode_body(body)


# ---------------------------------------------------------------------------
# Signing payloads shared by signer and verifier

def withdraw_auth_bytes(denom_id: bytes, f_blinded: bytes) -> bytes:
    """Bytes a gateway countersigns to authorize one withdrawal."""
    out = bytearray(b"withdraw-auth/")
    _w_h32(out, denom_id)
    _w_b16(out, f_blinded)
    return bytes(out)


def deposit_sign_bytes(contract_hash: bytes, merchant_bank_id: str,
                       merchant_id: str, amount: int) -> bytes:
    """Bytes a coin signs to pay (contract, merchant account, amount)."""
    out = bytearray(b"deposit-auth/")
    _w_h32(out, contract_hash)
    _w_s16(out, merchant_bank_id)
    _w_s16(out, merchant_id)
    _w_u64(out, amount)
    return bytes(out)
