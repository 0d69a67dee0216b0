"""Wire-level service endpoints and client stubs.

Endpoints turn envelope bytes into service calls and service results (or
ProtocolErrors) back into envelope bytes; client stubs present the same
Python surface as the underlying service objects, so wallets, merchants,
and gateways work identically whether wired directly or through the bus.
Customer/merchant authentication travels as transport metadata (origin,
credential), mirroring the secure-channel assumption; it is not part of the
canonical message bodies.
"""

from __future__ import annotations

from .. import wire
from ..crypto import sha256
from ..errors import ProtocolError, RefreshForfeited, from_code
from ..gateway import DepositReceipt


def _error_bytes(exc: ProtocolError) -> bytes:
    return wire.encode(wire.Error(code=exc.code, detail=exc.detail))


class MintEndpoint:
    """Serves /keys, /withdraw, /deposit, /refresh-commit, /refresh-reveal,
    /link, /refund."""

    def __init__(self, mint):
        self.mint = mint

    def handle(self, origin: str, credential: str, data: bytes) -> bytes:
        try:
            msg = wire.decode(data)
            if isinstance(msg, wire.Keys):
                return wire.encode(self.mint.keys_message())
            if isinstance(msg, wire.WithdrawReq):
                return wire.encode(self.mint.withdraw(msg))
            if isinstance(msg, wire.DepositReq):
                return wire.encode(self.mint.deposit(msg))
            if isinstance(msg, wire.RefreshCommitReq):
                return wire.encode(self.mint.refresh_commit(msg))
            if isinstance(msg, wire.RefreshRevealReq):
                try:
                    return wire.encode(self.mint.refresh_reveal(msg))
                except RefreshForfeited:
                    # a protocol outcome, not a transport error
                    return wire.encode(
                        wire.RefreshRevealResp(status=wire.REFRESH_FORFEITED))
            if isinstance(msg, wire.LinkReq):
                return wire.encode(self.mint.link(msg.coin_pub))
            if isinstance(msg, wire.RefundReq):
                return wire.encode(self.mint.refund_revoked(msg))
            raise ProtocolError(f"{type(msg).__name__} is not a mint request")
        except ProtocolError as exc:
            return _error_bytes(exc)


class GatewayEndpoint:
    """Serves /withdraw and /deposit-forward (plus refund forwarding) for
    authenticated customers and merchants."""

    def __init__(self, gateway):
        self.gateway = gateway

    def handle(self, origin: str, credential: str, data: bytes) -> bytes:
        try:
            msg = wire.decode(data)
            if isinstance(msg, wire.WithdrawReq):
                blind_sig = self.gateway.withdraw_for_customer(
                    origin, credential, msg.denom_id, msg.f_blinded)
                return wire.encode(wire.WithdrawResp(blind_sig=blind_sig))
            if isinstance(msg, wire.DepositReq):
                receipt = self.gateway.forward_deposit(origin, msg)
                return wire.encode(wire.DepositResp(
                    coin_pub=msg.coin_pub, contract_hash=msg.contract_hash,
                    amount=receipt.amount, timestamp=receipt.mint_timestamp))
            if isinstance(msg, wire.RefundReq):
                credited = self.gateway.forward_refund(origin, credential, msg)
                return wire.encode(wire.RefundResp(credited=credited))
            raise ProtocolError(f"{type(msg).__name__} is not a gateway request")
        except ProtocolError as exc:
            return _error_bytes(exc)


def _raise_if_error(msg):
    if isinstance(msg, wire.Error):
        raise from_code(msg.code, msg.detail)
    return msg


class MintClient:
    """Bus-side stand-in for a Mint; same method surface."""

    def __init__(self, bus, src: str, dst: str = "mint"):
        self.bus = bus
        self.src = src
        self.dst = dst

    def _rpc(self, msg) -> wire.Message:
        data = self.bus.rpc(self.src, self.dst, wire.encode(msg))
        return _raise_if_error(wire.decode(data))

    def keys_message(self) -> wire.Keys:
        return self._rpc(wire.Keys(registry_doc=b""))

    def withdraw(self, req: wire.WithdrawReq) -> wire.WithdrawResp:
        return self._rpc(req)

    def deposit(self, req: wire.DepositReq) -> wire.DepositResp:
        return self._rpc(req)

    def refresh_commit(self, req: wire.RefreshCommitReq) -> wire.RefreshChallenge:
        return self._rpc(req)

    def refresh_reveal(self, req: wire.RefreshRevealReq) -> wire.RefreshRevealResp:
        resp = self._rpc(req)
        if isinstance(resp, wire.RefreshRevealResp) and resp.status == wire.REFRESH_FORFEITED:
            raise RefreshForfeited("mint reported forfeiture")
        return resp

    def link(self, coin_pub: bytes) -> wire.LinkResp:
        return self._rpc(wire.LinkReq(coin_pub=coin_pub))

    def refund_revoked(self, req: wire.RefundReq) -> wire.RefundResp:
        return self._rpc(req)


class GatewayClient:
    """Bus-side stand-in for a BankGateway, for wallets and merchants."""

    def __init__(self, bus, src: str, dst: str, bank_id: str):
        self.bus = bus
        self.src = src
        self.dst = dst
        self.bank_id = bank_id

    def _rpc(self, msg, origin: str, credential: str) -> wire.Message:
        data = self.bus.rpc(self.src, self.dst, wire.encode(msg),
                            origin=origin, credential=credential)
        return _raise_if_error(wire.decode(data))

    def withdraw_for_customer(self, customer_id: str, secret: str,
                              denom_id: bytes, f_blinded: bytes) -> bytes:
        req = wire.WithdrawReq(denom_id=denom_id, f_blinded=f_blinded,
                               bank_id=self.bank_id)
        resp = self._rpc(req, origin=customer_id, credential=secret)
        return resp.blind_sig

    def forward_deposit(self, merchant_id: str, req: wire.DepositReq) -> DepositReceipt:
        resp = self._rpc(req, origin=merchant_id, credential="")
        dkey = sha256(req.coin_pub + req.contract_hash + req.amount.to_bytes(8, "big"))
        return DepositReceipt(
            merchant_id=merchant_id, coin_hash=dkey.hex(),
            contract_hash=resp.contract_hash, amount=resp.amount,
            mint_timestamp=resp.timestamp)

    def forward_refund(self, customer_id: str, secret: str,
                       req: wire.RefundReq) -> int:
        resp = self._rpc(req, origin=customer_id, credential=secret)
        return resp.credited
