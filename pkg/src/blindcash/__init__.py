"""Blind-signature token money: a central-bank mint, commercial-bank
gateways, customer wallets, and merchants exchanging blind-signed coins,
with online double-spend detection, cut-and-choose change, key revocation
refunds, and a range-sharded spent-coin store. ``blindcash.sim`` hosts the
deterministic in-process deployment and the CLI."""

__version__ = "0.1.0"
