import pathlib
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blindcash import wire
from blindcash.errors import MalformedMessage, UnknownType, UnknownVersion

FIXTURES = sorted((pathlib.Path(__file__).parent / "fixtures" / "wire").glob("*.bin"))

SAMPLES = [
    wire.Keys(registry_doc=b'{"version":1}'),
    wire.WithdrawReq(denom_id=b"\x01" * 32, f_blinded=b"\x02" * 8, bank_id="bank-1",
                     countersig_e=b"\x03" * 4, countersig_s=b"\x04" * 4),
    wire.WithdrawReq(denom_id=b"\x01" * 32, f_blinded=b"\x02" * 8, bank_id="bank-1"),
    wire.WithdrawResp(blind_sig=b"\x05" * 8),
    wire.DepositReq(denom_id=b"\x06" * 32, coin_pub=b"\x07" * 20, denom_sig=b"\x08" * 8,
                    amount=100, contract_hash=b"\x09" * 32, merchant_bank_id="bank-2",
                    merchant_id="m-1", coin_sig_e=b"\x0a" * 16, coin_sig_s=b"\x0b" * 16),
    wire.DepositResp(coin_pub=b"\x07" * 20, contract_hash=b"\x09" * 32,
                     amount=100, timestamp=1_700_000_000),
    wire.RefreshCommitReq(old_denom_id=b"\x0c" * 32, old_coin_pub=b"\x0d" * 20,
                          old_denom_sig=b"\x0e" * 8, target_denom_id=b"\x0f" * 32,
                          residual_claim=400,
                          commitments=[(b"\x10" * 20, b"\x11" * 8)] * 3,
                          coin_sig_e=b"\x12" * 16, coin_sig_s=b"\x13" * 16),
    wire.RefreshChallenge(session_id=b"\x14" * 32, gamma=2),
    wire.RefreshRevealReq(session_id=b"\x14" * 32, transfer_privs=[b"\x15" * 16] * 2),
    wire.RefreshRevealResp(status=wire.REFRESH_COMPLETED, blind_sig=b"\x16" * 8),
    wire.RefreshRevealResp(status=wire.REFRESH_FORFEITED),
    wire.LinkReq(coin_pub=b"\x07" * 20),
    wire.LinkResp(entries=[(b"\x17" * 20, b"\x18" * 8, b"\x19" * 32)] * 2),
    wire.LinkResp(entries=[]),
    wire.RevocationNotice(denom_id=b"\x1a" * 32),
    wire.RefundReq(denom_id=b"\x1a" * 32, coin_pub=b"\x07" * 20, denom_sig=b"\x08" * 8,
                   blinding=b"\x1b" * 8, bank_id="bank-1"),
    wire.RefundResp(credited=100),
    wire.Error(code="double-spend", detail="residual exhausted"),
]

ACCEPTED_ERRORS = (MalformedMessage, UnknownType, UnknownVersion)


class TestRoundTrip:
    @pytest.mark.parametrize("msg", SAMPLES, ids=lambda m: type(m).__name__)
    def test_decode_encode_identity(self, msg):
        data = wire.encode(msg)
        decoded = wire.decode(data)
        assert decoded == msg
        assert wire.encode(decoded) == data

    def test_all_types_covered(self):
        assert {type(m).TYPE for m in SAMPLES} == set(wire.MESSAGE_TYPES)

    def test_encoding_is_injective_on_samples(self):
        blobs = [wire.encode(m) for m in SAMPLES]
        assert len(set(blobs)) == len(blobs)


class TestGoldenFixtures:
    def test_fixture_corpus_present(self):
        assert len(FIXTURES) == len(wire.MESSAGE_TYPES)

    @pytest.mark.parametrize("path", FIXTURES, ids=lambda p: p.stem)
    def test_decode_encode_identity_on_fixture(self, path):
        data = path.read_bytes()
        msg = wire.decode(data)
        assert msg.TYPE == int(path.stem.split("_")[0])
        assert wire.encode(msg) == data

    @pytest.mark.parametrize("path", FIXTURES, ids=lambda p: p.stem)
    def test_fixture_within_size_budget(self, path):
        # full protocol messages at 2048-bit keys stay in the 1-10 KB band
        assert path.stat().st_size <= 10_240


class TestMalformed:
    def test_short_header(self):
        with pytest.raises(MalformedMessage):
            wire.decode(b"\x01\x02")

    def test_unknown_version(self):
        data = bytearray(wire.encode(SAMPLES[0]))
        data[0] = 9
        with pytest.raises(UnknownVersion):
            wire.decode(bytes(data))

    def test_unknown_type(self):
        data = bytearray(wire.encode(SAMPLES[0]))
        data[1] = 200
        with pytest.raises(UnknownType):
            wire.decode(bytes(data))

    @pytest.mark.parametrize("msg", SAMPLES, ids=lambda m: type(m).__name__)
    def test_truncations_rejected(self, msg):
        data = wire.encode(msg)
        for cut in range(len(data)):
            with pytest.raises(ACCEPTED_ERRORS):
                wire.decode(data[:cut])

    def test_trailing_bytes_rejected(self):
        data = wire.encode(SAMPLES[0])
        with pytest.raises(MalformedMessage):
            wire.decode(data + b"\x00")

    def test_declared_length_mismatch(self):
        data = bytearray(wire.encode(wire.RefundResp(credited=5)))
        data[5] += 1  # declared body_len no longer matches
        with pytest.raises(MalformedMessage):
            wire.decode(bytes(data))

    def test_oversized_field_rejected_on_encode(self):
        with pytest.raises(MalformedMessage):
            wire.encode(wire.RefundResp(credited=2**64))
        with pytest.raises(MalformedMessage):
            wire.encode(wire.RevocationNotice(denom_id=b"\x00" * 31))
        with pytest.raises(MalformedMessage):
            wire.encode(wire.LinkReq(coin_pub=b"\x00" * 70_000))


class TestFuzz:
    def test_seeded_corpus(self):
        rng = random.Random(0xFADE)
        valid = [wire.encode(m) for m in SAMPLES]
        decoded = 0
        for i in range(20_000):
            if i % 2:
                blob = bytearray(valid[rng.randrange(len(valid))])
                for _ in range(rng.randrange(1, 8)):
                    blob[rng.randrange(len(blob))] = rng.randrange(256)
                data = bytes(blob)
            else:
                data = rng.randbytes(rng.randrange(0, 128))
            try:
                wire.decode(data)
                decoded += 1
            except ACCEPTED_ERRORS:
                pass
        assert decoded > 0  # some mutations only touch value bytes

    @given(st.binary(max_size=4096))
    @settings(max_examples=300, deadline=None)
    def test_arbitrary_bytes_never_crash(self, data):
        try:
            msg = wire.decode(data)
        except ACCEPTED_ERRORS:
            return
        assert wire.encode(msg) == data  # decode o encode identity
