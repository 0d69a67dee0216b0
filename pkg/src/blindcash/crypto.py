"""Mathematical primitives: RSA blind signatures over a full-domain hash,
Schnorr signatures and Diffie-Hellman key exchange over a prime-order
subgroup, and the derivation that turns a shared transfer secret into a
fresh (blinding factor, coin key) pair.

Everything here is a pure function over big integers and byte strings.
Randomness is always injected (any object exposing ``randrange`` and
``getrandbits``, e.g. ``random.Random`` or ``random.SystemRandom``); there is
no hidden global state, so identical seeds give bit-identical transcripts.

Big integers are encoded fixed-width big-endian, width = byte length of the
relevant modulus; those encodings are normative for the wire format and for
every hash input.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import hashlib
import math
import threading
from dataclasses import dataclass

import gmpy2

from .errors import FdhExhausted, InvalidPoint, KeygenError

# ---------------------------------------------------------------------------
# Encodings

def int_to_bytes(x: int, width: int) -> bytes:
    """Canonical fixed-width big-endian encoding."""
    return int(x).to_bytes(width, "big")


def int_from_bytes(b: bytes) -> int:
    return int.from_bytes(b, "big")


def byte_width(modulus: int) -> int:
    return (modulus.bit_length() + 7) // 8


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


# ---------------------------------------------------------------------------
# Fast modular exponentiation
#
# gmpy2 backs all general modexp. RSA private-key operations additionally try
# libcrypto's BN_mod_exp, which is markedly faster than GMP on x86-64 and is
# what lets a single core clear ~1000 RSA-2048 blind signatures per second on
# modest hardware. The binding is optional; everything falls back to gmpy2.

class _LibCryptoModExp:
    def __init__(self):
        name = ctypes.util.find_library("crypto")
        if not name:
            raise OSError("libcrypto not found")
        lib = ctypes.CDLL(name)
        lib.BN_new.restype = ctypes.c_void_p
        lib.BN_free.argtypes = [ctypes.c_void_p]
        lib.BN_CTX_new.restype = ctypes.c_void_p
        lib.BN_bin2bn.restype = ctypes.c_void_p
        lib.BN_bin2bn.argtypes = [ctypes.c_char_p, ctypes.c_int, ctypes.c_void_p]
        lib.BN_mod_exp.restype = ctypes.c_int
        lib.BN_mod_exp.argtypes = [ctypes.c_void_p] * 4 + [ctypes.c_void_p]
        lib.BN_bn2bin.restype = ctypes.c_int
        lib.BN_bn2bin.argtypes = [ctypes.c_void_p, ctypes.c_char_p]
        self._lib = lib
        self._local = threading.local()
        # smoke test so a broken binding disables the fast path at import
        if self.powmod(2, 10, 1000) != 24:
            raise OSError("libcrypto BN_mod_exp smoke test failed")

    def _ctx(self):
        ctx = getattr(self._local, "ctx", None)
        if ctx is None:
            ctx = self._lib.BN_CTX_new()
            self._local.ctx = ctx
        return ctx

    def powmod(self, base: int, exp: int, mod: int) -> int:
        lib = self._lib

        def bn(x: int):
            raw = x.to_bytes((x.bit_length() + 7) // 8 or 1, "big")
            return lib.BN_bin2bn(raw, len(raw), None)

        b, e, m, r = bn(base), bn(exp), bn(mod), lib.BN_new()
        try:
            if not lib.BN_mod_exp(r, b, e, m, self._ctx()):
                raise OSError("BN_mod_exp failed")
            out = ctypes.create_string_buffer((mod.bit_length() + 7) // 8)
            n = lib.BN_bn2bin(r, out)
            return int.from_bytes(out.raw[:n], "big")
        finally:
            for x in (b, e, m, r):
                lib.BN_free(x)


try:
    _fast_modexp = _LibCryptoModExp()
except OSError:
    _fast_modexp = None

# below this modulus size the binding overhead outweighs the win
_FAST_PATH_MIN_BITS = 512


def powmod(base: int, exp: int, mod: int) -> int:
    return int(gmpy2.powmod(base, exp, mod))


# ---------------------------------------------------------------------------
# RSA keys

@dataclass(frozen=True)
class RsaPublicKey:
    """Denomination public key (e, n)."""

    e: int
    n: int

    def __post_init__(self):
        if not (1 < self.e < self.n):
            raise KeygenError(f"public exponent {self.e} outside (1, n)")

    @property
    def width(self) -> int:
        return byte_width(self.n)

    def encode(self) -> bytes:
        w = self.width
        return int_to_bytes(self.e, w) + int_to_bytes(self.n, w)

    def fingerprint(self) -> bytes:
        return sha256(self.encode())


@dataclass(frozen=True)
class RsaPrivateKey:
    """Private exponent plus the prime factors, kept for CRT acceleration.

    d*e = 1 (mod phi(n)) is established at generation time; the private key
    itself does not carry e.
    """

    d: int
    p: int
    q: int
    n: int

    def __post_init__(self):
        if self.p == self.q:
            raise KeygenError("prime factors must be distinct")
        if self.p * self.q != self.n:
            raise KeygenError("n != p*q")

    @property
    def width(self) -> int:
        return byte_width(self.n)

    def crt_parts(self):
        dp = self.d % (self.p - 1)
        dq = self.d % (self.q - 1)
        qinv = pow(self.q, -1, self.p)
        return dp, dq, qinv


def _is_prime(x: int) -> bool:
    return bool(gmpy2.is_prime(x, 40))


def _sample_prime(bits: int, rng) -> int:
    # top two bits set so the product of two such primes is full length
    while True:
        cand = rng.getrandbits(bits) | (1 << (bits - 1)) | (1 << (bits - 2)) | 1
        if _is_prime(cand):
            return cand


def rsa_keygen(bits: int, e: int, rng) -> tuple[RsaPublicKey, RsaPrivateKey]:
    """Generate an RSA key pair with primes of bits/2 each.

    Primes are resampled (bounded) when gcd(e, phi(n)) != 1.
    """
    if bits < 16 or bits % 2:
        raise KeygenError(f"modulus size {bits} must be even and >= 16")
    if e < 3 or e % 2 == 0:
        raise KeygenError(f"public exponent {e} must be odd and >= 3")
    for _ in range(64):
        p = _sample_prime(bits // 2, rng)
        q = _sample_prime(bits // 2, rng)
        if p == q:
            continue
        phi = (p - 1) * (q - 1)
        if math.gcd(e, phi) != 1:
            continue
        return rsa_key_from_primes(p, q, e)
    raise KeygenError(f"no keypair with gcd(e={e}, phi)=1 after 64 attempts")


def rsa_key_from_primes(p: int, q: int, e: int) -> tuple[RsaPublicKey, RsaPrivateKey]:
    """Build a key pair from explicit primes (toy vectors, regression keys)."""
    if p == q or not _is_prime(p) or not _is_prime(q):
        raise KeygenError("p and q must be distinct primes")
    phi = (p - 1) * (q - 1)
    if math.gcd(e, phi) != 1:
        raise KeygenError(f"gcd(e={e}, phi={phi}) != 1")
    n = p * q
    d = pow(e, -1, phi)
    return RsaPublicKey(e=e, n=n), RsaPrivateKey(d=d, p=p, q=q, n=n)


def _rsa_private_op(priv: RsaPrivateKey, m: int) -> int:
    """m^d mod n via CRT; libcrypto fast path for deployment-size moduli."""
    dp, dq, qinv = priv.crt_parts()
    if _fast_modexp is not None and priv.n.bit_length() >= _FAST_PATH_MIN_BITS:
        m1 = _fast_modexp.powmod(m % priv.p, dp, priv.p)
        m2 = _fast_modexp.powmod(m % priv.q, dq, priv.q)
    else:
        m1 = powmod(m % priv.p, dp, priv.p)
        m2 = powmod(m % priv.q, dq, priv.q)
    h = (qinv * (m1 - m2)) % priv.p
    return m2 + h * priv.q


def rsa_sign(priv: RsaPrivateKey, m: int) -> int:
    """Plain RSA signature s = m^d mod n. The caller must FDH-reduce first;
    m >= n is a contract violation."""
    if not 0 <= m < priv.n:
        raise ValueError(f"message {m} outside [0, n); apply fdh first")
    return _rsa_private_op(priv, m)


def rsa_verify(pub: RsaPublicKey, m: int, s: int) -> bool:
    """True iff s^e = m (mod n)."""
    if not 0 <= m < pub.n or not 0 <= s < pub.n:
        return False
    return powmod(s, pub.e, pub.n) == m % pub.n


# ---------------------------------------------------------------------------
# Blinding

def sample_blinding(n: int, rng) -> int:
    """Uniform unit of the residue ring mod n (resamples until gcd(b,n)=1)."""
    if n < 3:
        raise ValueError("modulus too small")
    while True:
        b = rng.randrange(1, n)
        if math.gcd(b, n) == 1:
            return b


def blind(f: int, b: int, pub: RsaPublicKey) -> int:
    """f' = f * b^e mod n."""
    if not 0 <= f < pub.n:
        raise ValueError(f"value {f} outside [0, n)")
    return (f * powmod(b, pub.e, pub.n)) % pub.n


def blind_sign(priv: RsaPrivateKey, f_blinded: int) -> int:
    """s' = (f')^d mod n, computed without ever seeing f."""
    if not 0 <= f_blinded < priv.n:
        raise ValueError(f"blinded value {f_blinded} outside [0, n)")
    return _rsa_private_op(priv, f_blinded)


def unblind(s_blinded: int, b: int, n: int) -> int:
    """s = s' * b^-1 mod n; requires gcd(b, n) = 1."""
    return (s_blinded * pow(b, -1, n)) % n


# ---------------------------------------------------------------------------
# Full-domain hash
#
# Counter-mode SHA-256 expansion to the bit length of n, interpreted
# big-endian; the attempt counter increments while f >= n or gcd(f, n) != 1.

_FDH_MAX_ATTEMPTS = 256


def fdh(n: int, msg: bytes) -> int:
    """Deterministic hash of msg into the unit group of the ring mod n."""
    if n < 3:
        raise ValueError("modulus too small")
    nbits = n.bit_length()
    nbytes = (nbits + 7) // 8
    for attempt in range(_FDH_MAX_ATTEMPTS):
        buf = b""
        block = 0
        while len(buf) < nbytes:
            buf += sha256(
                b"fdh" + attempt.to_bytes(4, "big") + block.to_bytes(4, "big") + msg
            )
            block += 1
        f = int.from_bytes(buf[:nbytes], "big") >> (8 * nbytes - nbits)
        if 1 <= f < n and math.gcd(f, n) == 1:
            return f
    raise FdhExhausted(f"no unit found in {_FDH_MAX_ATTEMPTS} attempts")


# ---------------------------------------------------------------------------
# Prime-order subgroup

@dataclass(frozen=True)
class GroupParams:
    """Domain parameters (p, q, g): g generates the order-q subgroup of Z_p*.

    Working in a prime-order subgroup (rather than with a primitive root)
    and checking membership of every received element is the hardening that
    blocks small-subgroup key-recovery attacks.
    """

    p: int
    q: int
    g: int

    def __post_init__(self):
        if (self.p - 1) % self.q != 0:
            raise KeygenError("q does not divide p-1")
        if self.g <= 1 or self.g >= self.p:
            raise KeygenError("generator outside (1, p)")
        if powmod(self.g, self.q, self.p) != 1:
            raise KeygenError("g^q != 1 (mod p)")

    @property
    def element_width(self) -> int:
        return byte_width(self.p)

    @property
    def scalar_width(self) -> int:
        return byte_width(self.q)

    def is_member(self, x: int) -> bool:
        """Subgroup membership: 1 < x < p and x^q = 1 (mod p)."""
        return 1 < x < self.p and powmod(x, self.q, self.p) == 1

    def encode_element(self, x: int) -> bytes:
        return int_to_bytes(x, self.element_width)

    def encode_scalar(self, x: int) -> bytes:
        return int_to_bytes(x, self.scalar_width)


@dataclass(frozen=True)
class GroupKeyPair:
    priv: int
    pub: int


def group_keygen(params: GroupParams, rng) -> GroupKeyPair:
    """Key pair (x, g^x) with x uniform in [1, q)."""
    x = rng.randrange(1, params.q)
    return GroupKeyPair(priv=x, pub=int(powmod(params.g, x, params.p)))


def kx(priv: int, peer_pub: int, params: GroupParams) -> bytes:
    """Diffie-Hellman shared secret: canonical encoding of peer_pub^priv.

    The peer element must be a member of the order-q subgroup; anything
    else (including the degenerate 1) raises InvalidPoint.
    """
    if not params.is_member(peer_pub):
        raise InvalidPoint(f"element not in the order-{params.q} subgroup")
    k = powmod(peer_pub, priv, params.p)
    return params.encode_element(int(k))


# ---------------------------------------------------------------------------
# Schnorr signatures with the same keys as the key exchange

@dataclass(frozen=True)
class CoinSignature:
    e: int
    s: int


def _schnorr_challenge(R: int, pub: int, msg: bytes, params: GroupParams) -> int:
    h = sha256(
        b"coin-sig" + params.encode_element(R) + params.encode_element(pub) + msg
    )
    return int.from_bytes(h, "big") % params.q


def coin_sign(priv: int, msg: bytes, params: GroupParams, rng) -> CoinSignature:
    """Schnorr signature; one group keypair serves both signing and kx."""
    pub = int(powmod(params.g, priv, params.p))
    k = rng.randrange(1, params.q)
    R = int(powmod(params.g, k, params.p))
    e = _schnorr_challenge(R, pub, msg, params)
    s = (k + e * priv) % params.q
    return CoinSignature(e=e, s=s)


def coin_sig_verify(pub: int, msg: bytes, sig: CoinSignature, params: GroupParams) -> bool:
    if not params.is_member(pub):
        return False
    if not (0 <= sig.e < params.q and 0 <= sig.s < params.q):
        return False
    # g^s * pub^(-e) = R; pub^q = 1 makes q-e a valid negative exponent
    R = (powmod(params.g, sig.s, params.p)
         * powmod(pub, (params.q - sig.e) % params.q, params.p)) % params.p
    return _schnorr_challenge(int(R), pub, msg, params) == sig.e


# ---------------------------------------------------------------------------
# Refresh-secret derivation

@dataclass(frozen=True)
class RefreshDerivation:
    """Deterministic (blinding factor, coin private key) from one transfer
    secret and the target denomination."""

    b: int
    c: int


def _expand(seed: bytes, nbytes: int) -> bytes:
    out = b""
    i = 0
    while len(out) < nbytes:
        out += sha256(seed + i.to_bytes(4, "big"))
        i += 1
    return out[:nbytes]


def derive_refresh(K: bytes, denom_pub: RsaPublicKey, params: GroupParams) -> RefreshDerivation:
    """Derive (b_i, c_i) from transfer secret K_i.

    b_i: fdh-style rejection sampling over the target modulus, seeded by
    K || "blind".  c_i: reduction of an expanded hash of K || "coin" into
    [1, q). The two labels domain-separate the outputs.
    """
    b = fdh(denom_pub.n, K + b"blind")
    qbits = params.q.bit_length()
    # 64 extra bits make the mod-(q-1) bias negligible
    raw = int.from_bytes(_expand(K + b"coin", (qbits + 64 + 7) // 8), "big")
    c = raw % (params.q - 1) + 1
    return RefreshDerivation(b=b, c=c)


# ---------------------------------------------------------------------------
# Deployment profiles
#
# The 2048-bit group below has a 256-bit prime-order subgroup; the toy group
# is 160/128-bit. Both were produced by tools/gen_group.py, which derives
# candidates from a SHA-256 counter stream over a fixed seed tag, so the
# constants are reproducible; tests re-verify the primality and subgroup
# structure.

FULL_GROUP = GroupParams(
    p=int(
        "A485DDFE57C8F90AC6E4FDB4767A2705AC81B73F7DC1F424601820192F407E5B"
        "48518CEFCCFD84E33A1E797CE15F3F78814A7B587D2DD29A1BFC61CCBF9E38D6"
        "334F75C9C4E04EAEDE864B4858A5C21E7566CDCE947FC3DEC2261B08108407E4"
        "763F945C9DD7101B1E144E272C5A60A4F90166969F702397536F71E4940DBE82"
        "F77625F097F60768F8725B0DBAE7DD816355F07FCF61DDFC08014454233DADB1"
        "AE76CB25268C5945C0647ABB99C5148D47191A4D26DB9F2FFA9DBB6F9DE906B5"
        "40D7344DCD20C3DB9C81774B1C07A068236579D18704D151956CEB9AFA140410"
        "CAE241622F07CA97EE3EE6D23DF7BC6AB49B3AFFFDCD0D4EE07BDCFE0DE4DF6F",
        16,
    ),
    q=int("AD45843CA75F670D9E2722D39C8DEEE7231CD400E4DC63E917C9644387F1CA6D", 16),
    g=int(
        "170D19977C65ED0E4D8AED8BF27BD70E4641EEADECBEBB9AE7A0CCB4184696F3"
        "CFC1BE4BFA1B0E9E419FDB80D8D9F98D69514B5F787591FE41B4C8E8BD4FD671"
        "CDB0C2BBD5BF18B106FED7869C4306285F44470BEE7973BB7F9D2E090DBCDF25"
        "381BC380C03876975A844968EF30755E407DE3800261348517AB4240FEEAEEFA"
        "0AD198A33D1920634A72FD8034F9A590F126283601CE964BB08A078B66EA35D4"
        "87E179BA2F112F6A1EEBBE1B3A88A4CB704EF977E4067ED955B8A2DA16C56D27"
        "F74FBDF482BC1D8C8B019C57F58DA9860D329AC953E3F56A65389B7A88024708"
        "F7E9B89FCCF14C19BFCB52E548CE22C176C70F94E0C972E593C5F6C792EF2B1E",
        16,
    ),
)

TOY_GROUP = GroupParams(
    p=0x94D93C8BE08087E5A0D56E1C1E87211EEBE70475,
    q=0xD36FEC9A8768DD63905E5C5CD55342D3,
    g=0x0A6366AE4EAA52FC640D9CE66CA98463CB1EB415,
)


@dataclass(frozen=True)
class CryptoProfile:
    """Bundle of key sizes and group parameters for one deployment mode."""

    name: str
    rsa_bits: int
    rsa_e: int
    group: GroupParams


# Deployment mode: RSA-2048, e=65537, 2048-bit group / 256-bit subgroup.
FULL_PROFILE = CryptoProfile(name="full", rsa_bits=2048, rsa_e=65537, group=FULL_GROUP)

# Test mode: small enough for thousands of protocol runs per second while
# keeping coin keys collision-free. The exhaustive n=55 / (p=23,q=11,g=2)
# oracle parameters live in the test suite, built via rsa_key_from_primes.
TOY_PROFILE = CryptoProfile(name="toy", rsa_bits=128, rsa_e=65537, group=TOY_GROUP)

PROFILES = {p.name: p for p in (FULL_PROFILE, TOY_PROFILE)}
