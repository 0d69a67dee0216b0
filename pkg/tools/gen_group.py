#!/usr/bin/env python3
"""Regenerate the Schnorr-group constants hardcoded in blindcash.crypto.

Candidates are drawn from a SHA-256 counter stream over a fixed seed tag,
so the output is reproducible: q is the first prime in the stream with its
top bit set, p = q*m + 1 scans m candidates until prime, g = 2^((p-1)/q).

    python3 tools/gen_group.py blindcash-group-v1 2048 256
    python3 tools/gen_group.py blindcash-group-toy-v1 160 128
"""

import hashlib
import sys

import gmpy2


def stream(seed: bytes, label: bytes, nbytes: int) -> bytes:
    out = b""
    i = 0
    while len(out) < nbytes:
        out += hashlib.sha256(seed + b"/" + label + b"/" + i.to_bytes(4, "big")).digest()
        i += 1
    return out[:nbytes]


def generate(seed: bytes, pbits: int, qbits: int):
    qi = 0
    while True:
        cand = int.from_bytes(stream(seed, b"q%d" % qi, qbits // 8), "big")
        cand |= (1 << (qbits - 1)) | 1
        if gmpy2.is_prime(cand, 64):
            q = cand
            break
        qi += 1
    mi = 0
    while True:
        m = int.from_bytes(stream(seed, b"m%d" % mi, (pbits - qbits) // 8), "big")
        m |= 1 << (pbits - qbits - 1)
        m &= ~1
        p = q * m + 1
        if p.bit_length() == pbits and gmpy2.is_prime(p, 64):
            break
        mi += 1
    h = 2
    while True:
        g = pow(h, (p - 1) // q, p)
        if g != 1:
            break
        h += 1
    assert pow(g, q, p) == 1 and g != 1 and (p - 1) % q == 0
    return p, q, g


def main():
    seed = (sys.argv[1] if len(sys.argv) > 1 else "blindcash-group-v1").encode()
    pbits = int(sys.argv[2]) if len(sys.argv) > 2 else 2048
    qbits = int(sys.argv[3]) if len(sys.argv) > 3 else 256
    p, q, g = generate(seed, pbits, qbits)
    print(f"# seed={seed.decode()} pbits={pbits} qbits={qbits}")
    print("p = 0x%X" % p)
    print("q = 0x%X" % q)
    print("g = 0x%X" % g)


if __name__ == "__main__":
    main()
