#!/usr/bin/env python3
"""Independent generator for the integrated-key cipher test vectors.

Writes `sfv_vectors.txt` (one chain per line) and `rng_vectors.txt`.
Run from this directory: python3 gen_vectors.py
"""
import random

M64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def splitmix(state):
    state = (state + GAMMA) & M64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return state, z ^ (z >> 31)


def expand(seed, domain):
    folded = ((seed >> 64) ^ seed) & M64
    state = folded ^ domain
    state, a = splitmix(state)
    state, b = splitmix(state)
    return (a << 32) | (b >> 32)


def rng1(seed):
    return expand(seed, 0x01)


def rng2(seed):
    return expand(seed, 0x02)


def key_bytes(k1, k2, k3):
    return k1.to_bytes(12, "big") + k2.to_bytes(8, "big") + k3.to_bytes(12, "big")


def xor_packet(data, key):
    return bytes(b ^ key[i % 32] for i, b in enumerate(data))


def chain(loc, rtt, ident, packets):
    first_seg = int.from_bytes(packets[0][:12], "big")
    k1 = rng1(loc)
    k3 = rng2(rtt) ^ first_seg
    key = key_bytes(k1, ident, k3)
    out = []
    for p in packets:
        out.append(xor_packet(p, key))
        head = int.from_bytes(key[:16], "big")
        tail = int.from_bytes(key[16:], "big")
        key = key_bytes(rng1(head), ident, rng2(tail))
    return out


def main():
    rnd = random.Random(20111)
    with open("rng_vectors.txt", "w") as f:
        f.write("# kind seed_hex value_hex (96-bit output)\n")
        seeds = [0, 1, 0xFFFFFFFFFFFFFFFF, 1 << 64, (1 << 128) - 1]
        seeds += [rnd.getrandbits(64) for _ in range(4)]
        seeds += [rnd.getrandbits(128) for _ in range(4)]
        for s in seeds:
            f.write(f"rng1 {s:x} {rng1(s):024x}\n")
            f.write(f"rng2 {s:x} {rng2(s):024x}\n")
    with open("sfv_vectors.txt", "w") as f:
        f.write("# loc_seed rtt_seed id plaintext_packets ciphertext_packets (hex, packets joined by ':')\n")
        cases = [(0, 0, 0, [bytes(32)])]
        cases.append((0x0000002D00000064, 100, 0x0123456789ABCDEF, [bytes(range(32)), bytes(range(32, 96))]))
        for _ in range(8):
            loc = (rnd.randrange(360) << 32) | rnd.randrange(251)
            rtt = rnd.randrange(200)
            ident = rnd.getrandbits(64)
            n = rnd.randrange(1, 9)
            pkts = [bytes(rnd.getrandbits(8) for _ in range(32 * rnd.randrange(1, 4))) for _ in range(n)]
            cases.append((loc, rtt, ident, pkts))
        for loc, rtt, ident, pkts in cases:
            cts = chain(loc, rtt, ident, pkts)
            f.write(f"{loc:016x} {rtt:016x} {ident:016x} "
                    f"{':'.join(p.hex() for p in pkts)} {':'.join(c.hex() for c in cts)}\n")


if __name__ == "__main__":
    main()
