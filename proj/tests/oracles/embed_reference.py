#!/usr/bin/env python3
"""Brute-force reference for the signed-hash trigram embedding.

Written from the algorithm description only; the values it prints are frozen
into tests/unit/test_features.cpp.
"""
import math
import re

FNV_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK = (1 << 64) - 1


def fnv1a64(data, basis):
    h = basis
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & MASK
    return h


def normalize(s):
    lowered = "".join(c.lower() if "A" <= c <= "Z" else c for c in s)
    return re.sub(r"[ \t\n\r\f\v]+", " ", lowered).strip(" \t\n\r\f\v")


def embed(s, dim=1024, seed=0x5EED):
    v = [0.0] * dim
    norm = normalize(s)
    if not norm:
        return v
    padded = "\x02" + norm + "\x03"
    for i in range(len(padded) - 2):
        h = fnv1a64(padded[i:i + 3].encode("utf-8"), FNV_BASIS ^ seed)
        v[h % dim] += -1.0 if h >> 63 else 1.0
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v] if n else v


def cosine(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    return dot / (na * nb) if na and nb else 0.0


if __name__ == "__main__":
    pairs = [("abc", "xyz"), ("Ordinary Shares", "ordinary share"), ("Total", "TOTAL  "),
             ("2024-03-05", "2024-03-15"), ("Chen Xiaoming", "Chen")]
    for a, b in pairs:
        print(f"cos({a!r}, {b!r}) = {cosine(embed(a), embed(b))!r}")
    for s in ["abc", "é"]:
        nz = [(i, x) for i, x in enumerate(embed(s)) if x != 0]
        print(f"nonzero({s!r}) = {nz!r}")
    print("cos16('abc','abd') =", repr(cosine(embed("abc", 16, 1), embed("abd", 16, 1))))
