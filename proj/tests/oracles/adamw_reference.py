#!/usr/bin/env python3
"""Exact-rational AdamW reference for one step from zero moments.

Decoupled decay first (theta -= lr*wd*theta), then the bias-corrected Adam
update. Values printed here are frozen into the retriever tests.
"""
from fractions import Fraction as F
import math


def step(theta, g, lr, b1, b2, eps, wd):
    theta = theta - lr * wd * theta
    m = (1 - b1) * g
    v = (1 - b2) * g * g
    m_hat = m / (1 - b1)
    v_hat = v / (1 - b2)
    # sqrt of v_hat is exact here because v_hat == g*g.
    root = abs(g) if v_hat == g * g else F(math.sqrt(v_hat))
    return theta - lr * m_hat / (root + eps)


if __name__ == "__main__":
    cases = [
        (F(1), F(1)),
        (F(-3, 2), F(1, 4)),
        (F(2), F(-5)),
    ]
    for theta, g in cases:
        out = step(theta, g, F(2, 100000), F(9, 10), F(999, 1000), F(1, 10**8), F(1, 100))
        print(f"theta={theta} g={g} -> {float(out)!r}")
