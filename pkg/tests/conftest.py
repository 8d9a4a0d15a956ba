import math

import numpy as np
import pytest

from vsprefill.attention import AttentionInputs


def random_inputs(n, d, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    q = scale * rng.standard_normal((n, d))
    k = scale * rng.standard_normal((n, d))
    v = rng.standard_normal((n, d))
    return AttentionInputs(q, k, v)


def brute_attention(q, k, v, allowed=None):
    """Loop-level causal (optionally masked) softmax attention; returns (O, A)."""
    n, d = q.shape
    scale = 1.0 / math.sqrt(d)
    a = np.zeros((n, n))
    for i in range(n):
        cols = [j for j in range(i + 1) if allowed is None or allowed[i][j]]
        logits = [sum(q[i, t] * k[j, t] for t in range(d)) * scale for j in cols]
        m = max(logits)
        w = [math.exp(x - m) for x in logits]
        z = sum(w)
        for j, wj in zip(cols, w):
            a[i, j] = wj / z
    return a @ v, a


@pytest.fixture
def tmp(tmp_path):
    return tmp_path


ACCEPTANCE = {}


def record(number, title, ok, detail):
    ACCEPTANCE[number] = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(ACCEPTANCE[number])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
