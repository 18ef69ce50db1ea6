"""Kernel backends: the compiled and pure implementations must be
interchangeable, bit for bit, on every exported function."""

import os
import random
import subprocess
import sys

import pytest

from fedcoord import _kernel
from fedcoord._kernel import available_backends
from fedcoord.tags import FOREVER, NEVER, Tag, tag_add_delay

MS = 1_000_000
TIME_MAX = 2**63 - 1
MICROSTEP_MAX = 2**32 - 1

BACKENDS = available_backends()


def _random_alpha(rng, n):
    alpha = [-1] * (n * n)
    for u in range(n):
        for d in range(n):
            if u != d and rng.random() < 0.5:
                alpha[u * n + d] = rng.choice([0, MS, 3 * MS])
    return alpha


def _random_tagvec(rng, n):
    out = []
    for _ in range(n):
        roll = rng.random()
        if roll < 0.15:
            out.extend([TIME_MAX, MICROSTEP_MAX])  # FOREVER
        elif roll < 0.3:
            out.extend([-(2**63), 0])  # NEVER
        else:
            out.extend([rng.randrange(0, 50 * MS), rng.randrange(0, 3)])
    return out


def test_pure_backend_always_available():
    assert "pure" in BACKENDS
    assert BACKENDS["pure"].BACKEND_NAME == "pure"


def test_selected_backend_is_exported():
    assert _kernel.BACKEND in BACKENDS


def test_env_forces_pure_backend():
    out = subprocess.run(
        [sys.executable, "-c", "from fedcoord import _kernel; print(_kernel.BACKEND)"],
        capture_output=True,
        text=True,
        env={**os.environ, "FEDCOORD_PURE_KERNEL": "1"},
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "pure"


@pytest.mark.parametrize("name", sorted(BACKENDS))
class TestAgainstTagOracle:
    """Each backend's tag_add must match the reference Tag arithmetic."""

    def test_tag_add_matches_reference(self, name):
        mod = BACKENDS[name]
        rng = random.Random(7)
        for _ in range(2_000):
            t = rng.randrange(-(10**12), 10**12)
            m = rng.randrange(0, 10)
            d = rng.choice([0, 0, 1, MS, 5 * MS])
            assert mod.tag_add(t, m, d) == tuple(tag_add_delay(Tag(t, m), d))

    def test_tag_add_sentinels(self, name):
        mod = BACKENDS[name]
        assert mod.tag_add(NEVER.time, NEVER.microstep, 5 * MS) == tuple(NEVER)
        assert mod.tag_add(FOREVER.time, FOREVER.microstep, 0) == tuple(FOREVER)
        assert mod.tag_add(TIME_MAX - 1, 0, 10) == tuple(FOREVER)
        assert mod.tag_add(5, MICROSTEP_MAX, 0) == tuple(FOREVER)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="only one backend built")
class TestBackendEquivalence:
    def test_eimt_solve_identical(self):
        rng = random.Random(11)
        for _ in range(300):
            n = rng.randrange(1, 6)
            alpha = _random_alpha(rng, n)
            net = _random_tagvec(rng, n)
            results = {b: mod.eimt_solve(n, alpha, net) for b, mod in BACKENDS.items()}
            vals = list(results.values())
            assert all(list(v) == list(vals[0]) for v in vals), (n, alpha, net, results)

    def test_rule1_grants_identical(self):
        rng = random.Random(13)
        for _ in range(300):
            n = rng.randrange(1, 6)
            alpha = _random_alpha(rng, n)
            ltc = _random_tagvec(rng, n)
            f = rng.randrange(n)
            results = {
                b: mod.rule1_grants(n, alpha, ltc, f) for b, mod in BACKENDS.items()
            }
            vals = [sorted(tuple(g) for g in v) for v in results.values()]
            assert all(v == vals[0] for v in vals), (n, alpha, ltc, f, results)


class TestKernelSemantics:
    """Direct contracts on the selected backend (whichever it is)."""

    def test_eimt_no_upstream_is_forever(self):
        # 1 node, no edges
        out = _kernel.eimt_solve(1, [-1], [5 * MS, 0])
        assert (out[0], out[1]) == tuple(FOREVER)

    def test_eimt_single_edge(self):
        # A -> B, alpha 0, NET[A]=(5ms,0): B's bound is one microstep past
        out = _kernel.eimt_solve(
            2, [-1, 0, -1, -1], [5 * MS, 0, TIME_MAX, MICROSTEP_MAX]
        )
        assert (out[0], out[1]) == tuple(FOREVER)
        assert (out[2], out[3]) == (5 * MS, 1)

    def test_rule1_min_over_upstreams(self):
        # u0 -> d(2), u1 -> d(2), both alpha 0; grant bound is the smaller
        # completed tag advanced by the connection delay
        alpha = [-1] * 9
        alpha[0 * 3 + 2] = 0
        alpha[1 * 3 + 2] = 0
        ltc = [5 * MS, 0, 3 * MS, 0, -(2**63), 0]
        out = _kernel.rule1_grants(3, alpha, ltc, 0)
        assert [tuple(g) for g in out] == [(2, 3 * MS, 1)]

    def test_rule1_no_downstream(self):
        assert list(_kernel.rule1_grants(1, [-1], [0, 0], 0)) == []
