"""Pure-Python coordination kernels.

Same contract as the compiled twin in _speedups.pyx: tags are int pairs
(time, microstep), delay matrices are flat n*n lists with -1 marking the
absence of a connection. Keep the two implementations in lockstep.
"""

from __future__ import annotations

BACKEND_NAME = "pure"

TIME_MIN = -(2**63)
TIME_MAX = 2**63 - 1
MICROSTEP_MAX = 2**32 - 1


def tag_add(t: int, m: int, delay: int) -> tuple[int, int]:
    # sentinel absorption, then saturating add (see tags.tag_add_delay)
    if t == TIME_MIN or (t == TIME_MAX and m == MICROSTEP_MAX):
        return (t, m)
    if delay == 0:
        if m >= MICROSTEP_MAX:
            return (TIME_MAX, MICROSTEP_MAX)
        return (t, m + 1)
    t2 = t + delay
    if t2 >= TIME_MAX:
        return (TIME_MAX, MICROSTEP_MAX)
    return (t2, 0)


def eimt_solve(n: int, alpha: list[int], net: list[int]) -> list[int]:
    """Greatest fixpoint of the earliest-incoming-message-tag equations.

    net is a flat [t0, m0, t1, m1, ...] vector of reported next-event tags;
    the result uses the same layout. A node with no upstream connections
    keeps the FOREVER sentinel. Iteration starts at the top of the tag
    lattice and only descends, so the limit dominates every other solution.
    """
    et = [TIME_MAX] * n
    em = [MICROSTEP_MAX] * n
    for _ in range(n + 2):
        changed = False
        for f in range(n):
            bt, bm = TIME_MAX, MICROSTEP_MAX
            has_upstream = False
            for u in range(n):
                a = alpha[u * n + f]
                if a < 0:
                    continue
                has_upstream = True
                ut, um = et[u], em[u]
                nt, nm = net[2 * u], net[2 * u + 1]
                if (nt, nm) < (ut, um):
                    ut, um = nt, nm
                ct, cm = tag_add(ut, um, a)
                if (ct, cm) < (bt, bm):
                    bt, bm = ct, cm
            if has_upstream and (bt, bm) != (et[f], em[f]):
                et[f], em[f] = bt, bm
                changed = True
        if not changed:
            break
    out = []
    for f in range(n):
        out.append(et[f])
        out.append(em[f])
    return out


def rule1_grants(n: int, alpha: list[int], ltc: list[int], f: int) -> list[tuple[int, int, int]]:
    """Completion-based grant candidates for every destination of f.

    For each d downstream of f, the candidate is the smallest
    tag_add(LTC[u], alpha[u][d]) over all upstream u of d. ltc is flat
    [t0, m0, ...]. Returns (d, time, microstep) triples.
    """
    out = []
    for d in range(n):
        if alpha[f * n + d] < 0:
            continue
        gt, gm = TIME_MAX, MICROSTEP_MAX
        for u in range(n):
            a = alpha[u * n + d]
            if a < 0:
                continue
            ct, cm = tag_add(ltc[2 * u], ltc[2 * u + 1], a)
            if (ct, cm) < (gt, gm):
                gt, gm = ct, cm
        out.append((d, gt, gm))
    return out
