# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled coordination kernels. Mirror of _purekernel; keep in lockstep."""

from libc.stdint cimport int64_t

BACKEND_NAME = "compiled"

cdef int64_t C_TIME_MIN = <int64_t>(-9223372036854775807 - 1)
cdef int64_t C_TIME_MAX = <int64_t>9223372036854775807
cdef int64_t C_MICROSTEP_MAX = <int64_t>4294967295

TIME_MIN = C_TIME_MIN
TIME_MAX = C_TIME_MAX
MICROSTEP_MAX = C_MICROSTEP_MAX


cdef inline bint _lt(int64_t t1, int64_t m1, int64_t t2, int64_t m2) nogil:
    return t1 < t2 or (t1 == t2 and m1 < m2)


cdef inline void _add(int64_t t, int64_t m, int64_t delay,
                      int64_t *ot, int64_t *om) nogil:
    if t == C_TIME_MIN or (t == C_TIME_MAX and m == C_MICROSTEP_MAX):
        ot[0] = t
        om[0] = m
        return
    if delay == 0:
        if m >= C_MICROSTEP_MAX:
            ot[0] = C_TIME_MAX
            om[0] = C_MICROSTEP_MAX
        else:
            ot[0] = t
            om[0] = m + 1
        return
    if t > C_TIME_MAX - delay:
        ot[0] = C_TIME_MAX
        om[0] = C_MICROSTEP_MAX
        return
    ot[0] = t + delay
    om[0] = 0
    if ot[0] >= C_TIME_MAX:
        ot[0] = C_TIME_MAX
        om[0] = C_MICROSTEP_MAX


def tag_add(t, m, delay):
    cdef int64_t ot, om
    _add(<int64_t>t, <int64_t>m, <int64_t>delay, &ot, &om)
    return (ot, om)


def eimt_solve(n, alpha, net):
    cdef int cn = <int>n
    cdef int f, u, sweep
    cdef int64_t a, ut, um, nt, nm, ct, cm, bt, bm
    cdef bint changed, has_upstream
    cdef list et = [C_TIME_MAX] * cn
    cdef list em = [C_MICROSTEP_MAX] * cn

    for sweep in range(cn + 2):
        changed = False
        for f in range(cn):
            bt = C_TIME_MAX
            bm = C_MICROSTEP_MAX
            has_upstream = False
            for u in range(cn):
                a = <int64_t>alpha[u * cn + f]
                if a < 0:
                    continue
                has_upstream = True
                ut = <int64_t>et[u]
                um = <int64_t>em[u]
                nt = <int64_t>net[2 * u]
                nm = <int64_t>net[2 * u + 1]
                if _lt(nt, nm, ut, um):
                    ut = nt
                    um = nm
                _add(ut, um, a, &ct, &cm)
                if _lt(ct, cm, bt, bm):
                    bt = ct
                    bm = cm
            if has_upstream and (bt != <int64_t>et[f] or bm != <int64_t>em[f]):
                et[f] = bt
                em[f] = bm
                changed = True
        if not changed:
            break
    out = []
    for f in range(cn):
        out.append(et[f])
        out.append(em[f])
    return out


def rule1_grants(n, alpha, ltc, f):
    cdef int cn = <int>n
    cdef int cf = <int>f
    cdef int d, u
    cdef int64_t a, gt, gm, ct, cm
    out = []
    for d in range(cn):
        if <int64_t>alpha[cf * cn + d] < 0:
            continue
        gt = C_TIME_MAX
        gm = C_MICROSTEP_MAX
        for u in range(cn):
            a = <int64_t>alpha[u * cn + d]
            if a < 0:
                continue
            _add(<int64_t>ltc[2 * u], <int64_t>ltc[2 * u + 1], a, &ct, &cm)
            if _lt(ct, cm, gt, gm):
                gt = ct
                gm = cm
        out.append((d, gt, gm))
    return out
