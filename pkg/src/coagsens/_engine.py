"""Compiled event engine for the coupled pair-merge processes.

Everything here is numba-jitted and operates on flat arrays owned by
:class:`coagsens.ensemble.CoupledState`; the public API lives in the
wrapper modules.  Layout (``cap`` = slot capacity, ``C`` = number of
distinct majorant factor components, classes 0 = plus-only, 1 = common,
2 = minus-only):

* ``mass[3, cap]``    int64 particle masses, 0 marks a dead slot
* ``leaf[3, C, cap]`` per-component sampling weights (0 when dead)
* ``bit[3, C, cap+1]`` Fenwick arrays over the leaves
* ``totals[3, C]``    running per-class component sums
* ``n_live[3]``, ``top[3]`` live counts and high-water slot marks
* ``free[3, cap]``, ``free_top[3]`` freed-slot stacks
* ``head[3, M+1]``, ``nxt[3, cap]``, ``prv[3, cap]`` per-mass bucket
  lists (``M`` = largest reachable mass), used by the opposite-label
  annihilation pass and by tests
* ``regs[2]``         float clock and pending waiting time
* ``iregs[4]``        steps-since-rebuild, the two conserved integer
  system masses, and the total event count
* ``counters[9]``     event tallies in the order 1a 1b 1c 2a 2b 2c 3a 3b
  fictitious
* ``rng[4]``          xoshiro256++ state (see ``coagsens.seeding``)

Random draw order is fixed: one uniform for the waiting time
(inverse-CDF), one for the class, then per selection stage one uniform
each (term mixture, tree descents, continuation gate, acceptance).
Self-pairs and failed acceptances consume no further draws.  A pending
waiting time is carried across output-time boundaries in ``regs[1]``
so sample paths do not depend on the reporting grid.

Incrementally maintained sums are rebuilt from the leaves every 2**16
events to stop float drift.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# -- event codes (match coagsens.ensemble.EVENT_NAMES) ----------------------
EV_1A = 0
EV_1B = 1
EV_1C = 2
EV_2A = 3
EV_2B = 4
EV_2C = 5
EV_3A = 6
EV_3B = 7
EV_FICT = 8

# -- advance() statuses ------------------------------------------------------
ST_REACHED = 0   # clock hit t_stop
ST_FROZEN = 1    # total majorant rate is zero
ST_EXTINCT = 2   # a watched system is down to <= 1 particle
ST_BUDGET = 3    # max_events applied

REBUILD_EVERY = 1 << 16

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_SM1 = np.uint64(0xBF58476D1CE4E5B9)
_SM2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S17 = np.uint64(17)
_S23 = np.uint64(23)
_S41 = np.uint64(41)
_S45 = np.uint64(45)
_S19 = np.uint64(19)
_INV53 = 2.0**-53


@njit(cache=True)
def rng_seed(seed, state):
    """Expand a 64-bit seed into xoshiro256++ state via SplitMix64."""
    z = seed
    for i in range(4):
        z = z + _GOLD
        w = z
        w = (w ^ (w >> _S30)) * _SM1
        w = (w ^ (w >> _S27)) * _SM2
        state[i] = w ^ (w >> _S31)
    if state[0] == 0 and state[1] == 0 and state[2] == 0 and state[3] == 0:
        state[0] = _GOLD


@njit(cache=True)
def rng_next(state):
    s0 = state[0]
    s1 = state[1]
    s2 = state[2]
    s3 = state[3]
    x = s0 + s3
    result = ((x << _S23) | (x >> _S41)) + s0
    t = s1 << _S17
    s2 = s2 ^ s0
    s3 = s3 ^ s1
    s1 = s1 ^ s2
    s0 = s0 ^ s3
    s2 = s2 ^ t
    s3 = (s3 << _S45) | (s3 >> _S19)
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3
    return result


@njit(cache=True)
def rng_uniform(state):
    return (rng_next(state) >> _S11) * _INV53


# -- Fenwick primitives ------------------------------------------------------


@njit(cache=True)
def _fw_add(bit1, slot, delta):
    n = bit1.shape[0] - 1
    i = slot + 1
    while i <= n:
        bit1[i] += delta
        i += i & (-i)


@njit(cache=True)
def _fw_prefix(bit1, k):
    # sum of the first k leaves
    s = 0.0
    i = k
    while i > 0:
        s += bit1[i]
        i -= i & (-i)
    return s


@njit(cache=True)
def _fw_find(bit1, target):
    """First slot whose cumulative weight exceeds ``target``."""
    n = bit1.shape[0] - 1
    idx = 0
    mask = 1
    while (mask << 1) <= n:
        mask <<= 1
    rem = target
    while mask != 0:
        probe = idx + mask
        if probe <= n and bit1[probe] <= rem:
            rem -= bit1[probe]
            idx = probe
        mask >>= 1
    return idx


@njit(cache=True)
def _pick_live(mass, c, top, idx):
    # guard against float-edge descents landing on a dead slot
    j = idx
    if j >= top[c]:
        j = top[c] - 1
    while j >= 0 and mass[c, j] == 0:
        j -= 1
    if j < 0:
        j = idx + 1
        while j < top[c] and mass[c, j] == 0:
            j += 1
        if j >= top[c]:
            return -1
    return j


@njit(cache=True)
def _sample_slot(mass, bit, c, comp, top, total, u):
    idx = _fw_find(bit[c, comp], u * total)
    if mass[c, idx] == 0:
        idx = _pick_live(mass, c, top, idx)
    return idx


# -- weights and kernels -----------------------------------------------------


@njit(cache=True)
def _cweight(coef, expo, x):
    if expo == 0.0:
        return coef
    if expo == 1.0:
        return coef * x
    return coef * x**expo


@njit(cache=True)
def kernel_rate(family, lam, x, y):
    if family == 0:
        return lam * (x + y)
    a = 1.0 / lam
    return math.sqrt(1.0 / x + 1.0 / y) * (x**a + y**a) ** 2


@njit(cache=True)
def majorant_value(coef, expo, term_f, term_g, x, y):
    # orientation: f factors at x, g factors at y
    tot = 0.0
    for t in range(term_f.shape[0]):
        kf = term_f[t]
        kg = term_g[t]
        tot += _cweight(coef[kf], expo[kf], x) * _cweight(coef[kg], expo[kg], y)
    return tot


# -- particle bookkeeping ----------------------------------------------------


@njit(cache=True)
def class_add(c, m, mass, leaf, bit, totals, n_live, top, free, free_top,
              head, nxt, prv, coef, expo):
    if free_top[c] > 0:
        free_top[c] -= 1
        slot = free[c, free_top[c]]
    else:
        slot = top[c]
        top[c] += 1
    mass[c, slot] = m
    fm = float(m)
    for k in range(coef.shape[0]):
        w = _cweight(coef[k], expo[k], fm)
        leaf[c, k, slot] = w
        _fw_add(bit[c, k], slot, w)
        totals[c, k] += w
    h = head[c, m]
    nxt[c, slot] = h
    prv[c, slot] = -1
    if h >= 0:
        prv[c, h] = slot
    head[c, m] = slot
    n_live[c] += 1
    return slot


@njit(cache=True)
def class_remove(c, slot, mass, leaf, bit, totals, n_live, top, free, free_top,
                 head, nxt, prv):
    m = mass[c, slot]
    mass[c, slot] = 0
    for k in range(leaf.shape[1]):
        w = leaf[c, k, slot]
        if w != 0.0:
            _fw_add(bit[c, k], slot, -w)
            totals[c, k] -= w
            leaf[c, k, slot] = 0.0
    p = prv[c, slot]
    nx = nxt[c, slot]
    if p >= 0:
        nxt[c, p] = nx
    else:
        head[c, m] = nx
    if nx >= 0:
        prv[c, nx] = p
    free[c, free_top[c]] = slot
    free_top[c] += 1
    n_live[c] -= 1
    return m


@njit(cache=True)
def init_monodisperse_class(c, n, mass, leaf, bit, totals, n_live, top, free,
                            free_top, head, nxt, prv, coef, expo):
    """Bulk-fill ``n`` unit-mass particles into class ``c`` (fresh state)."""
    for s in range(n):
        mass[c, s] = 1
        nxt[c, s] = s + 1
        prv[c, s] = s - 1
    if n > 0:
        nxt[c, n - 1] = -1
        head[c, 1] = 0
    for k in range(coef.shape[0]):
        w = _cweight(coef[k], expo[k], 1.0)
        for s in range(n):
            leaf[c, k, s] = w
            _fw_add(bit[c, k], s, w)
        totals[c, k] = w * n
    n_live[c] = n
    top[c] = n


@njit(cache=True)
def rebuild_sums(mass, leaf, bit, totals, top):
    for c in range(3):
        for k in range(leaf.shape[1]):
            b = bit[c, k]
            for i in range(b.shape[0]):
                b[i] = 0.0
            tot = 0.0
            for s in range(top[c]):
                w = leaf[c, k, s]
                if w != 0.0:
                    _fw_add(b, s, w)
                    tot += w
            totals[c, k] = tot


# -- cleanup and event application -------------------------------------------


@njit(cache=True)
def cleanup_mass(m, mass, leaf, bit, totals, n_live, top, free, free_top,
                 head, nxt, prv, coef, expo, iregs):
    """Annihilate plus-only/minus-only particles sharing mass ``m``."""
    merged = 0
    while head[0, m] >= 0 and head[2, m] >= 0:
        class_remove(0, head[0, m], mass, leaf, bit, totals, n_live, top,
                     free, free_top, head, nxt, prv)
        class_remove(2, head[2, m], mass, leaf, bit, totals, n_live, top,
                     free, free_top, head, nxt, prv)
        class_add(1, m, mass, leaf, bit, totals, n_live, top, free, free_top,
                  head, nxt, prv, coef, expo)
        merged += 1
    return merged


@njit(cache=True)
def apply_event(code, s1, s2, s3, mass, leaf, bit, totals, n_live, top, free,
                free_top, head, nxt, prv, coef, expo, iregs):
    """Apply one accepted event; slots are (s1, s2, s3) per event pattern.

    1a/1b/1c: s1, s2 in common.  2a: s1 plus, s2 common, s3 minus.
    2b: s1 plus, s2 common.  2c: s1 minus, s2 common.  3a: s1, s2 plus.
    3b: s1, s2 minus.  The integer mass registers iregs[1]/iregs[2] are
    updated from the actually removed/added masses, so any wiring bug
    shows up as a conservation violation.
    """
    dplus = 0
    dminus = 0
    if code == EV_1A:
        x = class_remove(1, s1, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv)
        y = class_remove(1, s2, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv)
        class_add(1, x + y, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo)
    elif code == EV_1B or code == EV_1C:
        x = class_remove(1, s1, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv)
        y = class_remove(1, s2, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv)
        dplus -= x + y
        dminus -= x + y
        lone = 2 if code == EV_1B else 0      # singles keep the lagging label
        pair = 0 if code == EV_1B else 2      # the merged particle leads
        class_add(lone, x, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo)
        class_add(lone, y, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo)
        class_add(pair, x + y, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo)
        if code == EV_1B:
            dplus += x + y
            dminus += x + y
        else:
            dplus += x + y
            dminus += x + y
        cleanup_mass(x, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo, iregs)
        cleanup_mass(y, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo, iregs)
        cleanup_mass(x + y, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo, iregs)
    elif code == EV_2A:
        x = class_remove(0, s1, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv)
        y = class_remove(1, s2, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv)
        z = class_remove(2, s3, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv)
        dplus -= x + y
        dminus -= y + z
        class_add(0, x + y, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo)
        class_add(2, y + z, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo)
        dplus += x + y
        dminus += y + z
        cleanup_mass(x + y, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo, iregs)
        cleanup_mass(y + z, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo, iregs)
    elif code == EV_2B or code == EV_2C:
        oc = 0 if code == EV_2B else 2
        x = class_remove(oc, s1, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv)
        y = class_remove(1, s2, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv)
        if oc == 0:
            dplus -= x + y
            dminus -= y
        else:
            dminus -= x + y
            dplus -= y
        class_add(oc, x + y, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo)
        class_add(2 - oc, y, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo)
        if oc == 0:
            dplus += x + y
            dminus += y
        else:
            dminus += x + y
            dplus += y
        cleanup_mass(x + y, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo, iregs)
        cleanup_mass(y, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo, iregs)
    elif code == EV_3A or code == EV_3B:
        c = 0 if code == EV_3A else 2
        x = class_remove(c, s1, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv)
        y = class_remove(c, s2, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv)
        if c == 0:
            dplus -= x + y
        else:
            dminus -= x + y
        class_add(c, x + y, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo)
        if c == 0:
            dplus += x + y
        else:
            dminus += x + y
        cleanup_mass(x + y, mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt, prv, coef, expo, iregs)
    iregs[1] += dplus
    iregs[2] += dminus


# -- rates and sampling ------------------------------------------------------


@njit(cache=True)
def class_rates(totals, n_live, term_f, term_g, n_scale, rates):
    """Majorant class rates [common-pair, plus-common, minus-common,
    plus-pair, minus-pair]; same-class sums include the diagonal."""
    s1 = 0.0
    s2b = 0.0
    s2c = 0.0
    s3a = 0.0
    s3b = 0.0
    for t in range(term_f.shape[0]):
        kf = term_f[t]
        kg = term_g[t]
        s1 += totals[1, kf] * totals[1, kg]
        s2b += totals[0, kf] * totals[1, kg]
        s2c += totals[2, kf] * totals[1, kg]
        s3a += totals[0, kf] * totals[0, kg]
        s3b += totals[2, kf] * totals[2, kg]
    if n_live[1] == 0:
        s1 = 0.0
        s2b = 0.0
        s2c = 0.0
    if n_live[0] == 0:
        s2b = 0.0
        s3a = 0.0
    if n_live[2] == 0:
        s2c = 0.0
        s3b = 0.0
    rates[0] = max(s1 / (2.0 * n_scale), 0.0)
    rates[1] = max(s2b / n_scale, 0.0)
    rates[2] = max(s2c / n_scale, 0.0)
    rates[3] = max(s3a / (2.0 * n_scale), 0.0)
    rates[4] = max(s3b / (2.0 * n_scale), 0.0)
    return rates[0] + rates[1] + rates[2] + rates[3] + rates[4]


@njit(cache=True)
def _pick_weighted(weights, n, total, u):
    target = u * total
    acc = 0.0
    last = 0
    for i in range(n):
        w = weights[i]
        if w > 0.0:
            acc += w
            last = i
            if target < acc:
                return i
    return last


@njit(cache=True)
def sample_pair(ci, cj, mass, leaf, bit, totals, n_live, top, term_f, term_g,
                rng):
    """Draw an ordered slot pair from classes (ci, cj) under the majorant.

    Term mixture first (weights S_f[a, ci] * S_g[a, cj]), then one tree
    descent per side.  Returns (-1, -1) for a same-class self-draw, the
    fictitious outcome.
    """
    A = term_f.shape[0]
    wsum = 0.0
    for t in range(A):
        wsum += totals[ci, term_f[t]] * totals[cj, term_g[t]]
    if wsum <= 0.0:
        return -1, -1
    u = rng_uniform(rng)
    target = u * wsum
    acc = 0.0
    alpha = A - 1
    for t in range(A):
        acc += totals[ci, term_f[t]] * totals[cj, term_g[t]]
        if target < acc:
            alpha = t
            break
    kf = term_f[alpha]
    kg = term_g[alpha]
    i = _sample_slot(mass, bit, ci, kf, top, totals[ci, kf], rng_uniform(rng))
    j = _sample_slot(mass, bit, cj, kg, top, totals[cj, kg], rng_uniform(rng))
    if i < 0 or j < 0:
        return -1, -1
    if ci == cj and i == j:
        return -1, -1
    return i, j


@njit(cache=True)
def tether_rates(y, totals, term_f, term_g, coef, expo):
    """Majorant mass between one common particle of mass ``y`` and the
    plus-only / minus-only classes: (T+, T-) with T+- = sum_a S_f[a, +-]
    * g_a(y)."""
    tp = 0.0
    tm = 0.0
    for t in range(term_f.shape[0]):
        kf = term_f[t]
        kg = term_g[t]
        g = _cweight(coef[kg], expo[kg], y)
        tp += totals[0, kf] * g
        tm += totals[2, kf] * g
    return tp, tm


@njit(cache=True)
def _sample_common_for_double(mass, leaf, bit, totals, top, term_f, term_g,
                              coef, expo, rng):
    # common particle i with probability proportional to T+(i) + T-(i)
    A = term_f.shape[0]
    wsum = 0.0
    for t in range(A):
        wsum += (totals[0, term_f[t]] + totals[2, term_f[t]]) * totals[1, term_g[t]]
    if wsum <= 0.0:
        return -1
    target = rng_uniform(rng) * wsum
    acc = 0.0
    alpha = A - 1
    for t in range(A):
        acc += (totals[0, term_f[t]] + totals[2, term_f[t]]) * totals[1, term_g[t]]
        if target < acc:
            alpha = t
            break
    kg = term_g[alpha]
    return _sample_slot(mass, bit, 1, kg, top, totals[1, kg], rng_uniform(rng))


@njit(cache=True)
def _sample_partner(side, y, mass, leaf, bit, totals, top, term_f, term_g,
                    coef, expo, rng):
    # partner j in ``side`` with probability Khat(x_j, y) / T_side(y)
    A = term_f.shape[0]
    wsum = 0.0
    for t in range(A):
        kg = term_g[t]
        wsum += totals[side, term_f[t]] * _cweight(coef[kg], expo[kg], y)
    if wsum <= 0.0:
        return -1
    target = rng_uniform(rng) * wsum
    acc = 0.0
    alpha = A - 1
    for t in range(A):
        kg = term_g[t]
        acc += totals[side, term_f[t]] * _cweight(coef[kg], expo[kg], y)
        if target < acc:
            alpha = t
            break
    kf = term_f[alpha]
    return _sample_slot(mass, bit, side, kf, top, totals[side, kf], rng_uniform(rng))


# -- one jump of each algorithm ----------------------------------------------


@njit(cache=True)
def _try_common_pair(mass, leaf, bit, totals, n_live, top, free, free_top,
                     head, nxt, prv, coef, expo, term_f, term_g, family,
                     lam_p, lam_m, rng, iregs):
    i, j = sample_pair(1, 1, mass, leaf, bit, totals, n_live, top, term_f, term_g, rng)
    if i < 0:
        return EV_FICT
    x = float(mass[1, i])
    y = float(mass[1, j])
    kh = majorant_value(coef, expo, term_f, term_g, x, y)
    kp = kernel_rate(family, lam_p, x, y)
    km = kernel_rate(family, lam_m, x, y)
    lo = kp if kp < km else km
    u = rng_uniform(rng) * kh
    if u <= lo:
        code = EV_1A
    elif u <= lo + (kp - km if kp > km else km - kp):
        code = EV_1B if kp > km else EV_1C
    else:
        return EV_FICT
    apply_event(code, i, j, -1, mass, leaf, bit, totals, n_live, top, free,
                free_top, head, nxt, prv, coef, expo, iregs)
    return code


@njit(cache=True)
def _try_single_pair(c, mass, leaf, bit, totals, n_live, top, free, free_top,
                     head, nxt, prv, coef, expo, term_f, term_g, family,
                     lam, rng, iregs):
    # same-label pair merge (plus-only with K+, minus-only with K-)
    i, j = sample_pair(c, c, mass, leaf, bit, totals, n_live, top, term_f, term_g, rng)
    if i < 0:
        return EV_FICT
    x = float(mass[c, i])
    y = float(mass[c, j])
    kh = majorant_value(coef, expo, term_f, term_g, x, y)
    if rng_uniform(rng) * kh <= kernel_rate(family, lam, x, y):
        code = EV_3A if c == 0 else EV_3B
        apply_event(code, i, j, -1, mass, leaf, bit, totals, n_live, top,
                    free, free_top, head, nxt, prv, coef, expo, iregs)
        return code
    return EV_FICT


@njit(cache=True)
def _try_cross_pair(oc, mass, leaf, bit, totals, n_live, top, free, free_top,
                    head, nxt, prv, coef, expo, term_f, term_g, family,
                    lam, rng, iregs):
    # other-label (oc) + common pair; the one-sided class-2 attempt
    j, i = sample_pair(oc, 1, mass, leaf, bit, totals, n_live, top, term_f, term_g, rng)
    if j < 0:
        return EV_FICT
    x = float(mass[oc, j])
    y = float(mass[1, i])
    kh = majorant_value(coef, expo, term_f, term_g, x, y)
    if rng_uniform(rng) * kh <= kernel_rate(family, lam, x, y):
        code = EV_2B if oc == 0 else EV_2C
        apply_event(code, j, i, -1, mass, leaf, bit, totals, n_live, top,
                    free, free_top, head, nxt, prv, coef, expo, iregs)
        return code
    return EV_FICT


@njit(cache=True)
def jump_single(mass, leaf, bit, totals, n_live, top, free, free_top, head,
                nxt, prv, coef, expo, term_f, term_g, family, lam_p, lam_m,
                rates, total, rng, iregs):
    k = _pick_weighted(rates, 5, total, rng_uniform(rng))
    if k == 0:
        return _try_common_pair(mass, leaf, bit, totals, n_live, top, free,
                                free_top, head, nxt, prv, coef, expo, term_f,
                                term_g, family, lam_p, lam_m, rng, iregs)
    if k == 1:
        return _try_cross_pair(0, mass, leaf, bit, totals, n_live, top, free,
                               free_top, head, nxt, prv, coef, expo, term_f,
                               term_g, family, lam_p, rng, iregs)
    if k == 2:
        return _try_cross_pair(2, mass, leaf, bit, totals, n_live, top, free,
                               free_top, head, nxt, prv, coef, expo, term_f,
                               term_g, family, lam_m, rng, iregs)
    if k == 3:
        return _try_single_pair(0, mass, leaf, bit, totals, n_live, top, free,
                                free_top, head, nxt, prv, coef, expo, term_f,
                                term_g, family, lam_p, rng, iregs)
    return _try_single_pair(2, mass, leaf, bit, totals, n_live, top, free,
                            free_top, head, nxt, prv, coef, expo, term_f,
                            term_g, family, lam_m, rng, iregs)


@njit(cache=True)
def jump_double(mass, leaf, bit, totals, n_live, top, free, free_top, head,
                nxt, prv, coef, expo, term_f, term_g, family, lam_p, lam_m,
                rates, total, rng, iregs, w4):
    w4[0] = rates[0]
    w4[1] = rates[1] + rates[2]
    w4[2] = rates[3]
    w4[3] = rates[4]
    k = _pick_weighted(w4, 4, total, rng_uniform(rng))
    if k == 0:
        return _try_common_pair(mass, leaf, bit, totals, n_live, top, free,
                                free_top, head, nxt, prv, coef, expo, term_f,
                                term_g, family, lam_p, lam_m, rng, iregs)
    if k == 2:
        return _try_single_pair(0, mass, leaf, bit, totals, n_live, top, free,
                                free_top, head, nxt, prv, coef, expo, term_f,
                                term_g, family, lam_p, rng, iregs)
    if k == 3:
        return _try_single_pair(2, mass, leaf, bit, totals, n_live, top, free,
                                free_top, head, nxt, prv, coef, expo, term_f,
                                term_g, family, lam_m, rng, iregs)
    # merged class 2: both one-sided attempts share one common particle
    if n_live[0] == 0:
        return _try_cross_pair(2, mass, leaf, bit, totals, n_live, top, free,
                               free_top, head, nxt, prv, coef, expo, term_f,
                               term_g, family, lam_m, rng, iregs)
    if n_live[2] == 0:
        return _try_cross_pair(0, mass, leaf, bit, totals, n_live, top, free,
                               free_top, head, nxt, prv, coef, expo, term_f,
                               term_g, family, lam_p, rng, iregs)
    i = _sample_common_for_double(mass, leaf, bit, totals, top, term_f,
                                  term_g, coef, expo, rng)
    if i < 0:
        return EV_FICT
    y = float(mass[1, i])
    tp, tm = tether_rates(y, totals, term_f, term_g, coef, expo)
    tv = tp if tp > tm else tm
    if rng_uniform(rng) * (tp + tm) > tv:
        return EV_FICT
    j = _sample_partner(0, y, mass, leaf, bit, totals, top, term_f, term_g,
                        coef, expo, rng)
    kk = _sample_partner(2, y, mass, leaf, bit, totals, top, term_f, term_g,
                         coef, expo, rng)
    if j < 0 or kk < 0:
        return EV_FICT
    x = float(mass[0, j])
    z = float(mass[2, kk])
    khx = majorant_value(coef, expo, term_f, term_g, x, y)
    khz = majorant_value(coef, expo, term_f, term_g, z, y)
    p_plus = tp * kernel_rate(family, lam_p, x, y) / (tv * khx)
    p_minus = tm * kernel_rate(family, lam_m, z, y) / (tv * khz)
    lo = p_plus if p_plus < p_minus else p_minus
    hi = p_plus if p_plus > p_minus else p_minus
    u = rng_uniform(rng)
    if u < lo:
        code = EV_2A
        apply_event(code, j, i, kk, mass, leaf, bit, totals, n_live, top,
                    free, free_top, head, nxt, prv, coef, expo, iregs)
        return code
    if u < hi:
        if p_plus > p_minus:
            code = EV_2B
            apply_event(code, j, i, -1, mass, leaf, bit, totals, n_live, top,
                        free, free_top, head, nxt, prv, coef, expo, iregs)
        else:
            code = EV_2C
            apply_event(code, kk, i, -1, mass, leaf, bit, totals, n_live, top,
                        free, free_top, head, nxt, prv, coef, expo, iregs)
        return code
    return EV_FICT


# -- trajectory driver -------------------------------------------------------


@njit(cache=True)
def advance(mass, leaf, bit, totals, n_live, top, free, free_top, head, nxt,
            prv, coef, expo, term_f, term_g, family, lam_p, lam_m, n_scale,
            algorithm, watch, t_stop, max_events, regs, iregs, counters, rng):
    """Run events until the clock reaches ``t_stop``, the watched system
    empties, the rate vanishes, or ``max_events`` events were applied.

    algorithm: 0 = single coupling, 1 = double coupling.
    watch: 0 = stop when either system has <= 1 particle, 1/2 = watch the
    plus/minus system only (the uncoupled one-label runs).
    """
    rates = np.empty(5, dtype=np.float64)
    w4 = np.empty(4, dtype=np.float64)
    applied = 0
    while True:
        if watch == 1:
            alive = n_live[1] + n_live[0]
        elif watch == 2:
            alive = n_live[1] + n_live[2]
        else:
            ap = n_live[1] + n_live[0]
            am = n_live[1] + n_live[2]
            alive = ap if ap < am else am
        if alive <= 1:
            return ST_EXTINCT
        if iregs[0] >= REBUILD_EVERY:
            rebuild_sums(mass, leaf, bit, totals, top)
            iregs[0] = 0
        total = class_rates(totals, n_live, term_f, term_g, n_scale, rates)
        if total <= 0.0:
            return ST_FROZEN
        if regs[1] > 0.0:
            dt = regs[1]
            regs[1] = 0.0
        else:
            dt = -math.log1p(-rng_uniform(rng)) / total
        t_new = regs[0] + dt
        if t_new >= t_stop:
            regs[1] = t_new - t_stop
            regs[0] = t_stop
            return ST_REACHED
        regs[0] = t_new
        if algorithm == 0:
            code = jump_single(mass, leaf, bit, totals, n_live, top, free,
                               free_top, head, nxt, prv, coef, expo, term_f,
                               term_g, family, lam_p, lam_m, rates, total,
                               rng, iregs)
        else:
            code = jump_double(mass, leaf, bit, totals, n_live, top, free,
                               free_top, head, nxt, prv, coef, expo, term_f,
                               term_g, family, lam_p, lam_m, rates, total,
                               rng, iregs, w4)
        counters[code] += 1
        iregs[0] += 1
        iregs[3] += 1
        applied += 1
        if applied >= max_events:
            return ST_BUDGET
