# cython: language_level=3
"""Compiled frame loop.  Must stay operation-for-operation identical to
``_trace_py.advance`` so both backends give bit-identical traces."""
from libc.math cimport log1p

cdef double LN2 = 0.6931471805599453

cdef enum:
    # sums layout
    HARVESTED = 0
    CONSUMED = 1
    OVERFLOW = 2
    CHARGE_LOSS = 3
    DISCHARGE_LOSS = 4
    RATE = 5
    STORED = 6
    DRAWN = 7
    # counts layout
    FRAMES = 0
    OUTAGES = 1
    FULL = 2
    DEMAND_MET = 3

def advance(const double[::1] u, const double[::1] h, int kind, double level,
            double n_symbols, double noise_power, double e_max, double mu, double beta,
            const double[::1] thresholds, bint outage_zero_rate, bint collect,
            double[::1] state, double[::1] sums, long long[::1] counts,
            long long[::1] exceed, long long[::1] entries, unsigned char[::1] inside):
    cdef Py_ssize_t i, k, n = u.shape[0], nt = thresholds.shape[0]
    cdef double energy = state[0]
    cdef double noise_energy = n_symbols * noise_power
    cdef double uu, hp, p, pc, e_prev, surplus, gain, target, need, drawn, rate, space
    cdef bint outage, flag
    cdef double s_harv = 0, s_cons = 0, s_over = 0, s_closs = 0, s_dloss = 0
    cdef double s_rate = 0, s_stored = 0, s_drawn = 0
    cdef long long c_out = 0, c_full = 0, c_met = 0

    for i in range(n):
        uu = u[i]
        hp = h[i]
        outage = False
        if kind == 2:
            pc = uu
            p = uu
        else:
            if kind == 0:
                p = level
            else:
                p = noise_energy * (1.0 / level - 1.0 / hp)
                if p < 0.0:
                    p = 0.0
            e_prev = energy
            if uu >= p:
                surplus = uu - p
                gain = mu * surplus
                pc = p
                s_closs += surplus - gain
                target = e_prev + gain
                if target > e_max:
                    s_over += target - e_max
                    energy = e_max
                else:
                    energy = target
                s_stored += energy - e_prev
            else:
                need = (p - uu) / beta
                if e_prev >= need:
                    drawn = need
                    pc = p
                    energy = e_prev - need
                else:
                    drawn = e_prev
                    pc = uu + beta * e_prev
                    outage = True
                    energy = 0.0
                s_dloss += drawn - beta * drawn
                s_drawn += drawn
        if outage and outage_zero_rate:
            rate = 0.0
        else:
            rate = n_symbols * log1p(pc * hp / noise_energy) / LN2
        space = e_max - energy
        if collect:
            s_harv += uu
            s_cons += pc
            s_rate += rate
            if outage:
                c_out += 1
            if pc == p:
                c_met += 1
            if space == 0.0:
                c_full += 1
            for k in range(nt):
                flag = space >= thresholds[k]
                if flag:
                    exceed[k] += 1
                    if not inside[k]:
                        entries[k] += 1
                inside[k] = flag
        else:
            for k in range(nt):
                inside[k] = space >= thresholds[k]

    state[0] = energy
    if collect:
        sums[HARVESTED] += s_harv
        sums[CONSUMED] += s_cons
        sums[OVERFLOW] += s_over
        sums[CHARGE_LOSS] += s_closs
        sums[DISCHARGE_LOSS] += s_dloss
        sums[RATE] += s_rate
        sums[STORED] += s_stored
        sums[DRAWN] += s_drawn
        counts[FRAMES] += n
        counts[OUTAGES] += c_out
        counts[FULL] += c_full
        counts[DEMAND_MET] += c_met
