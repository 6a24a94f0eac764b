"""Pure-Python frame loop, used when the compiled kernel is unavailable.

Same signature and arithmetic order as ``_trace_kernel.advance``.
"""
from math import log1p

LN2 = 0.6931471805599453


def advance(u, h, kind, level, n_symbols, noise_power, e_max, mu, beta,
            thresholds, outage_zero_rate, collect,
            state, sums, counts, exceed, entries, inside):
    energy = float(state[0])
    noise_energy = n_symbols * noise_power
    thr = [float(t) for t in thresholds]
    nt = len(thr)
    ins = [bool(x) for x in inside]
    exc = [0] * nt
    ent = [0] * nt
    s_harv = s_cons = s_over = s_closs = s_dloss = s_rate = s_stored = s_drawn = 0.0
    c_out = c_full = c_met = 0
    n = len(u)

    for uu, hp in zip(u.tolist(), h.tolist()):
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
                flag = space >= thr[k]
                if flag:
                    exc[k] += 1
                    if not ins[k]:
                        ent[k] += 1
                ins[k] = flag
        else:
            for k in range(nt):
                ins[k] = space >= thr[k]

    state[0] = energy
    for k in range(nt):
        inside[k] = ins[k]
    if collect:
        for k in range(nt):
            exceed[k] += exc[k]
            entries[k] += ent[k]
        for idx, v in enumerate((s_harv, s_cons, s_over, s_closs, s_dloss, s_rate, s_stored, s_drawn)):
            sums[idx] += v
        counts[0] += n
        counts[1] += c_out
        counts[2] += c_full
        counts[3] += c_met
