"""Pure-Python fork-join FIFO kernel, used when the compiled extension is absent.

Same loop, same floating-point operations in the same order as ``_kernel.pyx``,
so both backends produce bit-identical delays.
"""


def run_chunk(arrivals, cls, services, server_start, n_alloc, k_needed, free_at, busy, served, out_delay):
    arrivals = arrivals.tolist()
    cls = cls.tolist()
    rows = services.tolist()
    server_start = server_start.tolist()
    n_alloc = n_alloc.tolist()
    k_needed = k_needed.tolist()
    free = free_at.tolist()
    busy_acc = busy.tolist()
    served_acc = served.tolist()
    delays = []
    for t, c, row in zip(arrivals, cls, rows):
        s0 = server_start[c]
        k = k_needed[c]
        best = []
        for j in range(n_alloc[c]):
            svc = row[j]
            s = s0 + j
            start = free[s]
            if t > start:
                start = t
            done = start + svc
            free[s] = done
            busy_acc[s] += svc
            served_acc[s] += 1
            d = done - t
            if len(best) < k:
                best.append(d)
                best.sort()
            elif d < best[-1]:
                best[-1] = d
                best.sort()
        delays.append(best[k - 1])
    free_at[:] = free
    busy[:] = busy_acc
    served[:] = served_acc
    out_delay[:] = delays
