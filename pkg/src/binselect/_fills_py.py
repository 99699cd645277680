"""Pure-Python packing kernels.

Fallback used when the compiled extension is unavailable.  Each kernel takes
the item sequence and the bin capacity and returns the list of bin fill
totals in the order the bins were opened.  Semantics must stay in lockstep
with ``_fills_cy.pyx``.
"""


def first_fit_fills(items, capacity):
    fills = []
    for w in items:
        for i, f in enumerate(fills):
            if f + w <= capacity:
                fills[i] = f + w
                break
        else:
            fills.append(w)
    return fills


def best_fit_fills(items, capacity):
    fills = []
    for w in items:
        best = -1
        best_fill = -1
        for i, f in enumerate(fills):
            # feasible bin with the least residual after placement; ties go
            # to the earliest-opened bin
            if f + w <= capacity and f > best_fill:
                best = i
                best_fill = f
        if best < 0:
            fills.append(w)
        else:
            fills[best] = best_fill + w
    return fills


def worst_fit_fills(items, capacity):
    fills = []
    for w in items:
        best = -1
        best_fill = capacity + 1
        for i, f in enumerate(fills):
            # feasible bin with the most available space; ties go to the
            # earliest-opened bin
            if f + w <= capacity and f < best_fill:
                best = i
                best_fill = f
        if best < 0:
            fills.append(w)
        else:
            fills[best] = best_fill + w
    return fills


def next_fit_fills(items, capacity):
    fills = []
    current = -1
    for w in items:
        if current >= 0 and fills[current] + w <= capacity:
            fills[current] = fills[current] + w
        else:
            # the current bin (if any) is closed for good
            fills.append(w)
            current = len(fills) - 1
    return fills
