"""Independent reference laws for the restricted samplers."""

import math

import numpy as np

from pdcpart.samplers import Partition
from pdcpart.verify import iter_partitions


def setshape_weights(n):
    """Shapes of n with the number of set partitions of [n] having each shape."""
    shapes = list(iter_partitions(n))
    w = []
    for parts in shapes:
        cnt = Partition.from_parts(parts).counts()
        den = math.prod(math.factorial(i) ** z * math.factorial(z) for i, z in cnt.items())
        w.append(math.factorial(n) // den)
    return shapes, w


def setshape_law(n):
    shapes, w = setshape_weights(n)
    return shapes, np.asarray(w, dtype=float) / sum(w)


def plane_arrays(n):
    """Every array Z_ij >= 0 with sum (i+j+1) Z_ij = n, as sorted cell tuples."""
    cells = [(i, j) for i in range(n) for j in range(n) if i + j + 1 <= n]
    out = []

    def rec(k, left, acc):
        if left == 0:
            out.append(tuple(sorted(acc)))
            return
        if k == len(cells):
            return
        i, j = cells[k]
        w = i + j + 1
        for z in range(left // w, -1, -1):
            rec(k + 1, left - z * w, acc + ([((i, j), z)] if z else []))

    rec(0, n, [])
    return out
