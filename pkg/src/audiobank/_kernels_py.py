"""Pure numpy implementations of the compiled kernels in ``_kernels.pyx``."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def correlate_valid(signal, kernel):
    """Valid-mode 2-D cross-correlation summed over the leading (bin) axis."""
    signal = np.ascontiguousarray(signal, dtype=np.float64)
    kernel = np.ascontiguousarray(kernel, dtype=np.float64)
    if kernel.shape[0] != signal.shape[0]:
        raise ValueError("bin count mismatch")
    _, kd, td = kernel.shape
    if kd > signal.shape[1] or td > signal.shape[2]:
        raise ValueError("kernel larger than signal")
    windows = sliding_window_view(signal, (kd, td), axis=(1, 2))
    # windows: (B, P, Q, kd, td)
    return np.einsum("bpqij,bij->pq", windows, kernel, optimize=True)


def smo_solve(gram, y, C, tol, max_iter, order):
    """Two-variable SMO with maximal-violating-pair selection.

    Returns ``(alpha, b, n_iter, gap)``.
    """
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    order = np.asarray(order, dtype=np.intp)
    n = gram.shape[0]
    alpha = np.zeros(n)
    err = -y.copy()
    pos = y > 0
    # positions in `order`, used so argmin/argmax ties go to the earliest ordered index
    y_o = y[order]
    pos_o = pos[order]
    snap = 1e-12 * C
    it = 0
    lo = hi = 0.0
    gap = 0.0
    while it < max_iter:
        a_o = alpha[order]
        e_o = err[order]
        up = (pos_o & (a_o < C)) | (~pos_o & (a_o > 0))
        low = (~pos_o & (a_o < C)) | (pos_o & (a_o > 0))
        if not up.any() or not low.any():
            gap = 0.0
            break
        ki = int(np.argmin(np.where(up, e_o, np.inf)))
        kj = int(np.argmax(np.where(low, e_o, -np.inf)))
        lo, hi = e_o[ki], e_o[kj]
        gap = hi - lo
        if gap < tol:
            break
        i, j = int(order[ki]), int(order[kj])
        a1, a2 = alpha[i], alpha[j]
        if y_o[ki] != y_o[kj]:
            L, H = max(0.0, a2 - a1), min(C, C + a2 - a1)
        else:
            L, H = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        eta = max(gram[i, i] + gram[j, j] - 2.0 * gram[i, j], 1e-12)
        a2new = min(max(a2 + y[j] * (err[i] - err[j]) / eta, L), H)
        a1new = a1 + y[i] * y[j] * (a2 - a2new)
        # snap round-off residue onto the box so bound points leave the working set
        a1new = 0.0 if a1new < snap else (C if a1new > C - snap else a1new)
        a2new = 0.0 if a2new < snap else (C if a2new > C - snap else a2new)
        alpha[i], alpha[j] = a1new, a2new
        err += (a1new - a1) * y[i] * gram[:, i] + (a2new - a2) * y[j] * gram[:, j]
        it += 1

    free = (alpha > 0) & (alpha < C)
    if free.any():
        b = float(-err[free].mean())
    else:
        b = -(lo + hi) / 2.0
    return alpha, b, it, gap
