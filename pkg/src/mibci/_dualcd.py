"""Dual coordinate descent for the L2-regularized L1-loss SVM.

Operates on a precomputed Gram matrix with the bias folded in as a constant
kernel offset, so one solver covers every kernel.  Variables pinned at
their bounds are shrunk from the working set between passes; decision
values are maintained for the full problem, so the duality gap used as the
stopping certificate is always exact.  The epoch order comes from an
in-solver xorshift generator, which keeps runs bit-reproducible for a given
seed regardless of platform threading.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def dual_cd(Gp1, y, C, gap_tol, max_epochs, seed):
    """Solve ``min 0.5 a'Qa - sum(a)`` s.t. ``0 <= a <= C``.

    ``Q[i, j] = y[i] y[j] Gp1[i, j]`` where ``Gp1`` is the kernel Gram
    matrix plus one.  Returns ``(alpha, decision, gap, epochs)`` where
    ``decision[i]`` is the (biased) decision value at training point ``i``
    and ``gap`` the primal-dual gap at exit.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    u = np.zeros(n)
    active = np.arange(n)
    n_active = n
    state = np.uint64(2 * seed + 1)
    gap = np.inf
    epochs = 0
    pg_hi = np.inf
    pg_lo = -np.inf
    for epoch in range(max_epochs):
        for i in range(n_active - 1, 0, -1):
            state ^= state << np.uint64(13)
            state ^= state >> np.uint64(7)
            state ^= state << np.uint64(17)
            j = int(state >> np.uint64(33)) % (i + 1)
            tmp = active[i]
            active[i] = active[j]
            active[j] = tmp
        pg_max = -np.inf
        pg_min = np.inf
        t = 0
        while t < n_active:
            i = active[t]
            g = y[i] * u[i] - 1.0
            a = alpha[i]
            if a <= 0.0:
                if g > pg_hi:
                    n_active -= 1
                    active[t] = active[n_active]
                    active[n_active] = i
                    continue
                pg = g if g < 0.0 else 0.0
            elif a >= C:
                if g < pg_lo:
                    n_active -= 1
                    active[t] = active[n_active]
                    active[n_active] = i
                    continue
                pg = g if g > 0.0 else 0.0
            else:
                pg = g
            if pg > pg_max:
                pg_max = pg
            if pg < pg_min:
                pg_min = pg
            if pg != 0.0:
                anew = a - g / Gp1[i, i]
                if anew < 0.0:
                    anew = 0.0
                elif anew > C:
                    anew = C
                d = anew - a
                if d != 0.0:
                    alpha[i] = anew
                    yi = y[i]
                    for k in range(n):
                        u[k] += d * yi * Gp1[i, k]
            t += 1
        quad = 0.0
        asum = 0.0
        hinge = 0.0
        for i in range(n):
            yu = y[i] * u[i]
            quad += alpha[i] * yu
            asum += alpha[i]
            h = 1.0 - yu
            if h > 0.0:
                hinge += h
        gap = quad - asum + C * hinge
        epochs = epoch + 1
        if gap <= gap_tol:
            break
        pg_hi = pg_max if pg_max > 0.0 else np.inf
        pg_lo = pg_min if pg_min < 0.0 else -np.inf
        # Bring shrunk variables back when the working set has locally
        # converged, and periodically regardless, so a prematurely pinned
        # variable cannot block global progress indefinitely.
        if (n_active < n and pg_max - pg_min < 0.1 * gap_tol) \
                or (epoch + 1) % 500 == 0:
            n_active = n
            pg_hi = np.inf
            pg_lo = -np.inf
    return alpha, u, gap, epochs
