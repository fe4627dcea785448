"""Numba kernels for the per-chain Lagrangian terms.

These are the hot path of the RK4 simulation loop; they compute, in one pass
over a chain, the inertia matrix, its configuration gradient, the gravity
force and potential, and the Coriolis force vector built from the Christoffel
symbols of the inertia matrix (which guarantees skew-symmetry of Mdot - 2C).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def chain_gravity(lengths, masses, com_offsets, anchor, gravity, q):
    """Gravity force and potential of one chain (no inertia terms)."""
    L = q.shape[0]
    ox = anchor[0]
    oy = anchor[1]
    cx = np.empty(L)
    cy = np.empty(L)
    t = 0.0
    for i in range(L):
        t += q[i]
        dx = np.cos(t)
        dy = np.sin(t)
        cx[i] = ox + com_offsets[i] * dx
        cy[i] = oy + com_offsets[i] * dy
        ox += lengths[i] * dx
        oy += lengths[i] * dy
    G = np.zeros(L)
    Ug = 0.0
    ojx = anchor[0]
    ojy = anchor[1]
    # recompute origins while accumulating torques: G_j = -sum_i m_i g.perp(c_i - o_j)
    t = 0.0
    for j in range(L):
        for i in range(j, L):
            mi = masses[i]
            vx = cx[i] - ojx
            vy = cy[i] - ojy
            G[j] -= mi * (gravity[0] * (-vy) + gravity[1] * vx)
        t += q[j]
        ojx += lengths[j] * np.cos(t)
        ojy += lengths[j] * np.sin(t)
    for i in range(L):
        Ug -= masses[i] * (gravity[0] * cx[i] + gravity[1] * cy[i])
    return G, Ug


@njit(cache=True)
def chain_terms(lengths, masses, com_offsets, inertias, anchor, gravity, q, qd):
    """Lagrangian terms of one serial chain with relative joint angles.

    Returns (M, dM, G, Ug, cvec) where dM[i, j, l] = dM_ij/dq_l and
    cvec = C(q, qd) qd from the Christoffel symbols of M.
    """
    L = q.shape[0]
    o = np.empty((L + 1, 2))
    c = np.empty((L, 2))
    o[0, 0] = anchor[0]
    o[0, 1] = anchor[1]
    t = 0.0
    for i in range(L):
        t += q[i]
        dx = np.cos(t)
        dy = np.sin(t)
        c[i, 0] = o[i, 0] + com_offsets[i] * dx
        c[i, 1] = o[i, 1] + com_offsets[i] * dy
        o[i + 1, 0] = o[i, 0] + lengths[i] * dx
        o[i + 1, 1] = o[i, 1] + lengths[i] * dy

    # COM jacobians J[i, :, j] = perp(c_i - o_j) for j <= i, else 0
    J = np.zeros((L, 2, L))
    for i in range(L):
        for j in range(i + 1):
            vx = c[i, 0] - o[j, 0]
            vy = c[i, 1] - o[j, 1]
            J[i, 0, j] = -vy
            J[i, 1, j] = vx
    # joint-origin jacobians Jo[i, :, l] = perp(o_i - o_l) for l < i, else 0
    Jo = np.zeros((L + 1, 2, L))
    for i in range(L + 1):
        lim = i if i < L else L
        for l in range(lim):
            vx = o[i, 0] - o[l, 0]
            vy = o[i, 1] - o[l, 1]
            Jo[i, 0, l] = -vy
            Jo[i, 1, l] = vx

    M = np.zeros((L, L))
    dM = np.zeros((L, L, L))
    G = np.zeros(L)
    Ug = 0.0
    for i in range(L):
        mi = masses[i]
        Ug -= mi * (gravity[0] * c[i, 0] + gravity[1] * c[i, 1])
        for j in range(i + 1):
            G[j] -= mi * (gravity[0] * J[i, 0, j] + gravity[1] * J[i, 1, j])
        for a in range(i + 1):
            for b in range(a + 1):
                val = mi * (J[i, 0, a] * J[i, 0, b] + J[i, 1, a] * J[i, 1, b])
                val += inertias[i]
                M[a, b] += val
                if a != b:
                    M[b, a] += val
        # d(c_i - o_j)/dq_l = J[i, :, l] - Jo[j, :, l]  (J column is 0 for l > i)
        for l in range(L):
            for a in range(i + 1):
                dax = -(J[i, 1, l] - Jo[a, 1, l])
                day = J[i, 0, l] - Jo[a, 0, l]
                for b in range(a + 1):
                    dbx = -(J[i, 1, l] - Jo[b, 1, l])
                    dby = J[i, 0, l] - Jo[b, 0, l]
                    v = mi * (
                        dax * J[i, 0, b]
                        + day * J[i, 1, b]
                        + J[i, 0, a] * dbx
                        + J[i, 1, a] * dby
                    )
                    dM[a, b, l] += v
                    if a != b:
                        dM[b, a, l] += v

    # Christoffel Coriolis force: c_i = sum_jk (dM_ij/dq_k - dM_jk/dq_i / 2) qdj qdk
    cvec = np.zeros(L)
    for i in range(L):
        acc = 0.0
        for j in range(L):
            for k in range(L):
                acc += (dM[i, j, k] - 0.5 * dM[j, k, i]) * qd[j] * qd[k]
        cvec[i] = acc
    return M, dM, G, Ug, cvec
