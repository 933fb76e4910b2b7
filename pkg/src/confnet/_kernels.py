"""Compiled per-block arithmetic shared by both controllers.

Scheduling candidates (commodity plus activated links) are enumerated once
per topology together with their static leakage pattern, so one block costs
a few operations per candidate. The same functions serve single-step calls
from Python and the whole-run loops in :mod:`confnet.engine`.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numba import njit

IDLE = -1
NORM_CAP = 1.0e6


class Net(NamedTuple):
    link_src: np.ndarray
    link_dst: np.ndarray
    intermediate: np.ndarray
    comm_src: np.ndarray
    comm_dst: np.ndarray
    # candidates in (commodity, set id, bitmask) order, duplicates removed
    cand_comm: np.ndarray
    cand_set: np.ndarray
    cand_mask: np.ndarray
    cand_lptr: np.ndarray
    cand_links: np.ndarray
    # receptions at intermediate nodes as (node, link) pairs
    cand_rptr: np.ndarray
    recv_node: np.ndarray
    recv_link: np.ndarray
    # overhearing groups: the node learns the best rate among the group links
    cand_gptr: np.ndarray
    group_node: np.ndarray
    group_lptr: np.ndarray
    group_links: np.ndarray


@njit(cache=True)
def _group_rate(net, g, R):
    best = 0.0
    for p in range(net.group_lptr[g], net.group_lptr[g + 1]):
        r = R[net.group_links[p]]
        if r > best:
            best = r
    return best


@njit(cache=True)
def candidate_value(net, k, W, Z, zsign, R):
    c = net.cand_comm[k]
    obj = 0.0
    for p in range(net.cand_lptr[k], net.cand_lptr[k + 1]):
        l = net.cand_links[p]
        obj += W[c, l] * R[l]
    pen = 0.0
    for p in range(net.cand_rptr[k], net.cand_rptr[k + 1]):
        pen += Z[c, net.recv_node[p]] * R[net.recv_link[p]]
    for g in range(net.cand_gptr[k], net.cand_gptr[k + 1]):
        pen += Z[c, net.group_node[g]] * _group_rate(net, g, R)
    return obj + zsign * pen


@njit(cache=True)
def best_candidate(net, B, Z, zsign, R, W):
    """Index and value of the best candidate, or (IDLE, 0.0) if none is positive.

    ``B`` holds the per-commodity backlog at every node. Only a strictly
    larger value replaces the incumbent, so ties go to the earliest candidate.
    """
    for c in range(B.shape[0]):
        for l in range(net.link_src.shape[0]):
            W[c, l] = B[c, net.link_src[l]] - B[c, net.link_dst[l]]
    best_k, best_obj = IDLE, 0.0
    for k in range(net.cand_comm.shape[0]):
        v = candidate_value(net, k, W, Z, zsign, R)
        if v > best_obj:
            best_k, best_obj = k, v
    return best_k, best_obj


@njit(cache=True)
def realize(net, k, R, mu, f):
    """Flows and per-node leakage of candidate ``k`` (all zero when idle)."""
    mu[:] = 0.0
    f[:] = 0.0
    if k < 0:
        return
    for p in range(net.cand_lptr[k], net.cand_lptr[k + 1]):
        l = net.cand_links[p]
        mu[l] = R[l]
    for p in range(net.cand_rptr[k], net.cand_rptr[k + 1]):
        f[net.recv_node[p]] += R[net.recv_link[p]]
    for g in range(net.cand_gptr[k], net.cand_gptr[k + 1]):
        f[net.group_node[g]] += _group_rate(net, g, R)


@njit(cache=True)
def admit_log_utility(backlog, credit, H, A_max):
    """argmax over A in [0, A_max] of H*log(A) - (backlog - credit)*A."""
    d = backlog - credit
    if d <= 0.0 or H >= A_max * d:
        return A_max
    return H / d


@njit(cache=True)
def relay_update(net, Qr, mu, c):
    """[Q - out]^+ + in at every intermediate node for commodity ``c``."""
    n = Qr.shape[1]
    out = np.zeros(n)
    inc = np.zeros(n)
    for l in range(mu.shape[0]):
        if mu[l] > 0.0:
            out[net.link_src[l]] += mu[l]
            inc[net.link_dst[l]] += mu[l]
    for i in range(n):
        if net.intermediate[i]:
            Qr[c, i] = max(Qr[c, i] - out[i], 0.0) + inc[i]


@njit(cache=True)
def source_service(net, mu, c):
    total = 0.0
    src = net.comm_src[c]
    for l in range(mu.shape[0]):
        if net.link_src[l] == src:
            total += mu[l]
    return total


@njit(cache=True)
def run_alg1(net, R, Q, Qr, Z, alpha, H, kappa, A_max, u_floor,
             out_cand, out_obj, out_A, out_mu, out_f, out_U,
             record_queues, out_Q, out_Qr, out_Z, acc_from, acc_Q, acc_Qr, acc_Z):
    """Advance infinite-block state through ``R.shape[0]`` blocks in place.

    Queue snapshots (``out_*`` when recording, ``acc_*`` sums from block
    ``acc_from`` on) are taken at the start of each block.
    """
    T, L = R.shape
    S, N = Qr.shape
    B = np.zeros((S, N))
    W = np.zeros((S, L))
    f = np.zeros(N)
    mu = np.zeros(L)
    A = np.zeros(S)
    for t in range(T):
        if record_queues:
            out_Q[t] = Q
            out_Qr[t] = Qr
            out_Z[t] = Z
        if t >= acc_from:
            acc_Q += Q
            acc_Qr += Qr
            acc_Z += Z
        Rt = R[t]
        for s in range(S):
            zsum = 0.0
            for j in range(N):
                if net.intermediate[j]:
                    zsum += Z[s, j]
            A[s] = admit_log_utility(Q[s], (1.0 - alpha[s]) * zsum, H, A_max)
            out_U[t, s] = kappa + np.log(max(alpha[s] * A[s], u_floor))
        B[:, :] = Qr
        for s in range(S):
            B[s, net.comm_src[s]] = Q[s]
            B[s, net.comm_dst[s]] = 0.0
        k, obj = best_candidate(net, B, Z, -1.0, Rt, W)
        realize(net, k, Rt, mu, f)
        c = net.cand_comm[k] if k >= 0 else IDLE
        if c >= 0:
            Q[c] = max(Q[c] - source_service(net, mu, c), 0.0)
            relay_update(net, Qr, mu, c)
        for s in range(S):
            Q[s] += A[s]
            for j in range(N):
                if net.intermediate[j]:
                    leak = f[j] if s == c else 0.0
                    Z[s, j] = max(Z[s, j] + leak - (1.0 - alpha[s]) * A[s], 0.0)
        out_cand[t] = k
        out_obj[t] = obj
        out_A[t] = A
        out_mu[t] = mu
        out_f[t] = f


@njit(cache=True)
def pick_rate(Qp, V, gamma, grid, p_grid):
    """argmax over the grid of r*Qp - V*(r*p(r) - r*gamma); ties go to smaller r."""
    best_r = grid[0]
    best = grid[0] * Qp - V * (grid[0] * p_grid[0] - grid[0] * gamma)
    for g in range(1, grid.shape[0]):
        r = grid[g]
        val = r * Qp - V * (r * p_grid[g] - r * gamma)
        if val > best:
            best, best_r = val, r
    return best_r


@njit(cache=True)
def run_alg2(net, R, t0, Qp, P, k, r_cur, Zc, V, Qr, outage, m_start, padding,
             H, kappa, A_max, u_floor, gamma, R_nom, msg_bits, v_weight, grid, p_grid,
             out_cand, out_obj, out_A, out_mu, out_f, out_U, out_boundary, out_rate,
             msg_src, msg_k, msg_start, msg_end, msg_rate, msg_out, msg_pad, msg_count,
             record_queues, out_Qp, out_P, out_Zc, out_V, out_Qr,
             acc_from, acc_Qp, acc_P, acc_V, acc_Qr):
    """Advance finite-block state through ``R.shape[0]`` blocks in place.

    ``t0`` is the absolute index of the first block. Completed messages are
    appended to the ``msg_*`` arrays at position ``msg_count[0]``. Queue
    snapshots are taken after any message boundary of the block.
    """
    T, L = R.shape
    S, N = Qr.shape
    B = np.zeros((S, N))
    W = np.zeros((S, L))
    f = np.zeros(N)
    mu = np.zeros(L)
    A = np.zeros(S)
    for t in range(T):
        Rt = R[t]
        for s in range(S):
            A[s] = admit_log_utility(Qp[s], 0.0, H, A_max)
            out_U[t, s] = kappa + np.log(max(A[s], u_floor))
            out_boundary[t, s] = False
            if P[s] <= 0.0:
                # rate is chosen from the outage queue before the finished
                # message is charged to it
                r = pick_rate(Qp[s], v_weight[s] * V[s], gamma[s], grid[s], p_grid[s])
                if k[s] > 0:
                    if outage[s]:
                        V[s] = max(V[s] + r_cur[s] - gamma[s] * r_cur[s], 0.0)
                    else:
                        V[s] = max(V[s] - gamma[s] * r_cur[s], 0.0)
                n_blocks = msg_bits[s] / R_nom[s]
                k[s] += 1
                padding[s] = max(n_blocks * r - Qp[s], 0.0)
                Qp[s] = max(Qp[s] - n_blocks * r, 0.0)
                P[s] = msg_bits[s]
                for j in range(N):
                    if net.intermediate[j]:
                        Zc[s, j] = (R_nom[s] - r) * n_blocks
                r_cur[s] = r
                outage[s] = False
                m_start[s] = t0 + t
                out_boundary[t, s] = True
            out_rate[t, s] = r_cur[s]
        if record_queues:
            out_Qp[t] = Qp
            out_P[t] = P
            out_Zc[t] = Zc
            out_V[t] = V
            out_Qr[t] = Qr
        if t >= acc_from:
            acc_Qp += Qp
            acc_P += P
            acc_V += V
            acc_Qr += Qr
        B[:, :] = Qr
        for s in range(S):
            norm = R_nom[s] / r_cur[s] if r_cur[s] * NORM_CAP > R_nom[s] else NORM_CAP
            B[s, net.comm_src[s]] = norm * Qp[s] + P[s]
            B[s, net.comm_dst[s]] = 0.0
        kk, obj = best_candidate(net, B, Zc, 1.0, Rt, W)
        realize(net, kk, Rt, mu, f)
        c = net.cand_comm[kk] if kk >= 0 else IDLE
        if c >= 0:
            P[c] = max(P[c] - source_service(net, mu, c), 0.0)
            for j in range(N):
                if net.intermediate[j] and f[j] > 0.0:
                    if Zc[c, j] - f[j] <= 0.0:
                        outage[c] = True
                    Zc[c, j] = max(Zc[c, j] - f[j], 0.0)
            relay_update(net, Qr, mu, c)
        for s in range(S):
            Qp[s] += A[s]
            if s == c and P[s] <= 0.0:
                m = msg_count[0]
                msg_src[m] = s
                msg_k[m] = k[s]
                msg_start[m] = m_start[s]
                msg_end[m] = t0 + t
                msg_rate[m] = r_cur[s]
                msg_out[m] = outage[s]
                msg_pad[m] = padding[s]
                msg_count[0] = m + 1
        out_cand[t] = kk
        out_obj[t] = obj
        out_A[t] = A
        out_mu[t] = mu
        out_f[t] = f
