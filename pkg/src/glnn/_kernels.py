"""Compiled inner loops.

Array layout shared by every kernel:

* ``src[j, k]`` is the k-th source of unit j, with ``src[j, 0] == 0`` (the
  bias unit) and ``nsrc[j]`` valid entries; padding is zero.
* ``tau[j, k, g]`` is the weight on edge ``src[j, k] -> j`` under gate g,
  where g is the previous symbol for gated models and always 0 otherwise.
* ``V`` and ``A`` are ``(T, N+1)``; column 0 holds the always-on unit.
* ``B`` and ``m`` are ``(T+1, N+1)`` with a zero last row.

Activation codes: 0 is tanh, 1 is the logistic function.
"""
import math

import numpy as np
from numba import njit

TANH = 0
LOGISTIC = 1


@njit(cache=True, inline="always")
def _act(v, code):
    if code == TANH:
        return math.tanh(v)
    if v >= 0.0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


@njit(cache=True)
def evolve(x, v0, src, nsrc, tau, rho, leaky, gated, use_rho, code, V, A):
    """Run the state recursion in place. Returns the first non-finite t, or -1."""
    T = x.shape[0]
    N1 = v0.shape[0]
    V[0, 0] = 0.0
    A[0, 0] = 1.0
    for j in range(1, N1):
        V[0, j] = v0[j]
        A[0, j] = _act(v0[j], code)
        if not math.isfinite(A[0, j]):
            return 0
    for t in range(T - 1):
        g = x[t] if gated else 0
        V[t + 1, 0] = 0.0
        A[t + 1, 0] = 1.0
        for j in range(1, N1):
            acc = 0.0
            for k in range(nsrc[j]):
                acc += tau[j, k, g] * A[t, src[j, k]]
            if use_rho:
                acc += rho[j, x[t]]
            if leaky:
                acc += V[t, j]
            if not math.isfinite(acc):
                return t + 1
            V[t + 1, j] = acc
            A[t + 1, j] = _act(acc, code)
    return -1


@njit(cache=True)
def backprop(x, D, S, src, nsrc, tau, leaky, gated, B):
    """Backward recursion for dlogL/dV.

    ``D`` holds s'(V) and ``S`` the masked output source term, both (T, N+1).
    """
    T = x.shape[0]
    N1 = D.shape[1]
    tmp = np.zeros(N1)
    carry = 1.0 if leaky else 0.0
    for i in range(N1):
        B[T, i] = 0.0
    for t in range(T - 1, -1, -1):
        g = x[t] if gated else 0
        for i in range(N1):
            tmp[i] = 0.0
        for j in range(1, N1):
            bj = B[t + 1, j]
            if bj != 0.0:
                for k in range(1, nsrc[j]):
                    tmp[src[j, k]] += tau[j, k, g] * bj
        B[t, 0] = 0.0
        for i in range(1, N1):
            B[t, i] = carry * B[t + 1, i] + D[t, i] * (S[t, i] + tmp[i])


@njit(cache=True)
def transition_grads(x, A, B, src, nsrc, gated, use_rho, G, R):
    """Accumulate dlogL/dtau into G and, for input-driven models, dlogL/drho into R."""
    T = x.shape[0]
    N1 = A.shape[1]
    for t in range(T - 1):
        g = x[t] if gated else 0
        for j in range(1, N1):
            bj = B[t + 1, j]
            if bj == 0.0:
                continue
            for k in range(nsrc[j]):
                G[j, k, g] += A[t, src[j, k]] * bj
            if use_rho:
                R[j, x[t]] += bj


@njit(cache=True)
def rbpm(x, D, Q, src, nsrc, selfk, tau, leaky, gated, m):
    """Backpropagated modulus. ``Q`` is the masked output variance term."""
    T = x.shape[0]
    N1 = D.shape[1]
    tmp = np.zeros(N1)
    carry = 1.0 if leaky else 0.0
    for i in range(N1):
        m[T, i] = 0.0
    for t in range(T - 1, -1, -1):
        g = x[t] if gated else 0
        for i in range(N1):
            tmp[i] = 0.0
        for j in range(1, N1):
            mj = m[t + 1, j]
            if mj != 0.0:
                for k in range(1, nsrc[j]):
                    i = src[j, k]
                    if i != j:
                        c = tau[j, k, g]
                        tmp[i] += c * c * mj
        m[t, 0] = 0.0
        for i in range(1, N1):
            d = D[t, i]
            c = carry + tau[i, selfk[i], g] * d
            m[t, i] = d * d * (Q[t, i] + tmp[i]) + c * c * m[t + 1, i]


@njit(cache=True)
def accumulate_blocks(x, A, m, src, nsrc, gated, M):
    """Full metric blocks M[j, g, k, l] over the sources of each unit."""
    T = x.shape[0]
    N1 = A.shape[1]
    for t in range(T - 1):
        g = x[t] if gated else 0
        for j in range(1, N1):
            mj = m[t + 1, j]
            if mj == 0.0:
                continue
            n = nsrc[j]
            for k in range(n):
                ak = A[t, src[j, k]] * mj
                for l in range(k + 1):
                    M[j, g, k, l] += ak * A[t, src[j, l]]
    for j in range(1, N1):
        n = nsrc[j]
        for g in range(M.shape[1]):
            for k in range(n):
                for l in range(k):
                    M[j, g, l, k] = M[j, g, k, l]


@njit(cache=True)
def accumulate_qd(x, A, m, src, nsrc, gated, use_rho, Md, M0, Mrho):
    """Diagonal and bias-row entries of the metric blocks (plus input-weight terms)."""
    T = x.shape[0]
    N1 = A.shape[1]
    for t in range(T - 1):
        g = x[t] if gated else 0
        for j in range(1, N1):
            mj = m[t + 1, j]
            if mj == 0.0:
                continue
            for k in range(nsrc[j]):
                a = A[t, src[j, k]]
                Md[j, k, g] += a * a * mj
                M0[j, k, g] += a * mj
            if use_rho:
                Mrho[j, x[t]] += mj


@njit(cache=True)
def _chol_solve(M, b, n, eps, out, L):
    """Solve (M + eps*I) out = b on the leading n-by-n block. False if not PD."""
    for i in range(n):
        for k in range(i + 1):
            s = M[i, k]
            if i == k:
                s += eps
            for p in range(k):
                s -= L[i, p] * L[k, p]
            if i == k:
                if not (s > 0.0) or not math.isfinite(s):
                    return False
                L[i, i] = math.sqrt(s)
            else:
                L[i, k] = s / L[k, k]
    for i in range(n):
        s = b[i]
        for p in range(i):
            s -= L[i, p] * out[p]
        out[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = out[i]
        for p in range(i + 1, n):
            s -= L[p, i] * out[p]
        out[i] = s / L[i, i]
    return True


@njit(cache=True)
def solve_blocks(M, G, nsrc, eps, out):
    """Dampened solves for every (j, g) block. Returns the number of failed blocks.

    Blocks with an all-zero gradient give a zero step without factorizing.
    A failed factorization is retried once with ten times the dampening.
    """
    N1 = M.shape[0]
    K = M.shape[2]
    L = np.zeros((K, K))
    failed = 0
    for j in range(1, N1):
        n = nsrc[j]
        for g in range(M.shape[1]):
            nz = False
            for k in range(n):
                out[j, k, g] = 0.0
                if G[j, k, g] != 0.0:
                    nz = True
            if not nz:
                continue
            ok = _chol_solve(M[j, g], G[j, :, g], n, eps, out[j, :, g], L)
            if not ok:
                ok = _chol_solve(M[j, g], G[j, :, g], n, 10.0 * eps, out[j, :, g], L)
            if not ok:
                failed += 1
                for k in range(n):
                    out[j, k, g] = 0.0
    return failed
