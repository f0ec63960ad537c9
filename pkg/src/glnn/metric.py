"""Riemannian metrics for the writing and transition weights.

Writing weights use a quasi-diagonal Fisher approximation. Transition
weights use per-(unit, symbol) blocks built from a per-unit, per-time
modulus: the squared backpropagated value (unitwise outer product, ``ruop``)
or the backpropagated metric (``rbpm``). Blocks are dampened and solved by
Cholesky factorization, or reduced quasi-diagonally for wide networks.

The module also carries a slow dense oracle that unfolds the network in time
and rebuilds the same matrices from per-time Jacobians.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .backprop import output_source
from .dynamics import ModelParams, Tape
from .seqdata import SymbolSequence

UNIT_ROUNDOFF = 2.0 ** -53
MODULUS_KINDS = ("ruop", "rbpm")


class MetricError(ArithmeticError):
    pass


# -- writing weights ---------------------------------------------------------

@dataclass
class WritingMetricTerms:
    """``hdiag[i, y]`` (dampened) and ``h0[i, y]``; row 0 of hdiag is h_00."""

    hdiag: np.ndarray
    h0: np.ndarray
    eps: np.ndarray


def writing_dampening(seq: SymbolSequence) -> np.ndarray:
    """Masked frequency of each symbol plus the double-precision unit roundoff."""
    counts = np.bincount(seq.tokens, weights=seq.mask, minlength=seq.alphabet.size)
    return counts / seq.mask.sum() + UNIT_ROUNDOFF


def writing_hessian_terms(tape: Tape, seq: SymbolSequence, eps=None) -> WritingMetricTerms:
    if eps is None:
        eps = writing_dampening(seq)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (tape.pi.shape[1],))
    var = tape.pi * (1.0 - tape.pi)
    chi_a = seq.mask[:, None] * tape.a
    h0 = chi_a.T @ var
    hdiag = (chi_a * tape.a).T @ var + eps[None, :]
    return WritingMetricTerms(hdiag=hdiag, h0=h0, eps=np.array(eps))


def writing_fisher(tape: Tape, seq: SymbolSequence) -> np.ndarray:
    """Exact Fisher matrix of the masked log-likelihood in w, flattened (i, y) row-major."""
    N1, A = tape.a.shape[1], tape.pi.shape[1]
    F = np.zeros((N1 * A, N1 * A))
    for t in np.flatnonzero(seq.mask):
        a, p = tape.a[t], tape.pi[t]
        F += np.kron(np.outer(a, a), np.diag(p) - np.outer(p, p))
    return F


def qd_direction(G: np.ndarray, Mdiag: np.ndarray, M0: np.ndarray, axis: int = 0) -> np.ndarray:
    """Quasi-diagonal inverse applied to G along ``axis`` (slot 0 is the bias).

    ``Mdiag`` must already be dampened; ``M0`` holds the bias-row entries.
    """
    G = np.moveaxis(np.asarray(G, dtype=float), axis, 0)
    Md = np.moveaxis(np.asarray(Mdiag, dtype=float), axis, 0)
    M0 = np.moveaxis(np.asarray(M0, dtype=float), axis, 0)
    h00 = Md[0]
    if np.any(h00 <= 0):
        raise MetricError("metric degenerate")
    r = M0[1:] / h00
    denom = Md[1:] - M0[1:] * r
    if np.any(denom <= 0):
        raise MetricError("metric degenerate")
    out = np.empty_like(G)
    out[1:] = (G[1:] - G[0] * r) / denom
    out[0] = G[0] / h00 - (r * out[1:]).sum(axis=0)
    return np.moveaxis(out, 0, axis)


def qd_writing_update(w, W, terms: WritingMetricTerms, eta_w: float) -> np.ndarray:
    return w + eta_w * qd_direction(W, terms.hdiag, terms.h0)


def dh_writing_update(w, W, terms: WritingMetricTerms, eta_w: float) -> np.ndarray:
    """Diagonal-Hessian step: each coordinate divided by its own curvature."""
    return w + eta_w * W / terms.hdiag


# -- moduli ------------------------------------------------------------------

def ruop_modulus(B: np.ndarray) -> np.ndarray:
    return np.square(B)


def output_variance(w: np.ndarray, tape: Tape, seq: SymbolSequence) -> np.ndarray:
    """chi_t * Var_{pi_t}(w[i, .]) for every time and unit."""
    _, wbar = output_source(w, tape, seq)
    second = tape.pi @ np.square(w).T
    return np.maximum(seq.mask[:, None] * (second - np.square(wbar)), 0.0)


def rbpm_modulus(params: ModelParams, tape: Tape, seq: SymbolSequence) -> np.ndarray:
    Q = output_variance(params.w, tape, seq)
    D = params.activation.ds_from_a(tape.a)
    m = np.empty((tape.T + 1, params.n_units + 1))
    topo = params.topology
    _kernels.rbpm(seq.tokens, D, Q, topo.src, topo.nsrc, topo.selfk, params.tau,
                  params.leaky, params.gated, m)
    return m


def modulus(kind: str, params: ModelParams, tape: Tape, seq: SymbolSequence, B=None) -> np.ndarray:
    kind = kind.lower()
    if kind == "ruop":
        if B is None:
            raise ValueError("the unitwise outer-product modulus needs B")
        return ruop_modulus(B)
    if kind == "rbpm":
        return rbpm_modulus(params, tape, seq)
    raise ValueError(f"unknown modulus {kind!r}")


# -- transition blocks -------------------------------------------------------

@dataclass
class MetricBlocks:
    """Undampened blocks ``M[j, g, k, l]`` plus gradients in tau layout."""

    G: np.ndarray
    M: np.ndarray
    eps: float = 1.0


def metric_block_accumulate(params: ModelParams, tape: Tape, m: np.ndarray, seq: SymbolSequence) -> np.ndarray:
    N1, K, gates = params.tau.shape
    M = np.zeros((N1, gates, K, K))
    topo = params.topology
    _kernels.accumulate_blocks(seq.tokens, tape.a, m, topo.src, topo.nsrc, params.gated, M)
    return M


@dataclass
class QuasiDiagonalTerms:
    """Undampened diagonal (``Md``) and bias-row (``M0``) block entries, tau layout.

    ``Mrho[j, y]`` carries the input-weight entries of the RNN, for which the
    diagonal and bias-row terms coincide.
    """

    Md: np.ndarray
    M0: np.ndarray
    Mrho: np.ndarray


def qd_accumulate(params: ModelParams, tape: Tape, m: np.ndarray, seq: SymbolSequence) -> QuasiDiagonalTerms:
    Md = np.zeros_like(params.tau)
    M0 = np.zeros_like(params.tau)
    Mrho = np.zeros_like(params.rho)
    topo = params.topology
    _kernels.accumulate_qd(seq.tokens, tape.a, m, topo.src, topo.nsrc, params.gated,
                           params.use_rho, Md, M0, Mrho)
    return QuasiDiagonalTerms(Md, M0, Mrho)


def dampened_solve(M, G, eps: float = 0.0) -> np.ndarray:
    """Solve (M + eps*I) x = G by Cholesky, retrying once with 10*eps."""
    M = np.ascontiguousarray(M, dtype=float)
    G = np.ascontiguousarray(G, dtype=float)
    n = G.shape[0]
    if M.shape != (n, n):
        raise ValueError("matrix and vector sizes differ")
    out = np.zeros(n)
    L = np.zeros((n, n))
    for e in (eps, 10.0 * eps):
        if _kernels._chol_solve(M, G, n, e, out, L):
            return out
    raise MetricError("metric not positive definite")


def solve_blocks(M: np.ndarray, G: np.ndarray, nsrc: np.ndarray, eps: float) -> np.ndarray:
    out = np.zeros_like(G)
    failed = _kernels.solve_blocks(M, G, nsrc, float(eps), out)
    if failed:
        raise MetricError(f"metric not positive definite ({failed} blocks)")
    return out


def qd_reduction_update(tau_col, G, Mdiag, M0, eta_tau: float, eps: float = 1.0) -> np.ndarray:
    """Quasi-diagonal step for the incoming weights of one (unit, symbol) pair.

    All arrays are indexed by source slot with slot 0 the bias. ``Mdiag`` is
    undampened; ``eps`` is added here.
    """
    return np.asarray(tau_col, dtype=float) + eta_tau * qd_direction(
        G, np.asarray(Mdiag, dtype=float) + eps, M0)


def qd_transition_direction(params: ModelParams, G, R, terms: QuasiDiagonalTerms, eps: float):
    """Quasi-diagonal directions for tau and, for the RNN, rho."""
    mask = params.edge_mask()[:, :, None]
    Md = np.where(mask, terms.Md + eps, 1.0)
    if not params.use_rho:
        d_tau = qd_direction(G, Md, terms.M0, axis=1) * mask
        d_tau[0] = 0.0
        return d_tau, np.zeros_like(R)
    # RNN: input weights act as extra sources fed by one-hot symbol activity.
    Gx = np.concatenate([G[:, :, 0], R], axis=1)
    Mdx = np.concatenate([Md[:, :, 0], terms.Mrho + eps], axis=1)
    M0x = np.concatenate([terms.M0[:, :, 0], terms.Mrho], axis=1)
    Mdx[0], M0x[0] = 1.0, 0.0  # unit 0 has no incoming weights
    d = qd_direction(Gx, Mdx, M0x, axis=1)
    d[0] = 0.0
    K = G.shape[1]
    return (d[:, :K] * mask[:, :, 0])[:, :, None], d[:, K:]


def start_value_direction(B0: np.ndarray, m0: np.ndarray, eps: float) -> np.ndarray:
    out = np.zeros_like(B0, dtype=float)
    out[1:] = B0[1:] / (m0[1:] + eps)
    return out


def fisher_output_norm(pi, dE) -> float:
    """Squared Fisher norm of the output change induced by a logit change dE."""
    pi = np.asarray(pi, dtype=float)
    dE = np.asarray(dE, dtype=float)
    mean = pi @ dE
    return float(pi @ (dE * dE) - mean * mean)


# -- time-unfolding oracle ---------------------------------------------------

@dataclass
class UnfoldedMetric:
    """Per-unit metric over all incoming parameters.

    ``blocks[j]`` is indexed by ``g * K + k`` (gate-major) for tau, followed
    for the RNN by A input-weight entries. ``modulus`` is the per-time field.
    """

    blocks: np.ndarray
    modulus: np.ndarray
    B: np.ndarray


def _unfold_jacobians(params: ModelParams, tape: Tape, seq: SymbolSequence) -> np.ndarray:
    """J[t, i, j] = dV_j^{t+1} / dV_i^t on the ordinary units."""
    N1 = params.n_units + 1
    T = tape.T
    D = params.activation.ds_from_a(tape.a)
    topo = params.topology
    J = np.zeros((T, N1, N1))
    for t in range(T):
        g = int(seq.tokens[t]) if params.gated else 0
        for j in range(1, N1):
            if params.leaky:
                J[t, j, j] += 1.0
            for k, i in enumerate(topo.in_edges[j], start=1):
                J[t, i, j] += params.tau[j, k, g] * D[t, i]
    return J


def unfolding_oracle(params: ModelParams, seq: SymbolSequence, metric_kind: str,
                     tape: Tape | None = None) -> UnfoldedMetric:
    """Rebuild metric blocks from the network unfolded over time.

    Every transition t -> t+1 gets its own copy of the incoming weights. The
    derivative of the log-likelihood with respect to V^t is obtained by
    multiplying per-time Jacobians along all forward paths. For ``ruop`` the
    per-time metric is the outer product of the copy's gradient; for ``rbpm``
    it is the activity outer product scaled by the backpropagated metric,
    itself a path sum of squared Jacobians applied to the output Fisher norm.
    Intended for tiny instances only.
    """
    from .dynamics import forward

    if params.n_units > 5 or len(seq) > 10:
        raise ValueError("unfolding oracle is limited to N <= 5 and T <= 10")
    kind = metric_kind.lower()
    if kind not in MODULUS_KINDS:
        raise ValueError(f"unknown metric kind {metric_kind!r}")
    if tape is None:
        tape = forward(params, seq)
    N1, K, gates = params.tau.shape
    A = params.n_symbols
    T = tape.T
    D = params.activation.ds_from_a(tape.a)
    J = _unfold_jacobians(params, tape, seq)
    x = seq.tokens

    # Output sensitivity of log pi_t(x_t), and its Fisher norm, per unit.
    src = np.zeros((T, N1))
    var = np.zeros((T, N1))
    for t in range(T):
        if not seq.mask[t]:
            continue
        p = tape.pi[t]
        for i in range(1, N1):
            dlogp = params.w[i] - p @ params.w[i]
            src[t, i] = D[t, i] * dlogp[x[t]]
            var[t, i] = D[t, i] ** 2 * sum(p[y] * dlogp[y] ** 2 for y in range(A))

    B = np.zeros((T + 1, N1))
    field = np.zeros((T + 1, N1))
    for t in range(T):
        P = np.eye(N1)
        P2 = np.eye(N1)
        for s in range(t, T):
            B[t] += P @ src[s]
            field[t] += P2 @ var[s]
            P = P @ J[s]
            P2 = P2 @ (J[s] * J[s])
    m = B ** 2 if kind == "ruop" else field

    extra = A if params.use_rho else 0
    P_dim = gates * K + extra
    blocks = np.zeros((N1, P_dim, P_dim))
    topo = params.topology
    for t in range(T):
        g = int(x[t]) if params.gated else 0
        for j in range(1, N1):
            u = np.zeros(P_dim)
            u[g * K] = 1.0
            for k, i in enumerate(topo.in_edges[j], start=1):
                u[g * K + k] = tape.a[t, i]
            if extra:
                u[gates * K + x[t]] = 1.0
            if kind == "ruop":
                grad = u * B[t + 1, j]
                blocks[j] += np.outer(grad, grad)
            else:
                blocks[j] += np.outer(u, u) * field[t + 1, j]
    return UnfoldedMetric(blocks=blocks, modulus=m, B=B)


def streaming_unit_matrix(M: np.ndarray, j: int) -> np.ndarray:
    """Assemble the per-symbol blocks of unit j into the oracle's gate-major layout."""
    _, gates, K, _ = M.shape
    out = np.zeros((gates * K, gates * K))
    for g in range(gates):
        out[g * K:(g + 1) * K, g * K:(g + 1) * K] = M[j, g]
    return out
