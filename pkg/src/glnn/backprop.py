"""Backpropagation through time and finite-difference checks.

``B[t, i]`` is the derivative of the masked log-likelihood with respect to
V_i^t, with B[T] = 0. ``B[0]`` doubles as the gradient for the start values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import ModelParams, Tape, forward, forward_reference
from .seqdata import SymbolSequence


@dataclass
class BackwardPass:
    B: np.ndarray     # (T+1, N+1)
    W: np.ndarray     # (N+1, A)
    G: np.ndarray     # same layout as params.tau
    R: np.ndarray     # (N+1, A), zero unless the model has input weights

    @property
    def B0(self) -> np.ndarray:
        return self.B[0]


def output_source(w: np.ndarray, tape: Tape, seq: SymbolSequence):
    """Masked output terms for every unit and time.

    Returns ``(S, wbar)`` with wbar[t, i] = sum_y pi_t(y) w[i, y] and
    S[t, i] = chi_t (w[i, x_t] - wbar[t, i]).
    """
    wbar = tape.pi @ w.T
    S = seq.mask[:, None] * (w[:, seq.tokens].T - wbar)
    return S, wbar


def writing_grad(tape: Tape, seq: SymbolSequence) -> np.ndarray:
    """dlogL/dw[i, y] = sum_t chi_t a_i^t (1[x_t = y] - pi_t(y)), bias row included."""
    chi_a = seq.mask[:, None] * tape.a
    # residual first, so a certain prediction contributes exactly zero
    resid = -tape.pi
    resid[np.arange(tape.T), seq.tokens] += 1.0
    return chi_a.T @ resid


def backprop_values(params: ModelParams, tape: Tape, seq: SymbolSequence) -> np.ndarray:
    S, _ = output_source(params.w, tape, seq)
    D = params.activation.ds_from_a(tape.a)
    B = np.empty((tape.T + 1, params.n_units + 1))
    topo = params.topology
    _kernels.backprop(seq.tokens, D, S, topo.src, topo.nsrc, params.tau,
                      params.leaky, params.gated, B)
    return B


def transition_grad(params: ModelParams, tape: Tape, B: np.ndarray, seq: SymbolSequence):
    """Gradients for tau (and rho for the RNN) from the backpropagated values."""
    G = np.zeros_like(params.tau)
    R = np.zeros_like(params.rho)
    topo = params.topology
    _kernels.transition_grads(seq.tokens, tape.a, B, topo.src, topo.nsrc,
                              params.gated, params.use_rho, G, R)
    return G, R


def backward(params: ModelParams, tape: Tape, seq: SymbolSequence) -> BackwardPass:
    B = backprop_values(params, tape, seq)
    tape.B = B
    G, R = transition_grad(params, tape, B, seq)
    return BackwardPass(B=B, W=writing_grad(tape, seq), G=G, R=R)


def _checked(kind):
    def run(params: ModelParams, tape: Tape, seq: SymbolSequence) -> BackwardPass:
        if params.kind != kind:
            raise ValueError(f"expected a {kind.upper()} model, got {params.kind.upper()}")
        return backward(params, tape, seq)
    run.__name__ = f"backward_{kind}"
    run.__doc__ = f"Backward pass specialised to the {kind.upper()} evolution."
    return run


backward_glnn = _checked("glnn")
backward_gnn = _checked("gnn")
backward_rnn = _checked("rnn")


def gradient(params: ModelParams, seq: SymbolSequence):
    """Forward plus backward; returns ``(tape, BackwardPass)``."""
    tape = forward(params, seq)
    return tape, backward(params, tape, seq)


# -- finite differences ------------------------------------------------------

def central_difference(func, theta: float, h: float = 1e-5) -> float:
    """(f(theta + h) - f(theta - h)) / 2h for a scalar function."""
    if h <= 0:
        raise ValueError("step h must be positive")
    return (func(theta + h) - func(theta - h)) / (2.0 * h)


def finite_diff_oracle(params: ModelParams, seq: SymbolSequence, coordinate, h: float = 1e-5) -> float:
    """Central-difference estimate of dlogL along one parameter coordinate.

    ``coordinate`` is ``(family, index)`` with family one of ``w``, ``tau``,
    ``rho``, ``v0`` and ``index`` an array index into that family, or
    ``("V", (t, j))`` for a state perturbation at time t.
    """
    family, index = coordinate
    if family == "V":
        t, j = index
        return central_difference(lambda d: forward_reference(params, seq, inject=(t, j, d)), 0.0, h)
    base = getattr(params, family)
    orig = float(base[index])

    def loglik(value):
        p = params.copy()
        getattr(p, family)[index] = value
        return forward_reference(p, seq)

    return central_difference(loglik, orig, h)


def analytic_coordinate(params: ModelParams, seq: SymbolSequence, coordinate, bw: BackwardPass | None = None) -> float:
    """Analytic derivative matching :func:`finite_diff_oracle`'s coordinate scheme."""
    if bw is None:
        _, bw = gradient(params, seq)
    family, index = coordinate
    if family == "V":
        return float(bw.B[index])
    table = {"w": bw.W, "tau": bw.G, "rho": bw.R, "v0": bw.B[0]}
    return float(table[family][index])


def parameter_coordinates(params: ModelParams, seq: SymbolSequence | None = None):
    """Every free coordinate as ``(family, index)`` tuples."""
    coords = [("w", idx) for idx in np.ndindex(params.w.shape)]
    mask = params.edge_mask()
    for j, k, g in np.ndindex(params.tau.shape):
        if j > 0 and mask[j, k]:
            coords.append(("tau", (j, k, g)))
    if params.use_rho:
        coords += [("rho", (j, y)) for j, y in np.ndindex(params.rho.shape) if j > 0]
    coords += [("v0", (j,)) for j in range(1, params.n_units + 1)]
    return coords
