"""Validation scoring, regret, XOR error and sampling."""
from __future__ import annotations

import math

import numpy as np

from .dynamics import LN2, ModelParams, Tape, forward, softmax_output
from .seqdata import SymbolSequence


def mixture_weights(T: int) -> np.ndarray:
    """Weight 1/(t+2) on the uniform distribution at time t."""
    return 1.0 / (np.arange(T) + 2.0)


def regularized_probs(tape: Tape, seq: SymbolSequence) -> np.ndarray:
    """Probability of each observed symbol under the uniform-mixed output."""
    A = tape.pi.shape[1]
    lam = mixture_weights(tape.T)
    p = tape.pi[np.arange(tape.T), seq.tokens]
    return (1.0 - lam) * p + lam / A


def regularized_validation_ll(params: ModelParams, valid: SymbolSequence, tape: Tape | None = None) -> float:
    """Masked validation log-likelihood in bits after mixing with the uniform law."""
    if tape is None:
        tape = forward(params, valid)
    p = regularized_probs(tape, valid)
    return math.fsum(np.log2(p[valid.mask > 0]))


def raw_ll_bits(params: ModelParams, seq: SymbolSequence) -> float:
    return forward(params, seq).bits


def cumulative_regret(score_bits: float, oracle_bits: float) -> float:
    """Bits lost against the true model; positive when the model is worse."""
    return float(oracle_bits) - float(score_bits)


def xor_classification_error(params: ModelParams, valid: SymbolSequence, tape: Tape | None = None) -> float:
    """Fraction of masked positions whose correct symbol gets probability <= 1/2."""
    if tape is None:
        tape = forward(params, valid)
    idx = np.flatnonzero(valid.mask)
    p = tape.pi[idx, valid.tokens[idx]]
    return float(np.mean(p <= 0.5))


def answer_logloss_bits(params: ModelParams, valid: SymbolSequence, tape: Tape | None = None) -> np.ndarray:
    """Per masked position -log2 pi(correct)."""
    if tape is None:
        tape = forward(params, valid)
    idx = np.flatnonzero(valid.mask)
    return -tape.logp[idx] / LN2


def sample(params: ModelParams, length: int, seed=None, alphabet=None):
    """Draw a sequence by feeding each sampled symbol back into the network.

    Returns ``(tokens, truncated)``; ``truncated`` is True when the dynamics
    diverged and sampling stopped early. With an alphabet, tokens are decoded
    to text.
    """
    rng = np.random.default_rng(seed)
    Vt = params.v0.copy()
    Vt[0] = 0.0
    at = params.activation.s(Vt)
    at[0] = 1.0
    out = []
    truncated = False
    for _ in range(int(length)):
        p = softmax_output(at, params.w)
        y = int(rng.choice(params.n_symbols, p=p))
        out.append(y)
        Vt, at = _transition(params, Vt, at, y)
        if not np.isfinite(Vt).all():
            truncated = True
            break
    tokens = np.array(out, dtype=np.int64)
    if alphabet is not None:
        return alphabet.decode(tokens), truncated
    return tokens, truncated


def _transition(params: ModelParams, V, a, y: int):
    topo = params.topology
    g = y if params.gated else 0
    idx = topo.src
    # Gather source activities per unit: (N+1, K).
    srcs = a[idx] * params.edge_mask()
    with np.errstate(over="ignore", invalid="ignore"):
        nxt = (params.tau[:, :, g] * srcs).sum(axis=1)
        if params.use_rho:
            nxt = nxt + params.rho[:, y]
        if params.leaky:
            nxt = nxt + V
        nxt[0] = 0.0
        act = params.activation.s(nxt)
    act[0] = 1.0
    return nxt, act

