"""Shared builders for small random instances."""
import numpy as np

from glnn.dynamics import ModelParams
from glnn.initialization import initialize
from glnn.seqdata import Alphabet, SymbolSequence
from glnn.topology import build_random_graph

LETTERS = "abcdefgh"


def random_sequence(rng, A, T, masked=True):
    alpha = Alphabet(tuple(LETTERS[:A]))
    mask = None
    if masked:
        mask = (rng.random(T) < 0.7).astype(float)
        mask[-1] = 1.0
    return SymbolSequence(rng.integers(0, A, T), alpha, mask)


def random_model(kind, rng, N=4, A=3, T=9, d=2, scale=0.7, masked=True):
    """Random weights of moderate size; v0 is set for every kind so its gradient is testable."""
    topo = build_random_graph(N, min(d, N), int(rng.integers(1 << 30)))
    p = ModelParams.zeros(kind, topo, A)
    p.w[:] = rng.normal(0, scale, p.w.shape)
    p.tau[:] = rng.normal(0, scale, p.tau.shape) * p.edge_mask()[:, :, None]
    p.tau[0] = 0.0
    if kind == "rnn":
        p.rho[1:] = rng.normal(0, scale, (N, A))
    p.v0[1:] = rng.normal(0, scale, N)
    return p, random_sequence(rng, A, T, masked)


def stable_model(kind, rng, N=4, A=3, T=300, d=2):
    """Perturbed standard initialization: non-saturated activities, well-conditioned metrics."""
    seq = random_sequence(rng, A, T, masked=False)
    topo = build_random_graph(N, d, int(rng.integers(1 << 30)))
    p = initialize(kind, topo, seq, seed=int(rng.integers(1 << 30)))
    p.w[:] += rng.normal(0, 0.3, p.w.shape)
    p.tau[:] += rng.normal(0, 0.1, p.tau.shape) * p.edge_mask()[:, :, None]
    p.tau[0] = 0.0
    if kind == "rnn":
        p.rho[1:] += rng.normal(0, 0.3, (N, A))
    return p, seq
