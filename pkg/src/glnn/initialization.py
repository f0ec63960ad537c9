"""Parameter initialization.

The GLNN start puts every unit at an attractive fixed point of its own
self-feedback loop and lets each symbol nudge it by a small random amount,
so that unit j initially tracks an exponentially weighted average of the
recent signal with time scale about j. Writing weights start as the
empirical i.i.d. model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .dynamics import TANH, ModelParams, get_activation, tanh_to_logistic
from .seqdata import SymbolSequence, SymbolStats, compute_stats
from .topology import NetworkTopology


@dataclass(frozen=True)
class InitPlan:
    """Constants of the GLNN start, expressed for tanh units.

    ``noise`` multiplies the default per-unit signal amplitude mu_j / 4; set it
    to 0 for the pure fixed-point start. Logistic models are initialized as
    the affine image of the tanh start.
    """

    alpha: float = 0.5
    noise: float = 1.0
    seed: int | None = 0
    activation: str = "tanh"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        get_activation(self.activation)

    def mu(self, j):
        return 1.0 / (np.asarray(j, dtype=float) + 1.0)

    def beta(self, j):
        mu = self.mu(j)
        if np.any(mu > self.alpha):
            raise ValueError("unit rate exceeds the self-feedback magnitude")
        return -np.sqrt(self.alpha * (self.alpha - mu))

    def eps(self, j):
        return self.noise * self.mu(j) / 4.0

    def vbar(self, j):
        return TANH.inv(self.beta(j) / self.alpha)

    def to_dict(self) -> dict:
        return asdict(self)


def frequencies(seq: SymbolSequence, stats: SymbolStats | None = None):
    """(nu, nu_tilde) with zero masked frequencies floored at 1/(2 * sum chi)."""
    stats = stats or compute_stats(seq)
    nu = np.array(stats.nu, dtype=float)
    if np.any(nu == 0):
        nu = np.maximum(nu, 1.0 / (2.0 * seq.mask.sum()))
        nu /= nu.sum()
    return nu, np.array(stats.nu_tilde, dtype=float)


def _centered_uniform(rng, n_units: int, nu_tilde: np.ndarray) -> np.ndarray:
    u = rng.uniform(0.0, 1.0, size=(n_units, nu_tilde.size))
    return u - (u @ nu_tilde)[:, None]


def glnn_init(topology: NetworkTopology, seq: SymbolSequence, plan: InitPlan | None = None,
              stats: SymbolStats | None = None) -> ModelParams:
    plan = plan or InitPlan()
    A = seq.alphabet.size
    nu, nu_tilde = frequencies(seq, stats)
    N = topology.n_units
    p = ModelParams.zeros("glnn", topology, A, TANH)
    p.w[0] = np.log(nu)
    j = np.arange(1, N + 1)
    vbar = plan.vbar(j)
    # Snap the bias to alpha * s(vbar) so the fixed point is exact in floating point.
    beta = plan.alpha * np.array([math.tanh(v) for v in vbar])
    rng = np.random.default_rng(plan.seed)
    signal = _centered_uniform(rng, N, nu_tilde)
    p.tau[1:, 0, :] = beta[:, None] + plan.eps(j)[:, None] * signal
    for unit in j:
        p.tau[unit, topology.selfk[unit], :] = -plan.alpha
    p.v0[1:] = vbar
    if get_activation(plan.activation).name == "logistic":
        p = tanh_to_logistic(p)
    return p


def rnn_init(topology: NetworkTopology, seq: SymbolSequence, seed=0,
             stats: SymbolStats | None = None, activation="tanh") -> ModelParams:
    A = seq.alphabet.size
    nu, nu_tilde = frequencies(seq, stats)
    N = topology.n_units
    p = ModelParams.zeros("rnn", topology, A, TANH)
    p.w[0] = np.log(nu)
    for i in range(1, N + 1):
        p.tau[i, topology.selfk[i], 0] = 1.0 - 1.0 / i
    rng = np.random.default_rng(seed)
    p.rho[1:] = 0.5 * _centered_uniform(rng, N, nu_tilde)
    if get_activation(activation).name == "logistic":
        p = tanh_to_logistic(p)
    return p


def gnn_init(topology: NetworkTopology, seq: SymbolSequence, seed=0,
             stats: SymbolStats | None = None, activation="tanh") -> ModelParams:
    """Gated counterpart of :func:`rnn_init`: the input drive becomes the bias weight."""
    A = seq.alphabet.size
    nu, nu_tilde = frequencies(seq, stats)
    N = topology.n_units
    p = ModelParams.zeros("gnn", topology, A, TANH)
    p.w[0] = np.log(nu)
    for i in range(1, N + 1):
        p.tau[i, topology.selfk[i], :] = 1.0 - 1.0 / i
    rng = np.random.default_rng(seed)
    p.tau[1:, 0, :] = 0.5 * _centered_uniform(rng, N, nu_tilde)
    if get_activation(activation).name == "logistic":
        p = tanh_to_logistic(p)
    return p


def initialize(kind: str, topology: NetworkTopology, seq: SymbolSequence, seed=0,
               activation="tanh", noise: float = 1.0) -> ModelParams:
    kind = kind.lower()
    if kind == "glnn":
        return glnn_init(topology, seq, InitPlan(noise=noise, seed=seed, activation=activation))
    if kind == "rnn":
        return rnn_init(topology, seq, seed, activation=activation)
    if kind == "gnn":
        return gnn_init(topology, seq, seed, activation=activation)
    raise ValueError(f"unknown model kind {kind!r}")


def linearized_prediction(plan: InitPlan, j: int, signal) -> np.ndarray:
    """Small-signal trajectory of unit j around its fixed point.

    ``signal[t]`` is the centered per-symbol drive read at time t (the random
    part of the bias weight before scaling). Returns V_j^t for t = 0..len(signal),
    starting at the fixed point; each past input decays by (1 - mu_j) per step.
    """
    mu = float(plan.mu(j))
    eps = float(plan.eps(j))
    vbar = float(plan.vbar(j))
    signal = np.asarray(signal, dtype=float)
    out = np.empty(signal.size + 1)
    dev = 0.0
    out[0] = vbar
    decay = 1.0 - mu
    for t, r in enumerate(signal):
        dev = decay * dev + eps * r
        out[t + 1] = vbar + dev
    return out
