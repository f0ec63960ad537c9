"""Forward evolution of the three recurrent models and their softmax output.

State at time t is the pre-activation vector V_t and activity a_t = s(V_t),
with unit 0 pinned at a = 1. Symbol x_t is predicted from a_t, and the
transition t -> t+1 reads x_t:

* GLNN: V_{t+1} = V_t + sum_i tau[i, j, x_t] a_i
* GNN:  V_{t+1} = sum_i tau[i, j, x_t] a_i
* RNN:  V_{t+1} = rho[j, x_t] + sum_i tau[i, j] a_i

Log-likelihoods are kept in nats internally; ``Tape.bits`` converts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .seqdata import SymbolSequence
from .topology import NetworkTopology

LN2 = math.log(2.0)
MODEL_KINDS = ("glnn", "gnn", "rnn")


class DivergenceError(FloatingPointError):
    """Non-finite state encountered during evolution."""

    def __init__(self, t: int):
        super().__init__(f"divergent dynamics at t={t}")
        self.t = t


@dataclass(frozen=True)
class Activation:
    name: str
    code: int
    sup_ds: float

    def s(self, v):
        if self.code == _kernels.TANH:
            return np.tanh(v)
        return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(v, dtype=float)))

    def ds(self, v):
        return self.ds_from_a(self.s(v))

    def ds_from_a(self, a):
        if self.code == _kernels.TANH:
            return 1.0 - a * a
        return a * (1.0 - a)

    def inv(self, a):
        if self.code == _kernels.TANH:
            return np.arctanh(a)
        a = np.asarray(a, dtype=float)
        return np.log(a) - np.log1p(-a)

    @property
    def range(self) -> tuple[float, float]:
        return (-1.0, 1.0) if self.code == _kernels.TANH else (0.0, 1.0)


TANH = Activation("tanh", _kernels.TANH, 1.0)
LOGISTIC = Activation("logistic", _kernels.LOGISTIC, 0.25)
ACTIVATIONS = {"tanh": TANH, "logistic": LOGISTIC}


def get_activation(act) -> Activation:
    if isinstance(act, Activation):
        return act
    try:
        return ACTIVATIONS[str(act).lower()]
    except KeyError:
        raise ValueError(f"unknown activation {act!r}") from None


@dataclass
class ModelParams:
    """Weights of one model.

    ``tau[j, k, g]`` is the weight from ``topology.src[j, k]`` to unit j under
    gate g (slot k = 0 is the bias unit). Gated models have one gate per
    symbol, the RNN a single gate. ``rho`` is only used by the RNN and ``v0``
    is trainable only for the GLNN.
    """

    kind: str
    topology: NetworkTopology
    n_symbols: int
    activation: Activation
    w: np.ndarray
    tau: np.ndarray
    rho: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        self.kind = str(self.kind).lower()
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        self.activation = get_activation(self.activation)
        N1 = self.topology.n_units + 1
        K = self.topology.max_sources
        A = int(self.n_symbols)
        gates = A if self.gated else 1
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        self.tau = np.ascontiguousarray(self.tau, dtype=np.float64)
        self.rho = np.ascontiguousarray(self.rho, dtype=np.float64)
        self.v0 = np.ascontiguousarray(self.v0, dtype=np.float64)
        expected = {"w": (N1, A), "tau": (N1, K, gates), "rho": (N1, A), "v0": (N1,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @classmethod
    def zeros(cls, kind, topology: NetworkTopology, n_symbols: int, activation="tanh"):
        kind = str(kind).lower()
        N1, K = topology.n_units + 1, topology.max_sources
        gates = n_symbols if kind in ("glnn", "gnn") else 1
        return cls(kind, topology, n_symbols, get_activation(activation),
                   np.zeros((N1, n_symbols)), np.zeros((N1, K, gates)),
                   np.zeros((N1, n_symbols)), np.zeros(N1))

    @property
    def n_units(self) -> int:
        return self.topology.n_units

    @property
    def leaky(self) -> bool:
        return self.kind == "glnn"

    @property
    def gated(self) -> bool:
        return self.kind in ("glnn", "gnn")

    @property
    def use_rho(self) -> bool:
        return self.kind == "rnn"

    def edge_mask(self) -> np.ndarray:
        """Boolean (N+1, K) mask of tau slots that are real edges or biases."""
        K = self.topology.max_sources
        return np.arange(K)[None, :] < self.topology.nsrc[:, None]

    def tau_index(self, i: int, j: int, y: int = 0) -> tuple[int, int, int]:
        """Array index of the weight from unit i (0 = bias) to unit j under gate y."""
        if i == 0:
            k = 0
        else:
            k = 1 + self.topology.in_edges[j].index(i)
        return (j, k, y if self.gated else 0)

    def copy(self) -> "ModelParams":
        return ModelParams(self.kind, self.topology, self.n_symbols, self.activation,
                           self.w.copy(), self.tau.copy(), self.rho.copy(), self.v0.copy())

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in (self.w, self.tau, self.rho, self.v0))


@dataclass
class Tape:
    """Per-step record of a forward pass.

    ``logp[t]`` is log pi_t(x_t) and ``loglik`` the masked sum, both in nats.
    ``B`` and ``m`` are filled later by the backward pass and metric code.
    """

    V: np.ndarray
    a: np.ndarray
    E: np.ndarray
    pi: np.ndarray
    logp: np.ndarray
    loglik: float
    B: np.ndarray | None = field(default=None, repr=False)
    m: np.ndarray | None = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return int(self.V.shape[0])

    @property
    def bits(self) -> float:
        return self.loglik / LN2

    def to_csv(self, path, tokens=None, mask=None) -> None:
        """Debug dump: t, V_j, a_j, pi_t(x_t), masked log-loss in bits."""
        import csv

        N1 = self.V.shape[1]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t"] + [f"V{j}" for j in range(1, N1)] + [f"a{j}" for j in range(1, N1)]
                        + ["p_x", "logloss_bits"])
            for t in range(self.T):
                chi = 1.0 if mask is None else float(mask[t])
                wr.writerow([t, *self.V[t, 1:], *self.a[t, 1:], math.exp(self.logp[t]),
                             -chi * self.logp[t] / LN2])


def _log_softmax(E: np.ndarray) -> np.ndarray:
    mx = E.max(axis=-1, keepdims=True)
    z = E - mx
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_output(a, w) -> np.ndarray:
    """Output distribution for activity vector(s) ``a`` including the bias slot."""
    E = np.asarray(a, dtype=float) @ np.asarray(w, dtype=float)
    return np.exp(_log_softmax(E))


def _input_weights(params: ModelParams, x: int, j: int, k: int) -> float:
    return params.tau[j, k, x if params.gated else 0]


def _step(params: ModelParams, V, a, x: int) -> np.ndarray:
    topo = params.topology
    out = np.zeros_like(V)
    for j in range(1, topo.n_units + 1):
        acc = 0.0
        for k in range(topo.nsrc[j]):
            acc += _input_weights(params, x, j, k) * a[topo.src[j, k]]
        if params.use_rho:
            acc += params.rho[j, x]
        if params.leaky:
            acc += V[j]
        out[j] = acc
    return out


def _checked_activity(params, V):
    a = params.activation.s(V)
    a[0] = 1.0
    return a


def step_glnn(V, a, x: int, params: ModelParams) -> np.ndarray:
    """One leaky gated transition; returns the next pre-activations (slot 0 unused)."""
    if params.kind != "glnn":
        raise ValueError("step_glnn needs a GLNN")
    return _step(params, np.asarray(V, dtype=float), np.asarray(a, dtype=float), x)


def step_gnn(a, x: int, params: ModelParams):
    if params.kind != "gnn":
        raise ValueError("step_gnn needs a GNN")
    V = _step(params, np.zeros(len(a)), np.asarray(a, dtype=float), x)
    return V, _checked_activity(params, V)


def step_rnn(a, x: int, params: ModelParams):
    if params.kind != "rnn":
        raise ValueError("step_rnn needs an RNN")
    V = _step(params, np.zeros(len(a)), np.asarray(a, dtype=float), x)
    return V, _checked_activity(params, V)


def forward(params: ModelParams, seq: SymbolSequence) -> Tape:
    """Run the network over ``seq`` and score the masked log-likelihood."""
    if seq.alphabet.size != params.n_symbols:
        raise ValueError("sequence alphabet does not match the model")
    x = seq.tokens
    T = len(x)
    N1 = params.n_units + 1
    V = np.empty((T, N1))
    a = np.empty((T, N1))
    topo = params.topology
    bad = _kernels.evolve(x, params.v0, topo.src, topo.nsrc, params.tau, params.rho,
                          params.leaky, params.gated, params.use_rho,
                          params.activation.code, V, a)
    if bad >= 0:
        raise DivergenceError(int(bad))
    return score_activity(params.w, V, a, seq)


def score_activity(w: np.ndarray, V, a, seq: SymbolSequence) -> Tape:
    """Output layer on a precomputed trajectory (the dynamics ignore ``w``)."""
    E = a @ w
    logpi = _log_softmax(E)
    if not np.isfinite(logpi).all():
        bad = int(np.argmin(np.isfinite(logpi).all(axis=1)))
        raise DivergenceError(bad)
    x = seq.tokens
    logp = logpi[np.arange(len(x)), x]
    loglik = math.fsum(logp[seq.mask > 0])
    return Tape(V=V, a=a, E=E, pi=np.exp(logpi), logp=logp, loglik=loglik)


def forward_reference(params: ModelParams, seq: SymbolSequence, inject=None) -> float:
    """Plain-Python forward pass returning the masked log-likelihood in nats.

    ``inject=(t, j, delta)`` adds ``delta`` to V_j at time t before it is
    used, which gives a finite-difference handle on dlogL/dV_j^t.
    """
    act = params.activation
    topo = params.topology
    N1 = topo.n_units + 1
    A = params.n_symbols
    V = [float(v) for v in params.v0]
    V[0] = 0.0
    total = 0.0
    for t, x in enumerate(int(v) for v in seq.tokens):
        if inject is not None and inject[0] == t:
            V[inject[1]] += inject[2]
        a = [1.0] + [float(act.s(V[j])) for j in range(1, N1)]
        E = [sum(a[i] * params.w[i, y] for i in range(N1)) for y in range(A)]
        mx = max(E)
        lse = mx + math.log(sum(math.exp(e - mx) for e in E))
        if seq.mask[t]:
            total += E[x] - lse
        g = x if params.gated else 0
        nxt = [0.0] * N1
        for j in range(1, N1):
            acc = params.tau[j, 0, g]
            for i in topo.in_edges[j]:
                acc += params.tau[j, 1 + topo.in_edges[j].index(i), g] * a[i]
            if params.use_rho:
                acc += params.rho[j, x]
            if params.leaky:
                acc += V[j]
            nxt[j] = acc
        V = nxt
    return total


# -- affine correspondence between tanh and logistic units -------------------
# tanh(v) = 2 * logistic(2 v) - 1, so a tanh network with pre-activations V is
# the logistic network with pre-activations 2 V and activities (a + 1) / 2.

def _source_sum(params: ModelParams, tau: np.ndarray) -> np.ndarray:
    """Sum of non-bias incoming weights per (unit, gate)."""
    mask = params.edge_mask()[:, :, None].copy()
    mask[:, 0] = False
    return (tau * mask).sum(axis=1)


def tanh_to_logistic(params: ModelParams) -> ModelParams:
    if params.activation is not TANH:
        raise ValueError("expected a tanh model")
    p = params.copy()
    p.activation = LOGISTIC
    p.tau = 4.0 * params.tau
    p.tau[:, 0, :] = 2.0 * (params.tau[:, 0, :] - _source_sum(params, params.tau))
    p.tau[0] = 0.0
    p.w = 2.0 * params.w
    p.w[0] = params.w[0] - params.w[1:].sum(axis=0)
    p.rho = 2.0 * params.rho
    p.v0 = 2.0 * params.v0
    return p


def logistic_to_tanh(params: ModelParams) -> ModelParams:
    if params.activation is not LOGISTIC:
        raise ValueError("expected a logistic model")
    p = params.copy()
    p.activation = TANH
    p.tau = params.tau / 4.0
    p.tau[:, 0, :] = params.tau[:, 0, :] / 2.0 + _source_sum(params, p.tau)
    p.tau[0] = 0.0
    p.w = params.w / 2.0
    p.w[0] = params.w[0] + p.w[1:].sum(axis=0)
    p.rho = params.rho / 2.0
    p.v0 = params.v0 / 2.0
    return p
