"""Alternating two-phase gradient ascent with adaptive learning rates.

Each full step first updates the writing weights, then the transition
weights (and GLNN start values). A candidate update is kept only if the
training log-likelihood does not decrease; otherwise the phase's learning
rate is halved and the same direction is retried. Successful steps grow the
rate by 10%.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import metric
from .backprop import backward, writing_grad
from .dynamics import LN2, DivergenceError, ModelParams, Tape, forward, score_activity
from .evaluation import regularized_validation_ll
from .seqdata import SymbolSequence, compute_stats

log = logging.getLogger(__name__)

W_RULES = ("qdh", "dh")
TAU_RULES = ("ruop", "rbpm", "qdruop", "qdrbpm", "fb", "rms")


@dataclass
class TrainerConfig:
    rule_w: str = "qdh"
    rule_tau: str = "rbpm"
    eta_w: float | None = None        # None: 1/N
    eta_tau: float | None = None
    eps_tau: float = 1.0
    eps_w: float | None = None        # None: masked symbol frequency + roundoff
    max_halvings: int = 30
    grow: float = 1.1
    max_steps: int | None = None
    budget_sec: float | None = None
    rms_decay: float = 0.9
    rms_floor: float = 1e-8
    train_v0: bool | None = None      # None: only for GLNN
    validate_every: int = 1
    target_valid_bits: float | None = None

    def __post_init__(self):
        self.rule_w = self.rule_w.lower()
        self.rule_tau = self.rule_tau.lower()
        if self.rule_w not in W_RULES:
            raise ValueError(f"unknown writing rule {self.rule_w!r}")
        if self.rule_tau not in TAU_RULES:
            raise ValueError(f"unknown transition rule {self.rule_tau!r}")
        for name in ("eta_w", "eta_tau"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LineSearchResult:
    accepted: bool
    eta: float          # rate to use next time
    value: float
    payload: object
    halvings: int


def line_search(eta: float, candidate: Callable[[float], tuple], current: float,
                max_halvings: int = 30, grow: float = 1.1) -> LineSearchResult:
    """Try ``candidate(eta)`` and halve eta until the value does not decrease.

    ``candidate`` returns ``(value, payload)``; a non-finite value or a
    :class:`DivergenceError` counts as a rejection. On success the returned
    rate is the accepted one times ``grow``; after ``max_halvings`` failed
    retries the phase is skipped and the halved rate is kept.
    """
    for h in range(max_halvings + 1):
        try:
            value, payload = candidate(eta)
        except (DivergenceError, FloatingPointError):
            value, payload = -math.inf, None
        if math.isfinite(value) and value >= current:
            return LineSearchResult(True, eta * grow, value, payload, h)
        eta *= 0.5
    return LineSearchResult(False, eta, current, None, max_halvings + 1)


@dataclass
class TrainState:
    params: ModelParams
    eta_w: float
    eta_tau: float
    tape: Tape
    step: int = 0
    best_valid_bits: float = -math.inf
    best_params: ModelParams | None = None
    best_step: int = 0
    log: list = field(default_factory=list)
    rms: dict | None = None
    stalls: int = 0
    started: float = field(default_factory=time.perf_counter)
    eps_w: np.ndarray | None = None
    nu_tilde: np.ndarray | None = None

    @property
    def train_bits(self) -> float:
        return self.tape.loglik / LN2

    def elapsed(self) -> float:
        return time.perf_counter() - self.started


def start_state(params: ModelParams, seq: SymbolSequence, config: TrainerConfig) -> TrainState:
    n = params.n_units
    eta_w = config.eta_w if config.eta_w is not None else 1.0 / n
    eta_tau = config.eta_tau if config.eta_tau is not None else 1.0 / n
    eps_w = (metric.writing_dampening(seq) if config.eps_w is None
             else np.full(seq.alphabet.size, float(config.eps_w)))
    return TrainState(params=params.copy(), eta_w=eta_w, eta_tau=eta_tau,
                      tape=forward(params, seq), eps_w=eps_w,
                      nu_tilde=np.array(compute_stats(seq).nu_tilde))


def _record(state: TrainState, phase: str, res: LineSearchResult | None, valid_bits=None) -> dict:
    rec = {"step": state.step, "phase": phase, "eta_w": state.eta_w, "eta_tau": state.eta_tau,
           "train_ll_bits": state.train_bits, "valid_ll_bits": valid_bits,
           "wall_ms": 1000.0 * state.elapsed(),
           "halvings": 0 if res is None else res.halvings,
           "accepted": True if res is None else res.accepted,
           "stalled": False if res is None else not res.accepted}
    state.log.append(rec)
    return rec


# -- writing weights ---------------------------------------------------------

def writing_direction(state: TrainState, seq: SymbolSequence, config: TrainerConfig) -> np.ndarray:
    W = writing_grad(state.tape, seq)
    terms = metric.writing_hessian_terms(state.tape, seq, state.eps_w)
    if config.rule_w == "qdh":
        return metric.qd_direction(W, terms.hdiag, terms.h0)
    return W / terms.hdiag


def w_phase(state: TrainState, seq: SymbolSequence, config: TrainerConfig) -> TrainState:
    direction = writing_direction(state, seq, config)
    base = state.params.w
    tape = state.tape

    def candidate(eta):
        w = base + eta * direction
        cand = score_activity(w, tape.V, tape.a, seq)
        return cand.loglik, (w, cand)

    res = line_search(state.eta_w, candidate, tape.loglik, config.max_halvings, config.grow)
    state.eta_w = res.eta
    if res.accepted:
        state.params.w, state.tape = res.payload
    else:
        state.stalls += 1
        log.info("w-phase stalled at step %d", state.step)
    _record(state, "w", res)
    return state


# -- transition weights ------------------------------------------------------

def fb_update(G_raw, nu_tilde, eta_tau: float) -> np.ndarray:
    """Frequency-adjusted step: symbol-y weights move at eta / nu_tilde[y].

    The last axis of ``G_raw`` must be the symbol (tau gates or RNN input weights).
    """
    nu = np.asarray(nu_tilde, dtype=float)
    scale = np.divide(1.0, nu, out=np.zeros_like(nu), where=nu > 0)
    G = np.asarray(G_raw, dtype=float)
    return eta_tau * G * scale


def rms_update(G_raw, running, eta_tau: float, decay: float = 0.9, floor: float = 1e-8):
    """RMS-normalized step. Returns ``(increment, new_running_mean_square)``.

    The running mean square starts at the first squared gradient.
    """
    G = np.asarray(G_raw, dtype=float)
    sq = G * G
    running = sq if running is None else decay * running + (1.0 - decay) * sq
    return eta_tau * G / (np.sqrt(running) + floor), running


def transition_direction(state: TrainState, seq: SymbolSequence, config: TrainerConfig):
    """Unit-rate directions ``(d_tau, d_rho, d_v0)`` for the current parameters."""
    params = state.params
    tape = state.tape
    bw = backward(params, tape, seq)
    rule = config.rule_tau
    train_v0 = params.leaky if config.train_v0 is None else config.train_v0
    eps = config.eps_tau
    d_v0 = np.zeros_like(params.v0)

    if rule in ("ruop", "rbpm", "qdruop", "qdrbpm"):
        m = metric.modulus(rule.removeprefix("qd"), params, tape, seq, bw.B)
        tape.m = m
        if rule.startswith("qd"):
            terms = metric.qd_accumulate(params, tape, m, seq)
            d_tau, d_rho = metric.qd_transition_direction(params, bw.G, bw.R, terms, eps)
        else:
            if params.use_rho:
                raise ValueError("full metric blocks are not supported for the RNN; use a qd rule")
            M = metric.metric_block_accumulate(params, tape, m, seq)
            d_tau = metric.solve_blocks(M, bw.G, params.topology.nsrc, eps)
            d_rho = np.zeros_like(params.rho)
        if train_v0:
            d_v0 = metric.start_value_direction(bw.B[0], m[0], eps)
    elif rule == "fb":
        if params.gated:
            d_tau = fb_update(bw.G, state.nu_tilde, 1.0)
            d_rho = np.zeros_like(params.rho)
        else:
            d_tau = bw.G.copy()
            d_rho = fb_update(bw.R, state.nu_tilde, 1.0)
        if train_v0:
            d_v0 = bw.B[0].copy()
    else:
        run = state.rms or {}
        d_tau, run["tau"] = rms_update(bw.G, run.get("tau"), 1.0, config.rms_decay, config.rms_floor)
        d_rho, run["rho"] = rms_update(bw.R, run.get("rho"), 1.0, config.rms_decay, config.rms_floor)
        if train_v0:
            d_v0, run["v0"] = rms_update(bw.B[0], run.get("v0"), 1.0, config.rms_decay, config.rms_floor)
        state.rms = run
    d_tau = d_tau * params.edge_mask()[:, :, None]
    d_v0[0] = 0.0
    return d_tau, d_rho, d_v0


def tau_phase(state: TrainState, seq: SymbolSequence, config: TrainerConfig) -> TrainState:
    d_tau, d_rho, d_v0 = transition_direction(state, seq, config)
    base = state.params

    def candidate(eta):
        p = base.copy()
        p.tau += eta * d_tau
        p.rho += eta * d_rho
        p.v0 += eta * d_v0
        tape = forward(p, seq)
        return tape.loglik, (p, tape)

    res = line_search(state.eta_tau, candidate, state.tape.loglik, config.max_halvings, config.grow)
    state.eta_tau = res.eta
    if res.accepted:
        state.params, state.tape = res.payload
    else:
        state.stalls += 1
        log.info("tau-phase stalled at step %d", state.step)
    _record(state, "tau", res)
    return state


def line_search_accept(state: TrainState, candidate: Callable[[float], tuple], phase: str,
                       config: TrainerConfig | None = None) -> TrainState:
    """Generic acceptance for a phase given ``candidate(eta) -> (loglik, params)``."""
    config = config or TrainerConfig()
    attr = "eta_w" if phase == "w" else "eta_tau"
    res = line_search(getattr(state, attr), candidate, state.tape.loglik,
                      config.max_halvings, config.grow)
    setattr(state, attr, res.eta)
    if res.accepted and res.payload is not None:
        state.params = res.payload
    return state


# -- driver ------------------------------------------------------------------

def _score_valid(state: TrainState, valid: SymbolSequence | None):
    if valid is None:
        return None
    try:
        return regularized_validation_ll(state.params, valid)
    except DivergenceError:
        return -math.inf


def _update_best(state: TrainState, valid_bits):
    score = valid_bits if valid_bits is not None else state.train_bits
    if score > state.best_valid_bits or state.best_params is None:
        state.best_valid_bits = score
        state.best_params = state.params.copy()
        state.best_step = state.step


def train(config: TrainerConfig, params: ModelParams, train_seq: SymbolSequence,
          valid_seq: SymbolSequence | None = None, on_record: Callable[[dict], None] | None = None,
          should_stop: Callable[[TrainState], bool] | None = None) -> TrainState:
    """Alternate w- and tau-phases until the step or time budget runs out.

    The best validation score is tracked with a parameter snapshot. Without
    a validation sequence the training score stands in for it.
    ``should_stop`` is polled after every full step for custom early stopping.
    """
    state = start_state(params, train_seq, config)
    v = _score_valid(state, valid_seq)
    _update_best(state, v)
    rec = _record(state, "init", None, v)
    if on_record:
        on_record(rec)
    while True:
        if config.max_steps is not None and state.step >= config.max_steps:
            break
        if config.budget_sec is not None and state.elapsed() >= config.budget_sec:
            break
        if config.max_steps is None and config.budget_sec is None:
            break
        if (config.target_valid_bits is not None
                and state.best_valid_bits >= config.target_valid_bits):
            break
        state.step += 1
        w_phase(state, train_seq, config)
        if on_record:
            on_record(state.log[-1])
        tau_phase(state, train_seq, config)
        rec = state.log[-1]
        if valid_seq is None:
            _update_best(state, None)
        elif state.step % config.validate_every == 0:
            rec["valid_ll_bits"] = _score_valid(state, valid_seq)
            _update_best(state, rec["valid_ll_bits"])
        rec["wall_ms"] = 1000.0 * state.elapsed()
        if on_record:
            on_record(rec)
        if should_stop is not None and should_stop(state):
            break
    return state


_WARM = False


def warm_up() -> None:
    """Compile every kernel on a tiny problem so timed runs exclude JIT cost."""
    global _WARM
    if _WARM:
        return
    from .initialization import initialize
    from .topology import build_random_graph

    seq = SymbolSequence.from_text("abcab\nab")
    topo = build_random_graph(3, 2, seed=0)
    for kind, rules in (("glnn", ("rbpm", "ruop", "qdrbpm")), ("rnn", ("qdruop",))):
        params = initialize(kind, topo, seq)
        for rule in rules:
            train(TrainerConfig(rule_tau=rule, max_steps=1), params, seq, seq)
    _WARM = True
