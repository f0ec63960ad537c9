"""scikit-learn style wrapper around initialization and training."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .dynamics import LN2, MODEL_KINDS, forward
from .evaluation import regularized_validation_ll, sample
from .initialization import initialize
from .seqdata import SymbolSequence, as_sequence, build_alphabet
from .topology import build_random_graph, complete_graph, resolve_connectivity
from .trainer import TAU_RULES, W_RULES, TrainerConfig, train


class SequenceModel(BaseEstimator):
    """Recurrent next-symbol model for a single long sequence.

    ``fit`` takes a string (or a :class:`SymbolSequence`) and optionally a
    validation sequence used for early stopping. ``score`` returns the
    regularized log-likelihood in bits per predicted symbol, so larger is
    better as scikit-learn expects.
    """

    def __init__(self, model="glnn", n_units=16, connectivity="sparse", rule_w="qdh",
                 rule_tau="rbpm", eta_w=None, eta_tau=None, max_steps=100, budget_sec=None,
                 activation="tanh", noise=1.0, mask="all", random_state=0):
        self.model = model
        self.n_units = n_units
        self.connectivity = connectivity
        self.rule_w = rule_w
        self.rule_tau = rule_tau
        self.eta_w = eta_w
        self.eta_tau = eta_tau
        self.max_steps = max_steps
        self.budget_sec = budget_sec
        self.activation = activation
        self.noise = noise
        self.mask = mask
        self.random_state = random_state

    def _validate_hyperparams(self):
        if str(self.model).lower() not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if not isinstance(self.n_units, (int, np.integer)) or self.n_units < 1:
            raise ValueError("n_units must be a positive integer")
        if self.rule_w not in W_RULES or self.rule_tau not in TAU_RULES:
            raise ValueError("unknown update rule")
        if self.max_steps is None and self.budget_sec is None:
            raise ValueError("set max_steps or budget_sec")

    def _seq(self, X, alphabet=None):
        return as_sequence(X, alphabet, None if isinstance(X, SymbolSequence) else self.mask)

    def fit(self, X, y=None, X_valid=None):
        self._validate_hyperparams()
        if isinstance(X, SymbolSequence):
            alpha = X.alphabet
        elif isinstance(X, str):
            alpha = build_alphabet(X)
        else:
            raise TypeError("X must be a string or a SymbolSequence")
        seq = self._seq(X, alpha)
        valid = None if X_valid is None else self._seq(X_valid, alpha)
        kind = str(self.model).lower()
        d = resolve_connectivity(self.connectivity, kind, alpha.size, self.n_units)
        topo = (complete_graph(self.n_units) if d >= self.n_units
                else build_random_graph(self.n_units, d, seed=self.random_state))
        params = initialize(kind, topo, seq, seed=self.random_state,
                            activation=self.activation, noise=self.noise)
        cfg = TrainerConfig(rule_w=self.rule_w, rule_tau=self.rule_tau, eta_w=self.eta_w,
                            eta_tau=self.eta_tau, max_steps=self.max_steps,
                            budget_sec=self.budget_sec)
        state = train(cfg, params, seq, valid)
        self.alphabet_ = alpha
        self.topology_ = topo
        self.params_ = state.best_params
        self.history_ = state.log
        self.n_steps_ = state.step
        self.best_score_bits_ = state.best_valid_bits
        return self

    def score(self, X, y=None) -> float:
        check_is_fitted(self, "params_")
        seq = self._seq(X, self.alphabet_)
        return regularized_validation_ll(self.params_, seq) / seq.n_predicted

    def predict_proba(self, X) -> np.ndarray:
        """Row t is the predicted distribution of symbol t given the symbols before it."""
        check_is_fitted(self, "params_")
        return forward(self.params_, self._seq(X, self.alphabet_)).pi

    def predict(self, X) -> str:
        """Most probable symbol at every position, as a string."""
        proba = self.predict_proba(X)
        return self.alphabet_.decode(np.argmax(proba, axis=1))

    def log_likelihood_bits(self, X) -> float:
        check_is_fitted(self, "params_")
        return forward(self.params_, self._seq(X, self.alphabet_)).loglik / LN2

    def sample(self, length: int, seed=None) -> str:
        check_is_fitted(self, "params_")
        text, _ = sample(self.params_, length, seed, self.alphabet_)
        return text
