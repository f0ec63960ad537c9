import numpy as np
import pytest

from glnn import metric
from glnn.backprop import gradient
from glnn.dynamics import forward
from glnn.metric import MetricError
from glnn.seqdata import Alphabet, SymbolSequence

from helpers import random_model


def test_writing_dampening_is_frequency_plus_roundoff():
    seq = SymbolSequence([0, 0, 1, 2], Alphabet(("a", "b", "c")), [1, 1, 0, 1])
    eps = metric.writing_dampening(seq)
    assert np.allclose(eps - metric.UNIT_ROUNDOFF, [2 / 3, 0, 1 / 3])
    assert np.all(eps > 0)


def test_hessian_terms_saturated_and_bias_row():
    rng = np.random.default_rng(0)
    p, seq = random_model("glnn", rng)
    tape = forward(p, seq)
    terms = metric.writing_hessian_terms(tape, seq)
    assert np.allclose(terms.hdiag[0] - terms.eps, terms.h0[0])
    tape.pi[:] = np.eye(seq.alphabet.size)[seq.tokens]
    sat = metric.writing_hessian_terms(tape, seq)
    assert np.allclose(sat.hdiag, np.broadcast_to(sat.eps, sat.hdiag.shape))


def test_hessian_diag_matches_fisher():
    rng = np.random.default_rng(1)
    p, seq = random_model("gnn", rng)
    tape = forward(p, seq)
    terms = metric.writing_hessian_terms(tape, seq)
    F = metric.writing_fisher(tape, seq)
    N1, A = p.w.shape
    diag = np.diag(F).reshape(N1, A)
    assert np.allclose(terms.hdiag - terms.eps[None, :], diag, atol=1e-12)
    assert np.allclose(terms.h0, F.reshape(N1, A, N1, A)[0, np.arange(A), :, np.arange(A)].T,
                       atol=1e-12)


def test_qd_direction_examples():
    G = np.array([[0.0, 0.0], [0.0, 0.0]])
    assert np.all(metric.qd_direction(G, np.ones((2, 2)), np.zeros((2, 2))) == 0)
    Gb = np.array([[3.0]])
    assert metric.qd_direction(Gb, np.array([[2.0]]), np.array([[2.0]]))[0, 0] == 1.5
    # diagonal metric: per-coordinate division
    G = np.array([1.0, 2.0, 3.0])
    Md = np.array([2.0, 4.0, 5.0])
    M0 = np.array([2.0, 0.0, 0.0])
    assert np.allclose(metric.qd_direction(G, Md, M0), G / Md)


def test_qd_exact_for_one_source():
    rng = np.random.default_rng(2)
    for _ in range(5):
        X = rng.normal(size=(2, 6))
        M = X @ X.T + 0.1 * np.eye(2)
        G = rng.normal(size=2)
        qd = metric.qd_direction(G, np.diag(M), M[0])
        assert np.allclose(qd, metric.dampened_solve(M, G), rtol=0, atol=1e-10)
        upd = metric.qd_reduction_update(np.zeros(2), G, np.diag(M) - 1.0, M[0], 1.0, eps=1.0)
        assert np.allclose(upd, metric.dampened_solve(M - np.eye(2), G, eps=1.0), atol=1e-10)


def test_qd_solves_each_bias_pair():
    # With several sources, each non-bias coordinate is the exact solution of
    # its own 2x2 (bias, source) system; the bias row then closes row 0 exactly.
    rng = np.random.default_rng(3)
    n = 5
    M = np.zeros((n, n))
    M[np.diag_indices(n)] = rng.uniform(2, 4, n)
    M[0, 1:] = M[1:, 0] = rng.uniform(-0.5, 0.5, n - 1)
    G = rng.normal(size=n)
    qd = metric.qd_direction(G, np.diag(M), M[0])
    for i in range(1, n):
        sub = M[np.ix_([0, i], [0, i])]
        assert np.isclose(qd[i], np.linalg.solve(sub, G[[0, i]])[1], rtol=0, atol=1e-12)
    assert np.isclose(M[0] @ qd, G[0], rtol=0, atol=1e-12)
    # Without bias coupling it is the diagonal solve.
    M[0, 1:] = M[1:, 0] = 0
    assert np.allclose(metric.qd_direction(G, np.diag(M), M[0]), np.linalg.solve(M, G))


def test_qd_degenerate():
    with pytest.raises(MetricError, match="metric degenerate"):
        metric.qd_direction(np.ones(2), np.array([0.0, 1.0]), np.zeros(2))


def test_dampened_solve_examples():
    assert np.allclose(metric.dampened_solve(np.eye(3), np.array([1.0, 2, 3])), [1, 2, 3])
    assert np.allclose(metric.dampened_solve(2 * np.eye(2), np.array([4.0, 6.0])), [2, 3])
    rng = np.random.default_rng(3)
    X = rng.normal(size=(5, 5))
    M = X @ X.T + 0.1 * np.eye(5)
    G = rng.normal(size=5)
    x = metric.dampened_solve(M, G)
    assert np.linalg.norm(M @ x - G) <= 1e-10 * np.linalg.norm(G)
    with pytest.raises(MetricError, match="not positive definite"):
        metric.dampened_solve(-np.eye(2), np.ones(2))


def test_moduli_examples():
    assert np.all(metric.ruop_modulus(np.zeros((3, 2))) == 0)
    assert metric.ruop_modulus(np.array([[-2.0]]))[0, 0] == 4.0
    rng = np.random.default_rng(4)
    p, seq = random_model("glnn", rng)
    p.w[:] = 0
    p.tau[:] = 0
    tape = forward(p, seq)
    assert np.all(metric.rbpm_modulus(p, tape, seq) == 0)
    with pytest.raises(ValueError):
        metric.modulus("ruop", p, tape, seq)


def test_rbpm_single_step():
    rng = np.random.default_rng(5)
    p, _ = random_model("glnn", rng, N=1, d=1)
    seq = SymbolSequence([2], Alphabet(("a", "b", "c")))
    tape = forward(p, seq)
    m = metric.rbpm_modulus(p, tape, seq)
    ds = p.activation.ds_from_a(tape.a[0, 1])
    var = tape.pi[0] @ p.w[1] ** 2 - (tape.pi[0] @ p.w[1]) ** 2
    assert np.isclose(m[0, 1], ds ** 2 * var, rtol=1e-13) and m[1, 1] == 0


def test_fisher_output_norm_examples():
    assert abs(metric.fisher_output_norm([0.2, 0.8], [3.0, 3.0])) < 1e-15
    assert metric.fisher_output_norm([0.5, 0.5], [1.0, -1.0]) == 1.0
    rng = np.random.default_rng(6)
    pi = rng.dirichlet(np.ones(4))
    dE = rng.normal(size=4)
    dlogpi = dE - pi @ dE
    assert np.isclose(metric.fisher_output_norm(pi, dE), pi @ dlogpi ** 2)


def test_blocks_with_zero_modulus_and_absent_symbol():
    rng = np.random.default_rng(7)
    p, _ = random_model("gnn", rng, A=3)
    seq = SymbolSequence([0, 1, 1, 0, 0, 1], Alphabet(("a", "b", "c")))
    tape, bw = gradient(p, seq)
    M = metric.metric_block_accumulate(p, tape, np.zeros_like(bw.B), seq)
    assert np.all(M == 0)
    m = metric.modulus("rbpm", p, tape, seq)
    M = metric.metric_block_accumulate(p, tape, m, seq)
    assert np.all(M[:, 2] == 0)
    step = metric.solve_blocks(M, bw.G, p.topology.nsrc, 1.0)
    assert np.all(step[:, :, 2] == 0)


@pytest.mark.parametrize("kind", ["glnn", "gnn"])
def test_blocks_symmetric_psd(kind):
    rng = np.random.default_rng(8)
    p, seq = random_model(kind, rng, T=20)
    tape, bw = gradient(p, seq)
    for mk in ("ruop", "rbpm"):
        m = metric.modulus(mk, p, tape, seq, bw.B)
        assert np.all(m >= 0) and np.all(m[-1] == 0)
        M = metric.metric_block_accumulate(p, tape, m, seq)
        assert np.allclose(M, np.swapaxes(M, 2, 3))
        for j in range(1, p.n_units + 1):
            n = p.topology.nsrc[j]
            for g in range(M.shape[1]):
                assert np.linalg.eigvalsh(M[j, g, :n, :n]).min() > -1e-12


@pytest.mark.parametrize("kind", ["glnn", "gnn", "rnn"])
@pytest.mark.parametrize("mk", ["ruop", "rbpm"])
def test_streaming_matches_unfolding(kind, mk):
    rng = np.random.default_rng(9)
    for _ in range(3):
        p, seq = random_model(kind, rng, N=3, T=7)
        tape, bw = gradient(p, seq)
        m = metric.modulus(mk, p, tape, seq, bw.B)
        orc = metric.unfolding_oracle(p, seq, mk, tape)
        assert np.allclose(orc.modulus, m, rtol=0, atol=1e-10)
        assert np.allclose(orc.B, bw.B, rtol=0, atol=1e-12)
        K = p.tau.shape[1]
        q = metric.qd_accumulate(p, tape, m, seq)
        if kind != "rnn":
            M = metric.metric_block_accumulate(p, tape, m, seq)
            for j in range(1, 4):
                assert np.allclose(metric.streaming_unit_matrix(M, j), orc.blocks[j], atol=1e-10)
        for j in range(1, 4):
            for g in range(p.tau.shape[2]):
                for k in range(p.topology.nsrc[j]):
                    assert abs(q.Md[j, k, g] - orc.blocks[j][g * K + k, g * K + k]) < 1e-10
                    assert abs(q.M0[j, k, g] - orc.blocks[j][g * K, g * K + k]) < 1e-10


def test_unfolding_oracle_limits():
    rng = np.random.default_rng(10)
    p, seq = random_model("glnn", rng, N=6, T=5)
    with pytest.raises(ValueError):
        metric.unfolding_oracle(p, seq, "rbpm")
    p, seq = random_model("glnn", rng, N=3, T=5)
    with pytest.raises(ValueError):
        metric.unfolding_oracle(p, seq, "kfac")


def test_oracle_single_step_and_frozen_glnn():
    rng = np.random.default_rng(11)
    p, _ = random_model("glnn", rng, N=3)
    seq = SymbolSequence([1], Alphabet(("a", "b", "c")))
    orc = metric.unfolding_oracle(p, seq, "rbpm")
    assert np.all(orc.blocks == 0)  # no transition inside a length-1 sequence
    p, seq = random_model("glnn", rng, N=3, T=6)
    p.tau[:] = 0
    tape = forward(p, seq)
    orc = metric.unfolding_oracle(p, seq, "rbpm", tape)
    Q = metric.output_variance(p.w, tape, seq)
    D = p.activation.ds_from_a(tape.a)
    expected = np.zeros_like(orc.modulus)
    for t in range(5, -1, -1):
        expected[t] = expected[t + 1] + D[t] ** 2 * Q[t]
    expected[:, 0] = 0
    assert np.allclose(orc.modulus, expected, atol=1e-14)


def test_start_value_direction():
    d = metric.start_value_direction(np.array([5.0, 2.0, -1.0]), np.array([0.0, 1.0, 3.0]), 1.0)
    assert np.allclose(d, [0.0, 1.0, -0.25])
