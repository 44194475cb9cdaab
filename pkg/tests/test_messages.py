import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from sggmdar.messages import (
    backward_pass,
    backward_pass_logE,
    forward_pass,
    forward_pass_logE,
    greedy_decode_logE,
    local_state_probs,
    sample_states_logE,
)
from sggmdar.model import DarParams, Dataset, EmissionParams
from sggmdar.numerics import rng_stream


def _case(T, M, P, seed, spread=2.0):
    rng = np.random.default_rng(seed)
    logE = rng.normal(size=(T, M)) * spread
    phi = rng.dirichlet(np.ones(P + 1))
    pi = rng.dirichlet(np.ones(M))
    return logE, phi, pi


def test_backward_one_state():
    logE = np.random.default_rng(0).normal(size=(7, 1))
    b = backward_pass_logE(logE, np.array([0.3, 0.7]), np.array([1.0]))
    want = np.concatenate((np.cumsum(logE[::-1, 0])[::-1], [0.0]))
    assert np.allclose(b.unnormalized()[:, 0], want, atol=1e-12)


def test_backward_base_case():
    logE, phi, pi = _case(5, 3, 2, 1)
    E = np.exp(logE)
    eta = oracles.eta_array(phi, pi)
    b = backward_pass_logE(logE, phi, pi)
    for j1 in range(3):
        want = sum(eta[(jp, j1, j0)] * E[4, j0] for jp in range(3) for j0 in range(3))
        assert b.unnormalized()[4, j1] == pytest.approx(np.log(want), abs=1e-12)


@pytest.mark.parametrize("T,M,P,seed", [(6, 2, 2, 0), (6, 2, 2, 1), (5, 3, 2, 2), (6, 2, 3, 3), (5, 3, 1, 4)])
def test_backward_matches_naive(T, M, P, seed):
    logE, phi, pi = _case(T, M, P, seed)
    b = backward_pass_logE(logE, phi, pi)
    nb = oracles.naive_backward(np.exp(logE), phi, pi)
    assert np.allclose(b.unnormalized(), np.log(nb), atol=1e-10, rtol=0)


def test_backward_rows_normalised():
    logE, phi, pi = _case(50, 3, 2, 5, spread=30.0)
    b = backward_pass_logE(logE, phi, pi)
    assert np.all(np.isfinite(b.log_beta))
    assert np.allclose(b.log_beta.max(axis=1), 0.0)


def test_forward_one_state():
    logE = np.random.default_rng(0).normal(size=(6, 1))
    f = forward_pass_logE(logE, np.array([0.3, 0.7]), np.array([1.0]))
    assert np.allclose(f.log_alpha[1:, 0], np.cumsum(logE[:, 0]), atol=1e-12)


def test_forward_exhaustive_paths():
    logE, phi, pi = _case(4, 2, 1, 7)
    E = np.exp(logE)
    joint = oracles.exhaustive_joint(E, phi, pi)
    f = forward_pass_logE(logE, phi, pi)
    for r in range(1, 5):
        for j in range(2):
            # p(y[:r], gamma[r-1]=j) marginalising the future
            want = sum(
                np.prod([(phi[0] * pi[s[t]] + phi[1] * (s[t - 1] == s[t]) if t else 0.5) * E[t, s[t]] for t in range(r)])
                for s in itertools.product(range(2), repeat=r) if s[-1] == j
            )
            assert f.log_alpha[r, j] == pytest.approx(np.log(want), abs=1e-10)
    assert np.logaddexp.reduce(f.log_alpha[4]) == pytest.approx(np.log(sum(joint.values())), abs=1e-10)


@pytest.mark.parametrize("T,M,P,seed", [(6, 2, 2, 0), (5, 3, 2, 1), (6, 2, 3, 2)])
def test_forward_tuples_match_naive(T, M, P, seed):
    logE, phi, pi = _case(T, M, P, seed)
    f = forward_pass_logE(logE, phi, pi, keep_tuples=True)
    naive = oracles.naive_forward_tuples(np.exp(logE), phi, pi)
    for r in range(P, T + 1):
        for tup, val in naive[r].items():
            assert f.tuples[r][tup] == pytest.approx(np.log(val), abs=1e-10)
        # marginalising the older indices gives the reported marginal row
        assert np.allclose(np.logaddexp.reduce(f.tuples[r].reshape(M, -1), axis=1), f.log_alpha[r], atol=1e-10)


def test_forward_relabel_symmetry():
    logE, phi, pi = _case(6, 3, 2, 11)
    perm = np.array([2, 0, 1])
    f = forward_pass_logE(logE, phi, pi, keep_tuples=True)
    g = forward_pass_logE(logE[:, perm], phi, pi[perm], keep_tuples=True)
    assert np.allclose(g.log_alpha[1:], f.log_alpha[1:, perm])
    assert np.allclose(g.tuples[6], f.tuples[6][np.ix_(perm, perm)])


def test_local_one_state():
    logE = np.random.default_rng(0).normal(size=(5, 1))
    phi, pi = np.array([0.5, 0.5]), np.array([1.0])
    p = local_state_probs(forward_pass_logE(logE, phi, pi), backward_pass_logE(logE, phi, pi))
    assert np.allclose(p, 1.0)


def test_local_exhaustive_first_order():
    logE, phi, pi = _case(4, 2, 1, 3)
    p = local_state_probs(forward_pass_logE(logE, phi, pi), backward_pass_logE(logE, phi, pi))
    assert np.allclose(p, oracles.exhaustive_marginals(np.exp(logE), phi, pi), atol=1e-10)


def test_local_symmetric_two_state():
    logE = np.zeros((8, 2))
    phi, pi = np.array([0.3, 0.4, 0.3]), np.array([0.5, 0.5])
    p = local_state_probs(forward_pass_logE(logE, phi, pi), backward_pass_logE(logE, phi, pi))
    assert np.allclose(p, 0.5)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 4))
def test_local_rows_sum_to_one(seed, P, M):
    logE, phi, pi = _case(12, M, P, seed, spread=20.0)
    p = local_state_probs(forward_pass_logE(logE, phi, pi), backward_pass_logE(logE, phi, pi))
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-10)


@pytest.mark.parametrize("P,Pmax,seed", [(1, 3, 0), (2, 3, 1), (1, 2, 2)])
def test_zero_padded_lags_agree_after_normalisation(P, Pmax, seed):
    # summing over a zero-padded Pmax history only multiplies each step by a
    # constant, so normalised rows outside the initial window coincide
    logE, phi, pi = _case(8, 2, P, seed)
    padded = np.concatenate((phi, np.zeros(Pmax - P)))
    nb = np.log(oracles.naive_backward(np.exp(logE), padded, pi))
    b = backward_pass_logE(logE, phi, pi)
    rows = slice(Pmax, 9)
    assert np.allclose(nb[rows] - nb[rows].max(axis=1, keepdims=True), b.log_beta[rows], atol=1e-10)


def test_wrappers_use_parameters():
    rng = np.random.default_rng(4)
    y = rng.normal(size=(6, 2))
    em = EmissionParams(rng.normal(size=(2, 2)), np.stack([np.eye(2), 2 * np.eye(2)]))
    dar = DarParams([0.3, 0.5, 1.0], [0, 1], [0.4, 0.6])
    b = backward_pass(Dataset(y), dar, em)
    f = forward_pass(Dataset(y), dar, em)
    assert b.log_beta.shape == (7, 2) and f.log_alpha.shape == (7, 2)


def test_sampler_one_state_constant():
    logE = np.zeros((10, 1))
    phi, pi = np.array([0.5, 0.5]), np.array([1.0])
    g = sample_states_logE(rng_stream(0), logE, backward_pass_logE(logE, phi, pi), phi, pi)
    assert np.all(g == 0)


def test_sampler_dominant_state():
    logE = np.tile([0.0, -50.0, -50.0], (40, 1))
    phi, pi = np.array([0.3, 0.7]), np.array([0.2, 0.4, 0.4])
    beta = backward_pass_logE(logE, phi, pi)
    rng = rng_stream(1)
    hits = sum(np.all(sample_states_logE(rng, logE, beta, phi, pi) == 0) for _ in range(2000))
    assert hits / 2000 >= 0.999


def test_greedy_matches_reimplementation():
    for seed in range(5):
        logE, phi, pi = _case(7, 3, 2, seed)
        beta = backward_pass_logE(logE, phi, pi)
        got = greedy_decode_logE(logE, beta, phi, pi)
        want = oracles.naive_greedy(np.exp(logE), phi, pi, oracles.naive_backward(np.exp(logE), phi, pi))
        assert np.array_equal(got, want)


def test_greedy_tie_goes_low():
    logE = np.zeros((5, 3))
    phi, pi = np.array([1.0, 0.0]), np.full(3, 1 / 3)
    g = greedy_decode_logE(logE, backward_pass_logE(logE, phi, pi), phi, pi)
    assert np.all(g == 0)
