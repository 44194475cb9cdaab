import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from sggmdar.diagnostics import heidelberger_welch, pcramer, spectrum0_ar
from sggmdar.errors import DimensionMismatch, EmptyChain, NoMatchingSnapshots, TraceTooShort
from sggmdar.inference import (
    average_parameters,
    best_permutation,
    ecr_relabel,
    global_decode,
    local_decode,
    mismatches,
    modal_counts,
    select_edges,
    summarize,
)
from sggmdar.messages import backward_pass_logE
from sggmdar.model import Dataset, EmissionParams, emission_matrix
from sggmdar.numerics import rng_stream
from sggmdar.sampler import Chain


def make_chain(gammas, orders=None, M=3, D=2, Pmax=3, seed=0):
    """Chain with given allocations and random but valid parameters."""
    rng = np.random.default_rng(seed)
    gammas = np.asarray(gammas)
    S, T = gammas.shape
    ch = Chain.allocate(S, Pmax, M, D, T, S)
    orders = np.full(S, 1) if orders is None else np.asarray(orders)
    for s in range(S):
        P = int(orders[s])
        ch.order[s] = P
        ch.v[s, :P] = rng.uniform(0.1, 0.9, size=P)
        ch.v[s, P] = 1.0
        ch.pi[s] = rng.dirichlet(np.ones(M))
        ch.mu[s] = rng.normal(size=(M, D))
        for j in range(M):
            A = rng.normal(size=(D, D))
            ch.omega[s, j] = A @ A.T + D * np.eye(D)
        ch.lam_sq[s] = rng.uniform(0.5, 2, size=(M, D, D))
        ch.tau_sq[s] = rng.uniform(0.5, 2, size=M)
        ch.gamma[s] = gammas[s]
        ch.counts[s] = np.bincount(gammas[s], minlength=M)
        ch.loglik[s] = rng.normal()
    return ch


# --- modal counts ----------------------------------------------------------


def test_modal_single_value():
    ch = make_chain(np.tile([0, 1, 2, 3, 4, 0], (4, 1)), orders=[2] * 4, M=5)
    M_hat, P_hat, m_mass, p_mass = modal_counts(ch)
    assert (M_hat, P_hat) == (5, 2)
    assert m_mass[5] == 1.0 and p_mass[2] == 1.0


def test_modal_majority():
    g = [[0, 1, 2, 3]] * 7 + [[0, 1, 2, 2]] * 3
    ch = make_chain(g, M=5)
    M_hat, _, m_mass, _ = modal_counts(ch)
    assert M_hat == 4 and m_mass[4] == pytest.approx(0.7) and m_mass[3] == pytest.approx(0.3)


def test_modal_tie_goes_small():
    g = [[0, 1, 1, 1]] * 2 + [[0, 1, 2, 2]] * 2
    ch = make_chain(g, orders=[1, 3, 1, 3])
    M_hat, P_hat, _, _ = modal_counts(ch)
    assert M_hat == 2 and P_hat == 1


def test_modal_empty_chain():
    with pytest.raises(EmptyChain):
        modal_counts(make_chain(np.zeros((0, 4), dtype=int)))


@given(st.integers(0, 2**32 - 1))
def test_mass_tables_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    ch = make_chain(rng.integers(3, size=(6, 10)), orders=rng.integers(1, 4, size=6))
    _, _, m_mass, p_mass = modal_counts(ch)
    assert abs(sum(m_mass.values()) - 1) <= 1e-12 and abs(sum(p_mass.values()) - 1) <= 1e-12


# --- relabelling -----------------------------------------------------------


def test_ecr_identity_when_aligned():
    pivot = np.array([0, 0, 1, 2, 2, 1])
    ch = make_chain([pivot, pivot])
    out, perms = ecr_relabel(ch, pivot)
    assert np.array_equal(perms, np.tile(np.arange(3), (2, 1)))
    assert np.array_equal(out.mu, ch.mu)


def test_ecr_recovers_swap():
    pivot = np.array([0, 0, 1, 2, 2, 1, 1])
    swapped = np.array([1, 0, 2])[pivot]
    ch = make_chain([swapped])
    out, perms = ecr_relabel(ch, pivot)
    assert mismatches(out.gamma[0], pivot) == 0
    # parameters move with their labels
    assert np.array_equal(out.mu[0, 0], ch.mu[0, 1])
    assert np.array_equal(out.omega[0, 2], ch.omega[0, 2])
    assert np.array_equal(out.tau_sq[0, 1], ch.tau_sq[0, 0])
    assert np.array_equal(out.lam_sq[0, 0], ch.lam_sq[0, 1])
    assert np.array_equal(out.pi[0, [0, 1]], ch.pi[0, [1, 0]])


def test_ecr_bad_pivot():
    with pytest.raises(DimensionMismatch):
        ecr_relabel(make_chain([[0, 1, 2]]), np.array([0, 1]))


def test_ecr_optimal_vs_bruteforce():
    rng = np.random.default_rng(42)
    pivot = rng.integers(3, size=40)
    g = rng.integers(3, size=(100, 40))
    ch = make_chain(g)
    out, _ = ecr_relabel(ch, pivot)
    for s in range(100):
        after = mismatches(out.gamma[s], pivot)
        assert after == oracles.best_perm_bruteforce(g[s], pivot, 3)
        assert after <= mismatches(g[s], pivot)


@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_ecr_never_increases_mismatch(seed, M):
    rng = np.random.default_rng(seed)
    pivot = rng.integers(M, size=25)
    g = rng.integers(M, size=(5, 25))
    out, perms = ecr_relabel(make_chain(g, M=M), pivot)
    for s in range(5):
        assert mismatches(out.gamma[s], pivot) <= mismatches(g[s], pivot)
        assert sorted(perms[s]) == list(range(M))


# --- averaging -------------------------------------------------------------


def test_average_single_snapshot():
    ch = make_chain([[0, 1, 2, 0]], orders=[2])
    avg = average_parameters(ch, 3, 2)
    assert np.allclose(avg.phi, ch.phi(0))
    assert np.allclose(avg.mu, ch.mu[0])
    assert np.allclose(avg.pi, ch.pi[0] / ch.pi[0].sum())


def test_average_phi_arithmetic():
    ch = make_chain([[0, 1, 0, 1]] * 2, orders=[1, 1], M=2)
    ch.v[0, :2] = [0.1, 1.0]
    ch.v[1, :2] = [0.3, 1.0]
    assert np.allclose(average_parameters(ch, 2, 1).phi, [0.2, 0.8])


def test_average_only_matching():
    ch = make_chain([[0, 1, 0, 1], [0, 1, 2, 2], [0, 1, 1, 0]], orders=[1, 1, 2], M=3)
    avg = average_parameters(ch, 2, 1)
    assert list(avg.index) == [0]


def test_average_no_match():
    ch = make_chain([[0, 1, 0, 1]], orders=[1], M=2)
    with pytest.raises(NoMatchingSnapshots) as info:
        average_parameters(ch, 2, 3)
    assert info.value.p_mass[1] == 1.0


def test_average_drops_unoccupied_labels():
    ch = make_chain([[0, 2, 0, 2]] * 3, orders=[1] * 3)
    avg = average_parameters(ch, 2, 1)
    assert list(avg.states) == [0, 2]
    assert avg.pi.sum() == pytest.approx(1.0)


# --- decoding --------------------------------------------------------------


def test_global_decode_single_state():
    y = np.random.default_rng(0).normal(size=(20, 2))
    g = global_decode(Dataset(y), [0.5, 0.5], [1.0], np.zeros((1, 2)), np.eye(2)[None])
    assert np.all(g == 0)


def test_global_decode_matches_reimplementation():
    rng = np.random.default_rng(1)
    y = rng.normal(size=(7, 2))
    mu = rng.normal(size=(3, 2))
    om = np.stack([np.eye(2) * (j + 1) for j in range(3)])
    phi, pi = np.array([0.2, 0.5, 0.3]), np.array([0.5, 0.3, 0.2])
    E = np.exp(emission_matrix(y, EmissionParams(mu, om)))
    want = oracles.naive_greedy(E, phi, pi, oracles.naive_backward(E, phi, pi))
    assert np.array_equal(global_decode(Dataset(y), phi, pi, mu, om), want)


def test_global_decode_separated_emissions():
    from sggmdar.simulation import simulate_dar_sequence

    rng = rng_stream(3)
    phi, pi = np.array([0.1, 0.75, 0.15]), np.full(5, 0.2)
    gamma = simulate_dar_sequence(2000, phi, pi, rng)
    mu = 6.0 * np.eye(5)
    y = mu[gamma] + rng.standard_normal((2000, 5))
    g = global_decode(Dataset(y), phi, pi, mu, np.tile(np.eye(5), (5, 1, 1)))
    assert np.mean(g == gamma) >= 0.99


def test_local_decode_rows():
    rng = np.random.default_rng(2)
    y = rng.normal(size=(15, 2))
    p = local_decode(Dataset(y), [0.3, 0.7], [0.5, 0.5], rng.normal(size=(2, 2)), np.tile(np.eye(2), (2, 1, 1)))
    assert p.shape == (15, 2) and np.allclose(p.sum(axis=1), 1.0)


# --- edge selection --------------------------------------------------------


def _omega_chain(samples01, S=200):
    ch = make_chain(np.tile([0, 1, 0, 1], (S, 1)), M=2, D=2)
    for s in range(S):
        ch.omega[s, :, 0, 1] = ch.omega[s, :, 1, 0] = samples01[s]
        ch.omega[s, :, 0, 0] = ch.omega[s, :, 1, 1] = 2.0
    return ch


def test_edge_present_when_all_positive():
    ch = _omega_chain(np.random.default_rng(0).uniform(0.2, 0.5, size=200))
    adj, pc, lo, hi = select_edges(ch, 2, 1)
    assert adj[:, 0, 1].all() and adj[:, 1, 0].all()
    assert not adj[:, 0, 0].any()
    assert pc[0, 0, 1] == pytest.approx(-ch.omega[:, 0, 0, 1].mean() / 2.0)


def test_edge_absent_when_symmetric_about_zero():
    x = np.random.default_rng(1).normal(size=100)
    ch = _omega_chain(np.concatenate((x, -x)))
    adj, *_ = select_edges(ch, 2, 1)
    assert not adj.any()


def test_edge_level_nesting():
    x = np.random.default_rng(2).normal(0.15, 0.1, size=200)
    ch = _omega_chain(x)
    a95 = select_edges(ch, 2, 1, 0.95)[0]
    a50 = select_edges(ch, 2, 1, 0.5)[0]
    assert np.all(a50 | ~a95)


def test_edges_invariant_under_relabelling():
    rng = np.random.default_rng(5)
    g = rng.integers(3, size=(30, 20))
    g[:, :3] = [0, 1, 2]
    ch = make_chain(g, M=3, D=3)
    perm = np.array([2, 0, 1])  # old label -> new label
    inv = np.argsort(perm)
    ch2 = make_chain(perm[g], M=3, D=3)
    for name in ("omega", "pi", "mu"):
        getattr(ch2, name)[:] = getattr(ch, name)[:, inv]
    a1 = select_edges(ch, 3, 1)[0]
    a2 = select_edges(ch2, 3, 1)[0]
    assert np.array_equal(a2[perm], a1)


def test_adjacency_symmetric_zero_diagonal():
    rng = np.random.default_rng(7)
    ch = make_chain(rng.integers(2, size=(50, 10)), M=2, D=4)
    adj, *_ = select_edges(ch, 2, 1)
    assert np.array_equal(adj, np.swapaxes(adj, 1, 2))
    assert not np.any(adj[:, np.arange(4), np.arange(4)])


# --- pipeline --------------------------------------------------------------


def test_summarize_single_snapshot():
    rng = np.random.default_rng(3)
    y = rng.normal(size=(12, 2))
    g = np.array([0, 1] * 6)
    ch = make_chain([g], orders=[1], M=2, D=2)
    s = summarize(ch, Dataset(y))
    assert (s.M_hat, s.P_hat) == (2, 1)
    assert np.allclose(s.phi, ch.phi(0))
    assert np.allclose(s.mu, ch.mu[0])
    assert np.allclose(s.omega, ch.omega[0])
    assert np.allclose(s.local_probs.sum(axis=1), 1)
    assert s.diagnostics == {}


# --- diagnostics -----------------------------------------------------------


def test_pcramer_critical_values():
    # standard Cramer-von Mises quantiles
    assert pcramer(0.461) == pytest.approx(0.95, abs=2e-3)
    assert pcramer(0.743) == pytest.approx(0.99, abs=2e-3)
    assert pcramer(0.0) == 0.0


def test_spectrum0_ar1():
    rng = rng_stream(0)
    x = np.zeros(20_000)
    e = rng.standard_normal(20_000)
    for t in range(1, x.size):
        x[t] = 0.5 * x[t - 1] + e[t]
    s0, order = spectrum0_ar(x)
    assert s0 == pytest.approx(4.0, rel=0.1)
    assert order >= 1


def test_hw_iid_passes_mostly():
    passed = sum(heidelberger_welch(rng_stream(s).standard_normal(10_000)).passed for s in range(40))
    assert passed / 40 >= 0.9


def test_hw_trend_fails():
    assert not heidelberger_welch(0.01 * np.arange(1000.0)).passed


def test_hw_constant_passes():
    r = heidelberger_welch(np.full(500, 3.0))
    assert r.passed and r.halfwidth_passed and r.halfwidth == 0.0


def test_hw_short_trace():
    with pytest.raises(TraceTooShort):
        heidelberger_welch(np.zeros(99))


def test_hw_halfwidth_reported():
    r = heidelberger_welch(100.0 + rng_stream(1).standard_normal(5000))
    assert r.stationarity_passed and r.halfwidth_passed
    assert r.halfwidth == pytest.approx(1.96 * np.sqrt(1.0 / (5000 - r.start)), rel=0.2)
