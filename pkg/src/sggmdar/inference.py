"""Post-processing of a recorded chain.

Modal state count and order, relabelling against a pivot allocation,
parameter averaging over the snapshots that match the modes, decoding of
the state sequence and credible-interval edge selection.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .diagnostics import heidelberger_welch
from .errors import DimensionMismatch, EmptyChain, NoMatchingSnapshots
from .messages import backward_pass_logE, forward_pass_logE, greedy_decode_logE, local_state_probs
from .model import EmissionParams, emission_matrix, partial_correlation


@dataclass
class PosteriorSummary:
    M_hat: int
    P_hat: int
    m_mass: dict
    p_mass: dict
    states: np.ndarray  # chain labels kept, in summary order
    phi: np.ndarray
    pi: np.ndarray
    mu: np.ndarray
    omega: np.ndarray
    partial_corr: np.ndarray
    adjacency: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    gamma_global: np.ndarray
    local_probs: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    n_matching: int = 0
    level: float = 0.95
    phi_samples: np.ndarray = None  # matching snapshots, for histograms
    pi_samples: np.ndarray = None


def _argmax_smallest(values):
    values = np.asarray(values)
    # np.argmax already returns the first (smallest index) maximiser
    return int(np.argmax(values))


def mass_table(values, support):
    counts = np.array([np.count_nonzero(values == k) for k in support], dtype=float)
    return {int(k): c / values.size for k, c in zip(support, counts)}


def modal_counts(chain):
    """Posterior modes of the number of occupied states and of the order.

    Returns ``(M_hat, P_hat, m_mass, p_mass)``; ties go to the smaller value.
    """
    if len(chain) == 0:
        raise EmptyChain("chain has no snapshots")
    m = chain.m_hat
    p = chain.order
    m_support = np.arange(1, chain.counts.shape[1] + 1)
    p_support = np.arange(1, chain.Pmax + 1)
    m_mass = mass_table(m, m_support)
    p_mass = mass_table(p, p_support)
    M_hat = int(m_support[_argmax_smallest(list(m_mass.values()))])
    P_hat = int(p_support[_argmax_smallest(list(p_mass.values()))])
    return M_hat, P_hat, m_mass, p_mass


def modal_from_mass(mass):
    keys = sorted(mass)
    return keys[_argmax_smallest([mass[k] for k in keys])]


def best_permutation(labels, pivot, M):
    """Permutation ``sigma`` (old label -> new label) maximising agreement with ``pivot``."""
    agree = np.bincount(labels * M + pivot, minlength=M * M).reshape(M, M)
    rows, cols = linear_sum_assignment(-agree)
    sigma = np.empty(M, dtype=np.int64)
    sigma[rows] = cols
    return sigma


def mismatches(labels, pivot):
    return int(np.count_nonzero(np.asarray(labels) != np.asarray(pivot)))


def ecr_relabel(chain, pivot):
    """Relabel every snapshot to agree as closely as possible with ``pivot``.

    Returns ``(relabelled_chain, perms)`` where ``perms[s]`` maps old labels
    of snapshot ``s`` to new ones.  States, innovations, means, precisions
    and shrinkage scales are permuted jointly.
    """
    pivot = np.asarray(pivot, dtype=np.int64)
    T = chain.gamma.shape[1]
    if pivot.shape != (T,):
        raise DimensionMismatch(f"pivot has shape {pivot.shape}, expected ({T},)")
    M = chain.counts.shape[1]
    out = chain.subset(np.arange(len(chain)))
    out.gamma = chain.gamma.copy()
    perms = np.empty((len(chain), M), dtype=np.int64)
    for s in range(len(chain)):
        g = chain.gamma[s].astype(np.int64)
        sigma = best_permutation(g, pivot, M)
        perms[s] = sigma
        inv = np.argsort(sigma)  # new label b came from old label inv[b]
        out.gamma[s] = sigma[g]
        out.pi[s] = chain.pi[s][inv]
        out.mu[s] = chain.mu[s][inv]
        out.omega[s] = chain.omega[s][inv]
        out.lam_sq[s] = chain.lam_sq[s][inv]
        out.tau_sq[s] = chain.tau_sq[s][inv]
        out.counts[s] = chain.counts[s][inv]
    return out, perms


def matching_snapshots(chain, M_hat, P_hat):
    idx = np.flatnonzero((chain.m_hat == M_hat) & (chain.order == P_hat))
    if idx.size == 0:
        _, _, m_mass, p_mass = modal_counts(chain)
        raise NoMatchingSnapshots(f"no snapshot with M={M_hat}, P={P_hat}", m_mass, p_mass)
    return idx


def choose_pivot(chain, M_hat, P_hat):
    """Index of the highest-likelihood snapshot among those matching the modes."""
    idx = matching_snapshots(chain, M_hat, P_hat)
    return int(idx[np.argmax(chain.loglik[idx])])


@dataclass
class AveragedParams:
    phi: np.ndarray
    pi: np.ndarray
    mu: np.ndarray
    omega: np.ndarray
    states: np.ndarray
    index: np.ndarray


def average_parameters(chain, M_hat, P_hat):
    """Means over snapshots with exactly ``M_hat`` occupied states and order ``P_hat``.

    The ``M_hat`` labels with the highest average occupancy are kept, in
    label order; the innovation probabilities are renormalised over them.
    """
    idx = matching_snapshots(chain, M_hat, P_hat)
    phi = np.mean([chain.phi(s) for s in idx], axis=0)
    occupancy = chain.counts[idx].mean(axis=0)
    states = np.sort(np.argsort(-occupancy, kind="stable")[:M_hat])
    pi = chain.pi[idx][:, states].mean(axis=0)
    pi = pi / pi.sum()
    mu = chain.mu[idx][:, states].mean(axis=0)
    omega = chain.omega[idx][:, states].mean(axis=0)
    return AveragedParams(phi, pi, mu, omega, states, idx)


def _logE(data, mu, omega):
    y = data.y if hasattr(data, "y") else np.asarray(data)
    return emission_matrix(y, EmissionParams(np.asarray(mu), np.asarray(omega)))


def global_decode(data, phi, pi, mu, omega):
    """Stepwise-argmax state sequence at fixed parameters (ties to the lower label)."""
    phi, pi = np.asarray(phi, dtype=float), np.asarray(pi, dtype=float)
    logE = _logE(data, mu, omega)
    beta = backward_pass_logE(logE, phi, pi)
    return greedy_decode_logE(logE, beta, phi, pi)


def local_decode(data, phi, pi, mu, omega):
    """T x M matrix of p(gamma_t = j | y) at fixed parameters."""
    phi, pi = np.asarray(phi, dtype=float), np.asarray(pi, dtype=float)
    logE = _logE(data, mu, omega)
    beta = backward_pass_logE(logE, phi, pi)
    alpha = forward_pass_logE(logE, phi, pi)
    return local_state_probs(alpha, beta)


def credible_bounds(samples, level):
    tail = (1.0 - level) / 2.0
    lo = np.quantile(samples, tail, axis=0, method="linear")
    hi = np.quantile(samples, 1.0 - tail, axis=0, method="linear")
    return lo, hi


def select_edges(chain, M_hat, P_hat, level=0.95, states=None):
    """Equal-tailed credible intervals of the off-diagonal precisions.

    An edge is present when its interval excludes zero.  Returns
    ``(adjacency, partial_corr, lower, upper)``, each indexed by summary state.
    """
    idx = matching_snapshots(chain, M_hat, P_hat)
    if states is None:
        states = average_parameters(chain, M_hat, P_hat).states
    samples = chain.omega[idx][:, states]
    lo, hi = credible_bounds(samples, level)
    adj = (lo > 0) | (hi < 0)
    D = adj.shape[-1]
    diag = np.arange(D)
    adj[:, diag, diag] = False
    adj = adj & np.swapaxes(adj, 1, 2)
    omega_hat = samples.mean(axis=0)
    pc = np.stack([partial_correlation(w) for w in omega_hat])
    return adj, pc, lo, hi


def summarize(chain, data, level=0.95, diagnostics=True):
    """Full post-processing pipeline from a chain to a PosteriorSummary."""
    M_hat, P_hat, m_mass, p_mass = modal_counts(chain)
    pivot = choose_pivot(chain, M_hat, P_hat)
    relabelled, _ = ecr_relabel(chain, chain.gamma[pivot].astype(np.int64))
    avg = average_parameters(relabelled, M_hat, P_hat)
    adj, pc, lo, hi = select_edges(relabelled, M_hat, P_hat, level, avg.states)
    gamma_hat = global_decode(data, avg.phi, avg.pi, avg.mu, avg.omega)
    local = local_decode(data, avg.phi, avg.pi, avg.mu, avg.omega)
    diag = {}
    if diagnostics and len(chain.loglik) >= 100:
        diag = heidelberger_welch(chain.loglik).as_dict()
    return PosteriorSummary(
        M_hat=M_hat, P_hat=P_hat, m_mass=m_mass, p_mass=p_mass, states=avg.states,
        phi=avg.phi, pi=avg.pi, mu=avg.mu, omega=avg.omega, partial_corr=pc,
        adjacency=adj, lower=lo, upper=hi, gamma_global=gamma_hat, local_probs=local,
        diagnostics=diag, n_matching=int(avg.index.size), level=level,
        phi_samples=np.array([relabelled.phi(s) for s in avg.index]),
        pi_samples=relabelled.pi[avg.index][:, avg.states],
    )
