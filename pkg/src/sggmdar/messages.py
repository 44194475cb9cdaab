"""Backward and DAR-forward messages for the hidden state sequence.

Row ``r`` of a backward table is log beta for the observations ``y[r:]``
given the state at ``r - 1``; row ``T`` is the empty message (log 1 = 0).
Row ``r`` of a forward table is log alpha for ``y[:r]`` jointly with the
last ``P`` states ``gamma[r-1], gamma[r-2], ...`` (newest first).

Transitions for the first ``P`` time points use uniform probabilities 1/M.

The backward recursion sums the DAR array over the older history indices
without weighting them, exactly as the recursion is stated in the method.
That unweighted sum collapses in closed form:

    sum_{j2..jP} eta(jP..j1 -> j0) = M^(P-1) [phi_1 1{j1=j0} + (phi_2+..+phi_P)/M + phi_0 pi_j0]

so each step costs O(M) instead of O(M^(P+1)).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRow
from .model import emission_matrix


@dataclass
class BackwardTable:
    log_beta: np.ndarray  # (T+1, M), each row max-normalised to 0
    log_scale: np.ndarray  # (T+1,), unnormalised log beta = log_beta + log_scale[:, None]

    def unnormalized(self):
        return self.log_beta + self.log_scale[:, None]


@dataclass
class ForwardTable:
    log_alpha: np.ndarray  # (T+1, M) marginal over the older indices; row 0 unused
    tuples: list = None  # tuples[r] is the (M,)*P log tensor for r >= P, else None


def _phi_pi(dar_or_phi, pi):
    if pi is None:
        return np.asarray(dar_or_phi.phi, dtype=float), np.asarray(dar_or_phi.pi, dtype=float)
    return np.asarray(dar_or_phi, dtype=float), np.asarray(pi, dtype=float)


def backward_pass_logE(logE, phi, pi):
    """Backward messages from a T x M matrix of emission log densities."""
    logE = np.asarray(logE, dtype=float)
    T, M = logE.shape
    P = phi.size - 1
    phi0, phi1 = phi[0], phi[1]
    older = float(np.sum(phi[2:]))
    hist_factor = np.log(M) * (P - 1)

    log_beta = np.zeros((T + 1, M))
    log_scale = np.zeros(T + 1)
    emax = logE.max(axis=1)
    E = np.exp(logE - emax[:, None])
    beta = np.ones(M)
    scale = 0.0
    for r in range(T - 1, -1, -1):
        w = E[r] * beta
        if r >= P:
            b = phi1 * w + (older / M * w.sum() + phi0 * (pi @ w))
            extra = hist_factor
        else:
            b = np.full(M, w.sum() / M)
            extra = 0.0
        m = b.max()
        if not m > 0:
            raise DegenerateRow(f"backward message vanished at row {r}")
        beta = b / m
        scale += emax[r] + np.log(m) + extra
        log_beta[r] = np.log(beta)
        log_scale[r] = scale
    return BackwardTable(log_beta, log_scale)


def backward_pass(data, dar, em):
    y = data.y if hasattr(data, "y") else data
    return backward_pass_logE(emission_matrix(y, em), dar.phi, dar.pi)


def _transition_coef(phi, pi, M, P):
    """coef[j1, j2, .., jP] = phi_0 pi_j1 + sum_{k<P} phi_k 1{j_{k+1} = j1}."""
    shape = (M,) * P
    coef = np.broadcast_to(
        (phi[0] * pi).reshape((M,) + (1,) * (P - 1)), shape
    ).copy()
    for k in range(1, P):
        ind = np.zeros((M,) * P)
        idx = [slice(None)] * P
        for j in range(M):
            idx[0] = j
            idx[k] = j
            ind[tuple(idx)] = 1.0
            idx[k] = slice(None)
        coef += phi[k] * ind
    return coef


def forward_pass_logE(logE, phi, pi, keep_tuples=False):
    """DAR-forward messages; the marginal rows feed local decoding."""
    logE = np.asarray(logE, dtype=float)
    T, M = logE.shape
    P = phi.size - 1
    log_alpha = np.full((T + 1, M), -np.inf)
    tuples = [None] * (T + 1) if keep_tuples else None
    emax = logE.max(axis=1)
    E = np.exp(logE - emax[:, None])

    # initial window: uniform transitions, so the tuple factorises
    const = 0.0
    for r in range(1, min(P, T) + 1):
        log_alpha[r] = const + np.log(E[r - 1] / M) + emax[r - 1]
        const += np.log(E[r - 1].sum() / M) + emax[r - 1]
    if T < P:
        return ForwardTable(log_alpha, tuples)

    A = np.ones(())
    for s in range(P - 1, -1, -1):
        # tuple axes are newest first: axis 0 <-> gamma[P-1]
        A = np.multiply.outer(A, E[s] / M) if A.ndim else E[s] / M
    A = A.reshape((M,) * P)
    scale = float(np.sum(emax[:P]))
    with np.errstate(divide="ignore"):
        if keep_tuples:
            tuples[P] = np.log(A) + scale
    coef = _transition_coef(phi, pi, M, P)
    phiP = phi[P]
    for r in range(P, T):
        B = A.sum(axis=-1)  # over the oldest index
        A = E[r].reshape((M,) + (1,) * (P - 1)) * (coef * B[np.newaxis] + phiP * np.moveaxis(A, -1, 0))
        m = A.max()
        if not m > 0:
            raise DegenerateRow(f"forward message vanished at row {r + 1}")
        A = A / m
        scale += emax[r] + np.log(m)
        with np.errstate(divide="ignore"):
            if keep_tuples:
                tuples[r + 1] = np.log(A) + scale
            marg = A.reshape(M, -1).sum(axis=1)
            log_alpha[r + 1] = np.log(marg) + scale
    return ForwardTable(log_alpha, tuples)


def forward_pass(data, dar, em, keep_tuples=False):
    y = data.y if hasattr(data, "y") else data
    return forward_pass_logE(emission_matrix(y, em), dar.phi, dar.pi, keep_tuples=keep_tuples)


def local_state_probs(alpha, beta):
    """T x M matrix of p(gamma_t = j | y) from the two tables."""
    la = alpha.log_alpha[1:]
    lb = beta.log_beta[1:]
    s = la + lb
    m = s.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise DegenerateRow("local decoding row has no finite entry")
    p = np.exp(s - m)
    return p / p.sum(axis=1, keepdims=True)


def sample_states_logE(rng, logE, beta, phi, pi):
    """Draw gamma sequentially from p(gamma_t | gamma_{t-1..t-P}, y)."""
    T, M = logE.shape
    P = phi.size - 1
    gamma = np.empty(T, dtype=np.int64)
    base = logE + beta.log_beta[1:]
    u = rng.random(T)
    phi0pi = phi[0] * pi
    lags = phi[1:]
    for r in range(T):
        row = base[r]
        w = np.exp(row - row.max())
        if r >= P:
            eta = phi0pi.copy()
            for k in range(P):
                eta[gamma[r - 1 - k]] += lags[k]
            w = w * eta
        c = np.cumsum(w)
        gamma[r] = min(int(np.searchsorted(c, u[r] * c[-1], side="right")), M - 1)
    return gamma


def greedy_decode_logE(logE, beta, phi, pi):
    """Stepwise argmax of the same conditionals; ties go to the lower state."""
    T, M = logE.shape
    P = phi.size - 1
    gamma = np.empty(T, dtype=np.int64)
    base = logE + beta.log_beta[1:]
    for r in range(T):
        row = base[r]
        if r >= P:
            eta = phi[0] * pi.copy()
            for k in range(P):
                eta[gamma[r - 1 - k]] += phi[1 + k]
            with np.errstate(divide="ignore"):
                row = row + np.log(eta)
        gamma[r] = int(np.argmax(row))
    return gamma
