"""Gibbs sampler for the sparse graphical DAR model.

One iteration runs, in order: a birth/death move on the stick indicators
followed by slice updates of the sticks, slice updates of the innovation
probabilities, graphical-horseshoe and mean updates per state (prior draws
for states below the occupancy floor), and a block update of the state
sequence.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy import linalg

from .errors import NotPositiveDefinite, SamplerAbort, SggmDarError
from .ghs import ghs_sweep, sample_ghs_prior
from .messages import backward_pass_logE, sample_states_logE
from .model import (
    DarParams,
    EmissionParams,
    ModelState,
    beta_logpdf,
    dar_logprob_terms,
    dar_loglik,
    emission_matrix,
    lag_matches,
    log_stick_prior,
    phi_from_sticks,
    sample_dirichlet,
    sample_stick_prior,
)
from .numerics import mvn_sample, rng_stream, slice_sample_1d

log = logging.getLogger(__name__)

# streams reserved per chain: 0 main, 1..Mmax per-state emission updates
STREAMS_PER_CHAIN = 1 << 16


@dataclass
class SamplerConfig:
    iterations: int = 4000
    burnin: int = 1200
    thin: int = 1
    seed: int = 0
    record_loglik: bool = True
    chains: int = 1
    slice_width: float = 0.1
    kmeans_restarts: int = 10
    kmeans_iter: int = 100

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burnin < self.iterations:
            raise ValueError("burnin must satisfy 0 <= burnin < iterations")
        if self.thin < 1:
            raise ValueError("thin must be positive")
        if self.chains < 1:
            raise ValueError("chains must be positive")

    @property
    def n_snapshots(self):
        return (self.iterations - self.burnin) // self.thin


@dataclass
class Chain:
    """Recorded snapshots plus per-iteration traces of one MCMC run."""

    Pmax: int
    iteration: np.ndarray
    order: np.ndarray
    v: np.ndarray  # (S, Pmax+1), NaN beyond the order
    pi: np.ndarray
    mu: np.ndarray
    omega: np.ndarray
    lam_sq: np.ndarray
    tau_sq: np.ndarray
    gamma: np.ndarray
    counts: np.ndarray
    loglik: np.ndarray
    loglik_trace: np.ndarray = None
    m_hat_trace: np.ndarray = None
    p_hat_trace: np.ndarray = None
    accept: dict = field(default_factory=dict)

    @classmethod
    def allocate(cls, n, Pmax, M, D, T, iterations):
        return cls(
            Pmax=Pmax,
            iteration=np.zeros(n, dtype=np.int64),
            order=np.zeros(n, dtype=np.int64),
            v=np.full((n, Pmax + 1), np.nan),
            pi=np.zeros((n, M)),
            mu=np.zeros((n, M, D)),
            omega=np.zeros((n, M, D, D)),
            lam_sq=np.zeros((n, M, D, D)),
            tau_sq=np.zeros((n, M)),
            gamma=np.zeros((n, T), dtype=np.int16),
            counts=np.zeros((n, M), dtype=np.int64),
            loglik=np.zeros(n),
            loglik_trace=np.full(iterations, np.nan),
            m_hat_trace=np.zeros(iterations, dtype=np.int64),
            p_hat_trace=np.zeros(iterations, dtype=np.int64),
            accept={"birth_proposed": 0, "birth_accepted": 0, "death_proposed": 0, "death_accepted": 0},
        )

    def __len__(self):
        return self.order.size

    @property
    def m_hat(self):
        """Number of occupied states in each snapshot."""
        return np.count_nonzero(self.counts, axis=1)

    def phi(self, s):
        P = int(self.order[s])
        z = np.zeros(P, dtype=np.int64)
        z[-1] = 1
        return phi_from_sticks(self.v[s, : P + 1], z)

    def record(self, s, it, state):
        P = state.dar.order
        em = state.emissions
        self.iteration[s] = it
        self.order[s] = P
        self.v[s] = np.nan
        self.v[s, : P + 1] = state.dar.v
        self.pi[s] = state.dar.pi
        self.mu[s] = em.mu
        self.omega[s] = em.omega
        self.lam_sq[s] = em.lam_sq
        self.tau_sq[s] = em.tau_sq
        self.gamma[s] = state.gamma
        self.counts[s] = np.bincount(state.gamma, minlength=em.M)
        self.loglik[s] = state.loglik

    def state(self, s):
        """Rebuild snapshot ``s`` as a ModelState (GHS auxiliaries are not stored)."""
        P = int(self.order[s])
        z = np.zeros(P, dtype=np.int64)
        z[-1] = 1
        dar = DarParams(self.v[s, : P + 1].copy(), z, self.pi[s].copy())
        em = EmissionParams(self.mu[s].copy(), self.omega[s].copy(), self.lam_sq[s].copy(), self.tau_sq[s].copy())
        return ModelState(dar, em, self.gamma[s].astype(np.int64), float(self.loglik[s]))

    def subset(self, idx):
        idx = np.asarray(idx)
        out = Chain(
            Pmax=self.Pmax,
            iteration=self.iteration[idx], order=self.order[idx], v=self.v[idx],
            pi=self.pi[idx], mu=self.mu[idx], omega=self.omega[idx], lam_sq=self.lam_sq[idx],
            tau_sq=self.tau_sq[idx], gamma=self.gamma[idx], counts=self.counts[idx],
            loglik=self.loglik[idx], loglik_trace=self.loglik_trace,
            m_hat_trace=self.m_hat_trace, p_hat_trace=self.p_hat_trace, accept=dict(self.accept),
        )
        return out


# --- DAR updates -------------------------------------------------------------


def _stick_target(v, z, gamma, pi, hp, matches):
    lp = log_stick_prior(v, z, hp)
    if not np.isfinite(lp):
        return lp
    return lp + dar_loglik(gamma, phi_from_sticks(v, z), pi, matches)


def _move_probs(P, Pmax):
    """Probability of proposing birth at order P (death gets the rest)."""
    if P <= 1:
        return 1.0
    if P >= Pmax:
        return 0.0
    return 0.5


def step_sticks_birth_death(rng, state, data, hp, matches=None):
    """Birth/death Metropolis-Hastings move on (v, z).

    Returns ``(v, z, accepted, move)`` where ``move`` is "birth", "death" or
    None when Pmax = 1 leaves nothing to propose.
    """
    dar = state.dar
    v, z, pi, gamma = dar.v, dar.z, dar.pi, state.gamma
    P = dar.order
    if hp.Pmax == 1:
        return v, z, False, None
    if matches is None:
        matches = lag_matches(gamma, hp.Pmax)
    p_birth = _move_probs(P, hp.Pmax)
    current = _stick_target(v, z, gamma, pi, hp, matches)
    if rng.random() < p_birth:
        move = "birth"
        v_new = rng.beta(hp.av, hp.bv)
        v_prop = np.concatenate((v[:P], [v_new, 1.0]))
        z_prop = np.zeros(P + 1, dtype=np.int64)
        z_prop[-1] = 1
        log_q = np.log(1.0 - _move_probs(P + 1, hp.Pmax)) - np.log(p_birth)
        log_q -= beta_logpdf(v_new, hp.av, hp.bv)
    else:
        move = "death"
        v_old = v[P - 1]
        v_prop = np.concatenate((v[: P - 1], [1.0]))
        z_prop = np.zeros(P - 1, dtype=np.int64)
        z_prop[-1] = 1
        log_q = np.log(_move_probs(P - 1, hp.Pmax)) - np.log(1.0 - p_birth)
        log_q += beta_logpdf(v_old, hp.av, hp.bv)
    proposed = _stick_target(v_prop, z_prop, gamma, pi, hp, matches)
    log_ratio = proposed - current + log_q
    if np.log(rng.random()) < log_ratio:
        return v_prop, z_prop, True, move
    return v, z, False, move


def birth_death_log_ratio(v, z, v_prop, z_prop, v_extra, move, gamma, pi, hp):
    """Log acceptance ratio of a given birth or death proposal (for testing)."""
    matches = lag_matches(gamma, hp.Pmax)
    P = len(z)
    cur = _stick_target(v, z, gamma, pi, hp, matches)
    new = _stick_target(v_prop, z_prop, gamma, pi, hp, matches)
    if move == "birth":
        lq = np.log(1.0 - _move_probs(P + 1, hp.Pmax)) - np.log(_move_probs(P, hp.Pmax))
        lq -= beta_logpdf(v_extra, hp.av, hp.bv)
    else:
        lq = np.log(_move_probs(P - 1, hp.Pmax)) - np.log(1.0 - _move_probs(P, hp.Pmax))
        lq += beta_logpdf(v_extra, hp.av, hp.bv)
    return float(new - cur + lq)


def step_slice_v(rng, state, data, hp, matches=None, width=0.1):
    """Slice-update each free stick v_0 .. v_{P-1} on (0, 1)."""
    dar = state.dar
    v = dar.v.copy()
    z = dar.z
    gamma, pi = state.gamma, dar.pi
    if matches is None:
        matches = lag_matches(gamma, hp.Pmax)
    P = dar.order
    for j in range(P):
        def target(x, j=j):
            v[j] = x
            return _stick_target(v, z, gamma, pi, hp, matches)

        x0 = v[j]
        new = slice_sample_1d(rng, target, x0, 0.0, 1.0, width)
        v[j] = new
    return v


def step_slice_pi(rng, state, data, hp, matches=None, width=0.1):
    """Slice-update pi_0 .. pi_{M-2}; the last coordinate absorbs the remainder."""
    dar = state.dar
    pi = dar.pi.copy()
    gamma = state.gamma
    phi = dar.phi
    P = phi.size - 1
    M = pi.size
    if matches is None:
        matches = lag_matches(gamma, hp.Pmax)
    copy = phi[1:] @ matches[:P, P:]
    g = gamma[P:]
    last = M - 1
    copy_last = copy[g == last]
    km1 = hp.kappa0 - 1.0
    phi0 = phi[0]
    for l in range(M - 1):
        copy_l = copy[g == l]
        # move along the segment pi_l + pi_last = const, parametrised by the
        # smaller coordinate so a tiny value keeps its resolution
        swap = pi[l] > pi[last]
        x0, r0 = (pi[last], pi[l]) if swap else (pi[l], pi[last])
        cx, cr = (copy_last, copy_l) if swap else (copy_l, copy_last)

        def target(x, x0=x0, r0=r0, cx=cx, cr=cr):
            r = r0 + (x0 - x)
            if not (x > 0.0 and r > 0.0):
                return -np.inf
            lp = km1 * (math.log(x) + math.log(r))
            if cx.size:
                lp += float(np.sum(np.log(cx + phi0 * x)))
            if cr.size:
                lp += float(np.sum(np.log(cr + phi0 * r)))
            return lp

        upper = max(x0 + r0, np.nextafter(x0, np.inf))
        x = slice_sample_1d(rng, target, x0, 0.0, upper, width)
        r = r0 + (x0 - x)
        pi[l], pi[last] = (r, x) if swap else (x, r)
    # rounding drift is absorbed by renormalising
    return pi / pi.sum()


# --- emission updates --------------------------------------------------------


def scatter(y, gamma, j, mu_j):
    rows = y[gamma == j] - mu_j
    return rows.T @ rows, rows.shape[0]


def step_ghs(rng, state, data, hp, j, sigma=None):
    """One graphical-horseshoe sweep for state ``j`` (in place on the emissions)."""
    em = state.emissions
    S, n = scatter(data.y, state.gamma, j, em.mu[j])
    if sigma is None:
        sigma = np.linalg.inv(em.omega[j])
    omega = em.omega[j].copy()
    lam_sq = em.lam_sq[j].copy()
    nu = em.nu[j].copy()
    tau_sq, xi = ghs_sweep(rng, S, n, omega, sigma, lam_sq, nu, em.tau_sq[j], em.xi[j])
    try:
        np.linalg.cholesky(omega)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(f"GHS sweep left state {j} indefinite") from None
    em.omega[j] = omega
    em.lam_sq[j] = lam_sq
    em.nu[j] = nu
    em.tau_sq[j] = tau_sq
    em.xi[j] = xi
    return omega, lam_sq, tau_sq


def step_means(rng, state, data, hp, j):
    """Conjugate draw of mu_j given Omega_j and the observations in state j."""
    em = state.emissions
    rows = data.y[state.gamma == j]
    n = rows.shape[0]
    prec = hp.R0 + n * em.omega[j]
    rhs = hp.R0 @ hp.mu0 + em.omega[j] @ rows.sum(axis=0)
    L = np.linalg.cholesky(prec)
    mean = linalg.cho_solve((L, True), rhs)
    mu = mvn_sample(rng, mean, prec, chol=L)
    em.mu[j] = mu
    return mu


def draw_emission_prior(rng, state, hp, j):
    em = state.emissions
    em.mu[j] = mvn_sample(rng, hp.mu0, hp.R0)
    omega, lam_sq, nu, tau_sq, xi = sample_ghs_prior(rng, em.D, hp.omega_diag_upper)
    em.omega[j] = omega
    em.lam_sq[j] = lam_sq
    em.nu[j] = nu
    em.tau_sq[j] = tau_sq
    em.xi[j] = xi


def active_states(gamma, hp, T=None):
    T = gamma.size if T is None else T
    counts = np.bincount(gamma, minlength=hp.Mmax)
    return counts, counts >= max(1.0, hp.state_floor * T)


def step_emissions(state_rngs, state, data, hp):
    """GHS then mean update for occupied states, prior draws for the rest."""
    counts, active = active_states(state.gamma, hp, data.T)
    for j in range(hp.Mmax):
        rng = state_rngs[j]
        if active[j]:
            step_ghs(rng, state, data, hp, j)
            step_means(rng, state, data, hp, j)
        else:
            draw_emission_prior(rng, state, hp, j)
    return counts, active


# --- state sequence ----------------------------------------------------------


def step_states(rng, state, data, hp=None, logE=None):
    if logE is None:
        logE = emission_matrix(data.y, state.emissions)
    phi, pi = state.dar.phi, state.dar.pi
    beta = backward_pass_logE(logE, phi, pi)
    return sample_states_logE(rng, logE, beta, phi, pi)


def conditional_loglik(gamma, phi, pi, logE):
    P = phi.size - 1
    return float(np.sum(dar_logprob_terms(gamma, phi, pi)) + np.sum(logE[np.arange(P, gamma.size), gamma[P:]]))


# --- driver ------------------------------------------------------------------


def initialize(rng, data, hp, config=None):
    from sklearn.cluster import KMeans

    config = config or SamplerConfig()
    v, z = sample_stick_prior(rng, hp)
    pi = sample_dirichlet(rng, np.full(hp.Mmax, hp.kappa0))
    km = KMeans(
        n_clusters=hp.Mmax, init="k-means++", n_init=config.kmeans_restarts,
        max_iter=config.kmeans_iter, random_state=int(rng.integers(2**31 - 1)),
    ).fit(data.y)
    D = data.D
    em = EmissionParams(km.cluster_centers_.copy(), np.tile(np.eye(D), (hp.Mmax, 1, 1)))
    gamma = km.labels_.astype(np.int64)
    return ModelState(DarParams(v, z, pi), em, gamma)


def run_mcmc(config, data, hp, chain_id=0, init=None, callback=None):
    """Run one chain; ``chain_id`` selects its block of RNG streams."""
    if data.T <= hp.Pmax:
        raise ValueError(f"need T > Pmax, got T={data.T}, Pmax={hp.Pmax}")
    base = chain_id * STREAMS_PER_CHAIN
    rng = rng_stream(config.seed, base)
    state_rngs = [rng_stream(config.seed, base + 1 + j) for j in range(hp.Mmax)]
    state = init.copy() if init is not None else initialize(rng, data, hp, config)
    chain = Chain.allocate(config.n_snapshots, hp.Pmax, hp.Mmax, data.D, data.T, config.iterations)
    width = config.slice_width
    s = 0
    for it in range(config.iterations):
        try:
            matches = lag_matches(state.gamma, hp.Pmax)
            v, z, accepted, move = step_sticks_birth_death(rng, state, data, hp, matches)
            if move is not None:
                chain.accept[f"{move}_proposed"] += 1
                chain.accept[f"{move}_accepted"] += int(accepted)
            state.dar = DarParams(v, z, state.dar.pi)
            state.dar.v = step_slice_v(rng, state, data, hp, matches, width)
            state.dar.pi = step_slice_pi(rng, state, data, hp, matches, width)
            step_emissions(state_rngs, state, data, hp)
            logE = emission_matrix(data.y, state.emissions)
            state.gamma = step_states(rng, state, data, hp, logE)
            phi = state.dar.phi
            state.loglik = conditional_loglik(state.gamma, phi, state.dar.pi, logE)
        except SggmDarError as exc:
            raise SamplerAbort(it, exc) from exc
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            raise SamplerAbort(it, exc) from exc
        chain.loglik_trace[it] = state.loglik
        chain.m_hat_trace[it] = np.count_nonzero(np.bincount(state.gamma, minlength=hp.Mmax))
        chain.p_hat_trace[it] = phi.size - 1
        if it >= config.burnin and (it - config.burnin + 1) % config.thin == 0:
            chain.record(s, it, state)
            s += 1
        if callback is not None:
            callback(it, state)
    return chain


def run_chains(config, data, hp, callback=None):
    return [run_mcmc(config, data, hp, chain_id=c, callback=callback) for c in range(config.chains)]
