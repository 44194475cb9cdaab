"""Model parameters and the densities of the generative model.

States are 0-based throughout the Python API (``0 .. Mmax-1``).  Histories
passed to transition functions are newest first: ``history[0]`` is the
state at ``t-1``.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy.special import gammaln

from .errors import HistoryLengthMismatch, MalformedSticks
from .numerics import LOG_2PI, cholesky, mvn_logpdf, mvn_logpdf_rows


@dataclass
class Dataset:
    y: np.ndarray
    gamma: np.ndarray = None

    def __post_init__(self):
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if self.gamma is not None:
            self.gamma = np.asarray(self.gamma, dtype=np.int64)

    @property
    def T(self):
        return self.y.shape[0]

    @property
    def D(self):
        return self.y.shape[1]


@dataclass
class Hyperparameters:
    D: int
    a0: float = 1.0
    b0: float = 10.0
    av: float = 10.0
    bv: float = 1.0
    kappa0: float = 0.001
    mu0: np.ndarray = None
    R0: np.ndarray = None
    Mmax: int = 10
    Pmax: int = 5
    state_floor: float = 0.01
    # diagonal of precision matrices drawn for empty states
    omega_diag_upper: float = 100.0

    def __post_init__(self):
        if self.mu0 is None:
            self.mu0 = np.zeros(self.D)
        if self.R0 is None:
            self.R0 = 0.1 * np.eye(self.D)
        self.mu0 = np.asarray(self.mu0, dtype=float).reshape(self.D)
        self.R0 = np.asarray(self.R0, dtype=float).reshape(self.D, self.D)
        self.validate()

    def validate(self):
        for name in ("a0", "b0", "av", "bv", "kappa0", "omega_diag_upper"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.Mmax < 2:
            raise ValueError("Mmax must be >= 2")
        if self.Pmax < 1:
            raise ValueError("Pmax must be >= 1")
        if not 0 <= self.state_floor < 1:
            raise ValueError("state_floor must lie in [0, 1)")
        cholesky(self.R0)


@dataclass
class DarParams:
    """Sticks ``v`` (length P+1, last entry 1), indicators ``z`` and innovations ``pi``."""

    v: np.ndarray
    z: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        self.z = np.asarray(self.z, dtype=np.int64)
        self.pi = np.asarray(self.pi, dtype=float)

    @property
    def order(self):
        return effective_order(self.z)

    @property
    def phi(self):
        return phi_from_sticks(self.v, self.z)

    def copy(self):
        return DarParams(self.v.copy(), self.z.copy(), self.pi.copy())


@dataclass
class EmissionParams:
    """Per-state Gaussian emissions plus graphical-horseshoe scales.

    ``lam_sq`` and ``tau_sq`` hold squared local and global scales; ``nu``
    and ``xi`` are their inverse-gamma auxiliaries.
    """

    mu: np.ndarray
    omega: np.ndarray
    lam_sq: np.ndarray = None
    tau_sq: np.ndarray = None
    nu: np.ndarray = None
    xi: np.ndarray = None

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        M, D = self.mu.shape
        if self.lam_sq is None:
            self.lam_sq = np.ones((M, D, D))
        if self.nu is None:
            self.nu = np.ones((M, D, D))
        if self.tau_sq is None:
            self.tau_sq = np.ones(M)
        if self.xi is None:
            self.xi = np.ones(M)

    @property
    def M(self):
        return self.mu.shape[0]

    @property
    def D(self):
        return self.mu.shape[1]

    @property
    def tau(self):
        return np.sqrt(self.tau_sq)

    def copy(self):
        return EmissionParams(
            self.mu.copy(), self.omega.copy(), self.lam_sq.copy(),
            self.tau_sq.copy(), self.nu.copy(), self.xi.copy(),
        )

    def subset(self, states):
        idx = np.asarray(states, dtype=np.int64)
        return EmissionParams(
            self.mu[idx], self.omega[idx], self.lam_sq[idx],
            self.tau_sq[idx], self.nu[idx], self.xi[idx],
        )


@dataclass
class ModelState:
    dar: DarParams
    emissions: EmissionParams
    gamma: np.ndarray
    loglik: float = float("nan")

    def copy(self):
        return ModelState(self.dar.copy(), self.emissions.copy(), self.gamma.copy(), self.loglik)


# --- DAR process -----------------------------------------------------------


def _check_sticks(v, z):
    z = np.asarray(z)
    if z.ndim != 1 or z.size == 0:
        raise MalformedSticks("z must be a non-empty vector")
    if z[-1] != 1 or np.any(z[:-1] != 0):
        raise MalformedSticks(f"z must have the shape (0, ..., 0, 1), got {z.tolist()}")
    if len(v) != z.size + 1:
        raise MalformedSticks(f"expected {z.size + 1} sticks, got {len(v)}")


def effective_order(z):
    """Smallest lag (1-based) whose indicator is one."""
    z = np.asarray(z)
    hits = np.flatnonzero(z == 1)
    if hits.size == 0:
        raise MalformedSticks("indicator vector contains no active lag")
    return int(hits[0]) + 1


def phi_from_sticks(v, z):
    """Autoregressive probabilities ``phi_0 .. phi_P`` from the stick weights."""
    v = np.asarray(v, dtype=float)
    _check_sticks(v, z)
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - v[:-1])))
    return v * remaining


def shrinkage_prob(phi, j):
    """Prior probability that lag ``j`` is the last active one: sum of phi_0..phi_{j-1}."""
    phi = np.asarray(phi, dtype=float)
    if not 1 <= j <= phi.size:
        raise IndexError(f"lag {j} outside 1..{phi.size}")
    return float(np.sum(phi[:j]))


def dar_transition_prob(target, history, phi, pi):
    phi = np.asarray(phi, dtype=float)
    history = np.asarray(history)
    if history.size != phi.size - 1:
        raise HistoryLengthMismatch(f"history has {history.size} states, order is {phi.size - 1}")
    return float(phi[0] * pi[target] + np.sum(phi[1:] * (history == target)))


def dar_transition_logprob(target, history, dar_or_phi, pi=None):
    """log p(gamma_t = target | history) for newest-first ``history``."""
    if isinstance(dar_or_phi, DarParams):
        phi, pi = dar_or_phi.phi, dar_or_phi.pi
    else:
        phi = dar_or_phi
    with np.errstate(divide="ignore"):
        return float(np.log(dar_transition_prob(target, history, phi, pi)))


def lag_matches(gamma, Pmax):
    """Boolean matrix ``m[k-1, t] = gamma[t] == gamma[t-k]`` (False where t < k)."""
    gamma = np.asarray(gamma)
    T = gamma.size
    m = np.zeros((Pmax, T), dtype=bool)
    for k in range(1, Pmax + 1):
        if k < T:
            m[k - 1, k:] = gamma[k:] == gamma[:-k]
    return m


def dar_logprob_terms(gamma, phi, pi, matches=None):
    """log eta for every t >= P (0-based), P = len(phi) - 1."""
    P = len(phi) - 1
    if matches is None:
        matches = lag_matches(gamma, P)
    copy = phi[1:] @ matches[:P, P:]
    with np.errstate(divide="ignore"):
        return np.log(copy + phi[0] * pi[gamma[P:]])


def dar_loglik(gamma, phi, pi, matches=None):
    return float(np.sum(dar_logprob_terms(gamma, phi, pi, matches)))


# --- priors ----------------------------------------------------------------


def beta_logpdf(x, a, b):
    with np.errstate(divide="ignore"):
        return (a - 1) * np.log(x) + (b - 1) * np.log1p(-x) - (gammaln(a) + gammaln(b) - gammaln(a + b))


def log_stick_prior(v, z, hp):
    """log p(v, z) under the cumulative-shrinkage stick prior truncated at Pmax.

    At P = Pmax the last indicator is forced to one, so its Bernoulli factor
    is dropped and the prior over orders is proper on 1..Pmax.
    """
    v = np.asarray(v, dtype=float)
    phi = phi_from_sticks(v, z)
    P = phi.size - 1
    if P > hp.Pmax:
        return -np.inf
    xi = np.cumsum(phi)[:P]  # xi[j-1] = phi_0 + .. + phi_{j-1}
    lp = beta_logpdf(v[0], hp.a0, hp.b0)
    if P > 1:
        lp += np.sum(beta_logpdf(v[1:P], hp.av, hp.bv))
    with np.errstate(divide="ignore"):
        lp += np.sum(np.log1p(-np.minimum(xi[: P - 1], 1.0)))
        if P < hp.Pmax:
            lp += np.log(xi[P - 1])
    return float(lp)


def sample_stick_prior_full(rng, hp):
    """Run the prior mechanism over all ``Pmax`` lags.

    z_j ~ Bern(phi_0 + .. + phi_{j-1}), v_j = 1 when z_j = 1 and Beta(av, bv)
    otherwise.  The truncation forces z_Pmax = 1.  Returns full-length
    ``(v, z, phi)`` without assuming the structure the mechanism implies.
    """
    Pmax = hp.Pmax
    v = np.empty(Pmax + 1)
    z = np.zeros(Pmax, dtype=np.int64)
    phi = np.empty(Pmax + 1)
    v[0] = rng.beta(hp.a0, hp.b0)
    phi[0] = v[0]
    remaining = 1.0 - v[0]
    for j in range(1, Pmax + 1):
        xi = float(np.sum(phi[:j]))
        u = rng.random()
        z[j - 1] = 1 if (j == Pmax or u < xi) else 0
        v[j] = 1.0 if z[j - 1] else rng.beta(hp.av, hp.bv)
        phi[j] = v[j] * remaining
        remaining *= 1.0 - v[j]
    return v, z, phi


def sample_stick_prior(rng, hp):
    """Draw (v, z) from the prior, truncated at the effective order."""
    v, z, _ = sample_stick_prior_full(rng, hp)
    P = effective_order(z)
    return v[: P + 1].copy(), z[:P].copy()


def sample_dirichlet(rng, alpha, floor=1e-300):
    """Dirichlet draw that stays usable for tiny concentrations.

    Gamma variates are generated in log space (G(a) = G(a+1) U^(1/a)) so
    that concentrations like 1e-3 do not underflow to exact zeros; entries
    are floored at ``floor``.
    """
    alpha = np.asarray(alpha, dtype=float)
    logg = np.log(rng.gamma(alpha + 1.0)) + np.log(rng.random(alpha.size)) / alpha
    logg -= logg.max()
    w = np.exp(logg)
    w = np.maximum(w / w.sum(), floor)
    return w / w.sum()


def log_dirichlet(pi, kappa):
    pi = np.asarray(pi, dtype=float)
    M = pi.size
    with np.errstate(divide="ignore"):
        return float(gammaln(M * kappa) - M * gammaln(kappa) + (kappa - 1) * np.sum(np.log(pi)))


def log_inv_gamma(x, shape, scale):
    x = np.asarray(x, dtype=float)
    return shape * np.log(scale) - gammaln(shape) - (shape + 1) * np.log(x) - scale / x


def log_ghs_prior(em, j, augmented=True):
    """Unnormalised graphical-horseshoe log prior of state ``j``.

    The diagonal has a flat prior.  With ``augmented`` the half-Cauchy scales
    enter through their inverse-gamma mixtures (the form the Gibbs sampler
    targets); otherwise the half-Cauchy densities of lambda and tau are used.
    """
    D = em.D
    iu = np.triu_indices(D, 1)
    w = em.omega[j][iu]
    lam_sq = em.lam_sq[j][iu]
    tau_sq = em.tau_sq[j]
    var = lam_sq * tau_sq
    lp = float(np.sum(-0.5 * (LOG_2PI + np.log(var)) - 0.5 * w * w / var))
    if augmented:
        nu = em.nu[j][iu]
        lp += float(np.sum(log_inv_gamma(lam_sq, 0.5, 1.0 / nu)))
        lp += float(np.sum(log_inv_gamma(nu, 0.5, 1.0)))
        lp += float(log_inv_gamma(tau_sq, 0.5, 1.0 / em.xi[j]))
        lp += float(log_inv_gamma(em.xi[j], 0.5, 1.0))
    else:
        half_cauchy = lambda s: math.log(2.0 / math.pi) - np.log1p(s)  # noqa: E731, s is the squared scale
        lp += float(np.sum(half_cauchy(lam_sq))) + float(half_cauchy(tau_sq))
    return lp


# --- emissions and joint ---------------------------------------------------


def emission_logpdf(y_t, j, em):
    return mvn_logpdf(y_t, em.mu[j], em.omega[j])


def emission_matrix(y, em):
    """T x M matrix of emission log densities."""
    y = np.atleast_2d(y)
    out = np.empty((y.shape[0], em.M))
    for j in range(em.M):
        out[:, j] = mvn_logpdf_rows(y, em.mu[j], em.omega[j])
    return out


def log_likelihood(state, data):
    """Conditional log likelihood: DAR and emission terms for t = P+1 .. T."""
    phi = state.dar.phi
    P = phi.size - 1
    gamma = state.gamma
    ll = dar_loglik(gamma, phi, state.dar.pi)
    em = state.emissions
    y = data.y
    for j in np.unique(gamma[P:]):
        rows = np.flatnonzero(gamma[P:] == j) + P
        ll += float(np.sum(mvn_logpdf_rows(y[rows], em.mu[j], em.omega[j])))
    return ll


def log_prior(state, hp, augmented=True):
    em = state.emissions
    lp = log_stick_prior(state.dar.v, state.dar.z, hp)
    lp += log_dirichlet(state.dar.pi, hp.kappa0)
    for j in range(em.M):
        lp += mvn_logpdf(em.mu[j], hp.mu0, hp.R0)
        lp += log_ghs_prior(em, j, augmented=augmented)
    return lp


def log_joint(state, data, hp, augmented=True):
    return log_likelihood(state, data) + log_prior(state, hp, augmented=augmented)


def partial_correlation(omega):
    omega = np.asarray(omega, dtype=float)
    d = np.sqrt(np.diag(omega))
    pc = -omega / np.outer(d, d)
    np.fill_diagonal(pc, 1.0)
    return pc


def with_gamma(state, gamma):
    return replace(state, gamma=np.asarray(gamma, dtype=np.int64))
