"""Graphical horseshoe block Gibbs sweep for one precision matrix.

Column-wise update of Omega, its inverse Sigma, the squared local scales,
their auxiliaries nu, and the global scale tau^2 with auxiliary xi.  The
data enter only through the scatter matrix S = Y^T Y of zero-mean rows and
the row count n.
"""

import numpy as np
from scipy import linalg

from .errors import NotPositiveDefinite


def ghs_sweep(rng, S, n, omega, sigma, lam_sq, nu, tau_sq, xi):
    """One full sweep; arrays are updated in place, ``(tau_sq, xi)`` returned.

    ``sigma`` must equal ``inv(omega)`` on entry and is kept in sync.
    """
    D = omega.shape[0]
    if D == 1:
        g = rng.gamma(n / 2.0 + 1.0, 2.0 / S[0, 0])
        omega[0, 0] = g
        sigma[0, 0] = 1.0 / g
        return tau_sq, xi
    idx_all = np.arange(D)
    for i in range(D):
        rest = idx_all != i
        sigma11 = sigma[np.ix_(rest, rest)]
        sigma12 = sigma[rest, i]
        sigma22 = sigma[i, i]
        s12 = S[rest, i]
        s22 = S[i, i]
        gamma = rng.gamma(n / 2.0 + 1.0, 2.0 / s22)
        inv_omega11 = sigma11 - np.outer(sigma12, sigma12) / sigma22
        inv_c = s22 * inv_omega11
        inv_c[np.diag_indices(D - 1)] += 1.0 / (lam_sq[rest, i] * tau_sq)
        try:
            U = linalg.cholesky(inv_c, lower=False)
        except linalg.LinAlgError as exc:
            raise NotPositiveDefinite(f"GHS column {i}: {exc}") from None
        mu_i = -linalg.cho_solve((U, False), s12)
        beta = mu_i + linalg.solve_triangular(U, rng.standard_normal(D - 1), lower=False)
        tmp = inv_omega11 @ beta
        omega22 = gamma + beta @ tmp
        omega[rest, i] = beta
        omega[i, rest] = beta
        omega[i, i] = omega22

        rate = beta * beta / (2.0 * tau_sq) + 1.0 / nu[rest, i]
        new_lam = rate / rng.gamma(1.0, size=D - 1)
        new_nu = (1.0 + 1.0 / new_lam) / rng.gamma(1.0, size=D - 1)
        lam_sq[rest, i] = new_lam
        lam_sq[i, rest] = new_lam
        nu[rest, i] = new_nu
        nu[i, rest] = new_nu

        s11 = inv_omega11 + np.outer(tmp, tmp) / gamma
        s12_new = -tmp / gamma
        sigma[np.ix_(rest, rest)] = s11
        sigma[rest, i] = s12_new
        sigma[i, rest] = s12_new
        sigma[i, i] = 1.0 / gamma

    iu = np.triu_indices(D, 1)
    w = omega[iu]
    rate = 1.0 / xi + np.sum(w * w / (2.0 * lam_sq[iu]))
    tau_sq = rate / rng.gamma((len(w) + 1) / 2.0)
    xi = (1.0 + 1.0 / tau_sq) / rng.gamma(1.0)
    return tau_sq, xi


def sample_ghs_prior(rng, D, diag_upper=100.0, max_tries=100):
    """Draw (omega, lam_sq, nu, tau_sq, xi) from the prior.

    Diagonals are U(0, diag_upper); off-diagonals N(0, lam^2 tau^2) with
    half-Cauchy scales drawn through their inverse-gamma mixtures.  Draws
    that are not positive definite are retried; after ``max_tries`` the
    off-diagonals of the last draw are dropped.
    """
    iu = np.triu_indices(D, 1)
    K = len(iu[0])
    for _ in range(max_tries):
        xi = 1.0 / rng.gamma(0.5)
        tau_sq = (1.0 / xi) / rng.gamma(0.5)
        nu = 1.0 / rng.gamma(0.5, size=K)
        lam_sq = (1.0 / nu) / rng.gamma(0.5, size=K)
        omega = np.zeros((D, D))
        omega[iu] = rng.standard_normal(K) * np.sqrt(lam_sq * tau_sq)
        omega = omega + omega.T
        omega[np.diag_indices(D)] = rng.uniform(0.0, diag_upper, size=D)
        try:
            np.linalg.cholesky(omega)
            break
        except np.linalg.LinAlgError:
            continue
    else:
        omega = np.diag(np.diag(omega))
    L = np.ones((D, D))
    N = np.ones((D, D))
    L[iu] = lam_sq
    L.T[iu] = lam_sq
    N[iu] = nu
    N.T[iu] = nu
    return omega, L, N, tau_sq, xi
