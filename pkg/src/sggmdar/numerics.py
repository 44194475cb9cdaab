"""Seedable random streams and the dense linear algebra used by the sampler."""

import math

import numpy as np
from scipy import linalg

from .errors import NonFiniteTarget, NotPositiveDefinite

LOG_2PI = math.log(2.0 * math.pi)


def rng_stream(seed, stream_id=0):
    """Return a Philox generator for the pair ``(seed, stream_id)``.

    Philox is counter based and SeedSequence spawn keys give independent
    streams, so chains, replicates and per-state updates can each own one.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(stream_id) & 0xFFFFFFFF,))
    return np.random.Generator(np.random.Philox(ss))


def spawn_streams(seed, n, base=0):
    return [rng_stream(seed, base + i) for i in range(n)]


def is_symmetric(m, rtol=1e-12):
    m = np.asarray(m)
    scale = max(np.max(np.abs(m)), 1.0)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.max(np.abs(m - m.T)) <= rtol * scale


def cholesky(m):
    """Lower Cholesky factor of a symmetric positive definite matrix."""
    m = np.asarray(m, dtype=float)
    if not is_symmetric(m, rtol=1e-10):
        raise ValueError("matrix is not symmetric")
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def is_positive_definite(m):
    try:
        np.linalg.cholesky(np.asarray(m, dtype=float))
    except np.linalg.LinAlgError:
        return False
    return True


def mvn_logpdf(y, mu, omega):
    """log N(y | mu, omega^-1) parametrised by the precision matrix."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return float(mvn_logpdf_rows(y[None, :], mu, omega)[0])


def mvn_logpdf_rows(Y, mu, omega, chol=None):
    """Row-wise log density of ``Y`` (n x D) under N(mu, omega^-1)."""
    Y = np.asarray(Y, dtype=float)
    L = cholesky(omega) if chol is None else chol
    D = L.shape[0]
    # with omega = L L^T the quadratic form is ||L^T (y - mu)||^2
    r = (Y - np.asarray(mu, dtype=float)) @ L
    half_logdet = np.sum(np.log(np.diag(L)))
    return half_logdet - 0.5 * D * LOG_2PI - 0.5 * np.einsum("ij,ij->i", r, r)


def mvn_sample(rng, mu, omega, chol=None):
    """Draw from N(mu, omega^-1) using the Cholesky factor of the precision."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    L = cholesky(omega) if chol is None else chol
    z = rng.standard_normal(mu.shape[0])
    return mu + linalg.solve_triangular(L, z, lower=True, trans="T")


def slice_sample_1d(rng, log_target, x0, lower, upper, width=0.1, max_steps=50):
    """One stepping-out / shrinkage slice transition on ``(lower, upper)``.

    Points outside the open interval have zero density.  ``max_steps`` bounds
    the total number of width-sized extensions of the initial bracket.
    """
    if not lower < x0 < upper:
        raise ValueError(f"x0={x0!r} outside ({lower!r}, {upper!r})")
    f0 = log_target(x0)
    if not np.isfinite(f0):
        raise NonFiniteTarget(f"log target is {f0} at x0={x0!r}")

    def f(x):
        if not lower < x < upper:
            return -np.inf
        return log_target(x)

    level = f0 - rng.standard_exponential()
    left = x0 - width * rng.random()
    right = left + width
    j = int(np.floor(max_steps * rng.random()))
    k = max_steps - 1 - j
    while j > 0 and left > lower and f(left) > level:
        left -= width
        j -= 1
    while k > 0 and right < upper and f(right) > level:
        right += width
        k -= 1
    left = max(left, lower)
    right = min(right, upper)

    while True:
        x1 = left + rng.random() * (right - left)
        if x1 != x0 and f(x1) > level:
            return x1
        if x1 < x0:
            left = x1
        elif x1 > x0:
            right = x1
        # no representable point other than x0 left in the bracket
        if np.nextafter(left, np.inf) >= x0 and np.nextafter(right, -np.inf) <= x0:
            return x0
