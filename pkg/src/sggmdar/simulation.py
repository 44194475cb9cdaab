"""Synthetic regime-switching data: structured precisions, DAR state paths."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NotPositiveDefinite
from .model import Dataset
from .numerics import is_positive_definite, rng_stream

GRAPH_KINDS = ("identity", "star", "hub", "ar2", "random")


@dataclass
class SimConfig:
    D: int = 15
    T: int = 2000
    M: int = 5
    P: int = 2
    phi: tuple = (0.1, 0.75, 0.15)
    pi: tuple = (0.6, 0.1, 0.1, 0.1, 0.1)
    graph_kinds: tuple = ("identity", "star", "hub", "ar2", "random")
    hub_blocks: int = 5
    seed: int = 0
    scale_to_unit_sd: bool = True
    zero_means: bool = False

    def __post_init__(self):
        self.phi = tuple(float(x) for x in self.phi)
        self.pi = tuple(float(x) for x in self.pi)
        self.graph_kinds = tuple(self.graph_kinds)
        self.validate()

    def validate(self):
        for name in ("D", "T", "M", "P", "hub_blocks"):
            if int(getattr(self, name)) < 1:
                raise ConfigError("must be a positive integer", name)
        _check_simplex(self.phi, "phi", self.P + 1)
        _check_simplex(self.pi, "pi", self.M)
        if len(self.graph_kinds) != self.M:
            raise ConfigError(f"expected {self.M} entries", "graph_kinds")
        for i, kind in enumerate(self.graph_kinds):
            if kind not in GRAPH_KINDS:
                raise ConfigError(f"unknown graph kind {kind!r}", f"graph_kinds[{i}]")
            if kind == "hub" and self.D % self.hub_blocks:
                raise ConfigError(f"hub_blocks={self.hub_blocks} must divide D={self.D}", "hub_blocks")
            if kind == "random" and self.D < 5:
                raise ConfigError("random graphs need D >= 5", f"graph_kinds[{i}]")


def _check_simplex(x, name, n):
    x = np.asarray(x, dtype=float)
    if x.size != n:
        raise ConfigError(f"expected {n} entries, got {x.size}", name)
    if np.any(x < 0) or abs(x.sum() - 1.0) > 1e-9:
        raise ConfigError("must be a probability vector", name)


def make_graph(kind, D, rng=None, hub_blocks=5, max_tries=100):
    """Precision matrix with unit diagonal and the requested sparsity pattern."""
    if kind == "identity":
        return np.eye(D)
    if kind == "star":
        om = np.eye(D)
        om[0, 1:] = om[1:, 0] = -1.0 / D
        return om
    if kind == "hub":
        if D % hub_blocks:
            raise ValueError(f"hub_blocks={hub_blocks} must divide D={D}")
        size = D // hub_blocks
        # positive sign: the same magnitude with a negative sign is indefinite
        # for every block size >= 3 at these D
        om = np.zeros((D, D))
        for b in range(hub_blocks):
            sl = slice(b * size, (b + 1) * size)
            om[sl, sl] = 2.0 / np.sqrt(D)
        np.fill_diagonal(om, 1.0)
        return om
    if kind == "ar2":
        om = np.eye(D)
        i = np.arange(D - 1)
        om[i, i + 1] = om[i + 1, i] = 0.5
        i = np.arange(D - 2)
        om[i, i + 2] = om[i + 2, i] = 0.25
        return om
    if kind == "random":
        if rng is None:
            raise ValueError("random graphs need an rng")
        for _ in range(max_tries):
            om = random_graph_raw(D, rng)
            if is_positive_definite(om):
                return om
        raise NotPositiveDefinite(f"no positive definite random graph in {max_tries} draws")
    raise ValueError(f"unknown graph kind {kind!r}")


def random_graph_raw(D, rng):
    """One draw of the random sparse construction, before the PD check."""
    iu = np.triu_indices(D, 1)
    n_edges = (3 * D) // 2
    pick = rng.choice(len(iu[0]), size=n_edges, replace=False)
    a = np.zeros((D, D))
    mag = rng.uniform(0.4, 1.0, size=n_edges)
    sign = np.where(rng.random(n_edges) < 0.5, -1.0, 1.0)
    a[iu[0][pick], iu[1][pick]] = sign * mag
    row = np.abs(a).sum(axis=1, keepdims=True)
    a = np.divide(a, row, out=np.zeros_like(a), where=row > 0)
    om = 0.5 * (a + a.T)
    np.fill_diagonal(om, 1.0)
    return om


def mean_template(D):
    """Evenly spaced template from -5/D to 5/D (the 11-point grid when D = 11)."""
    return np.linspace(-5.0 / D, 5.0 / D, D)


def make_means(M, D, rng, zero_means=False):
    if zero_means:
        return np.zeros((M, D))
    b0 = mean_template(D)
    mus = np.empty((M, D))
    for j in range(M):
        mus[j] = rng.permutation(b0) + rng.standard_normal(D)
    return mus


def simulate_dar_sequence(T, phi, pi, rng):
    """State path from the DAR process; the first P states are i.i.d. from pi."""
    phi = np.asarray(phi, dtype=float)
    pi = np.asarray(pi, dtype=float)
    P = phi.size - 1
    gamma = np.empty(T, dtype=np.int64)
    n0 = min(P, T)
    gamma[:n0] = rng.choice(pi.size, size=n0, p=pi)
    lag = rng.choice(P + 1, size=T, p=phi)
    innov = rng.choice(pi.size, size=T, p=pi)
    for t in range(P, T):
        k = lag[t]
        gamma[t] = innov[t] if k == 0 else gamma[t - k]
    return gamma


@dataclass
class Truth:
    gamma: np.ndarray
    phi: np.ndarray
    pi: np.ndarray
    mu: np.ndarray
    omega: np.ndarray
    graph_kinds: tuple
    scales: np.ndarray = None
    extra: dict = field(default_factory=dict)

    def omega_in_data_units(self):
        """True precisions in the coordinates of the (possibly scaled) data."""
        if self.scales is None:
            return self.omega.copy()
        s = self.scales
        return self.omega * np.outer(s, s)[None]


def simulate_dataset(cfg, rng=None):
    """Generate ``(Dataset, Truth)``; truth parameters are kept unscaled."""
    rng = rng if rng is not None else rng_stream(cfg.seed, 0)
    omegas = np.stack([make_graph(k, cfg.D, rng, cfg.hub_blocks) for k in cfg.graph_kinds])
    mus = make_means(cfg.M, cfg.D, rng, cfg.zero_means)
    gamma = simulate_dar_sequence(cfg.T, cfg.phi, cfg.pi, rng)
    y = np.empty((cfg.T, cfg.D))
    for j in range(cfg.M):
        rows = np.flatnonzero(gamma == j)
        if rows.size == 0:
            continue
        L = np.linalg.cholesky(omegas[j])
        z = rng.standard_normal((rows.size, cfg.D))
        # solve L^T x = z row-wise gives covariance omega^-1
        y[rows] = mus[j] + np.linalg.solve(L.T, z.T).T
    scales = None
    if cfg.scale_to_unit_sd:
        scales = y.std(axis=0, ddof=1)
        y = y / scales
    truth = Truth(gamma, np.asarray(cfg.phi), np.asarray(cfg.pi), mus, omegas, cfg.graph_kinds, scales)
    return Dataset(y, gamma), truth
