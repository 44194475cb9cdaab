"""Edge-recovery scores, precision RMSE and aligned state accuracy."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatch, LengthMismatch


@dataclass(frozen=True)
class EdgeConfusion:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn


def _check_adj(a, name):
    a = np.asarray(a).astype(bool)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")
    if not np.array_equal(a, a.T):
        raise ValueError(f"{name} is not symmetric")
    if np.any(np.diag(a)):
        raise ValueError(f"{name} has a nonzero diagonal")
    return a


def confusion(true_adj, est_adj):
    """Counts over the upper-triangle positions i < l."""
    t = _check_adj(true_adj, "true_adj")
    e = _check_adj(est_adj, "est_adj")
    if t.shape != e.shape:
        raise DimensionMismatch(f"shapes differ: {t.shape} vs {e.shape}")
    iu = np.triu_indices(t.shape[0], 1)
    t, e = t[iu], e[iu]
    return EdgeConfusion(
        tp=int(np.sum(t & e)), tn=int(np.sum(~t & ~e)), fp=int(np.sum(~t & e)), fn=int(np.sum(t & ~e))
    )


def _ratio(num, den):
    return None if den == 0 else num / den


def scores(c):
    """acc, sens, spec, f1 and mcc; a score with a zero denominator is None."""
    tp, tn, fp, fn = c.tp, c.tn, c.fp, c.fn
    mcc_den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = None if mcc_den == 0 else (tp * tn - fp * fn) / np.sqrt(float(mcc_den))
    return {
        "acc": _ratio(tp + tn, c.total),
        "sens": _ratio(tp, tp + fn),
        "spec": _ratio(tn, tn + fp),
        "f1": _ratio(2 * tp, 2 * tp + fp + fn),
        "mcc": None if mcc is None else float(mcc),
    }


def rmse_offdiag(true_omega, est_omega, D=None):
    """sqrt(sum_{i<l} (w_il - w_hat_il)^2 / D); the normaliser is D, not the pair count."""
    a = np.asarray(true_omega, dtype=float)
    b = np.asarray(est_omega, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"shapes differ or not square: {a.shape} vs {b.shape}")
    D = a.shape[0] if D is None else D
    iu = np.triu_indices(a.shape[0], 1)
    return float(np.sqrt(np.sum((a[iu] - b[iu]) ** 2) / D))


def align_labels(true_gamma, est_gamma):
    """Map est label -> true label maximising agreement (unmatched labels map to -1)."""
    t = np.asarray(true_gamma, dtype=np.int64)
    e = np.asarray(est_gamma, dtype=np.int64)
    if t.shape != e.shape:
        raise LengthMismatch(f"lengths differ: {t.shape} vs {e.shape}")
    n_t = int(t.max()) + 1 if t.size else 1
    n_e = int(e.max()) + 1 if e.size else 1
    agree = np.zeros((n_e, n_t), dtype=np.int64)
    np.add.at(agree, (e, t), 1)
    rows, cols = linear_sum_assignment(-agree)
    mapping = np.full(n_e, -1, dtype=np.int64)
    mapping[rows] = cols
    return mapping


def state_accuracy(true_gamma, est_gamma):
    """Fraction of agreeing time points under the best one-to-one relabelling."""
    mapping = align_labels(true_gamma, est_gamma)
    t = np.asarray(true_gamma, dtype=np.int64)
    if t.size == 0:
        return 1.0
    return float(np.mean(mapping[np.asarray(est_gamma, dtype=np.int64)] == t))


def adjacency_from_precision(omega, tol=0.0):
    a = np.abs(np.asarray(omega)) > tol
    np.fill_diagonal(a, False)
    return a


def state_metrics(true_omega, est_omega, est_adj):
    """Scores plus RMSE for one state, as a flat dict."""
    row = scores(confusion(adjacency_from_precision(true_omega), est_adj))
    row["rmse"] = rmse_offdiag(true_omega, est_omega)
    return row


def mean_sd(values, digits=3):
    """Table cell ``mean (sd)`` over the defined values; None if none are defined."""
    vals = np.array([v for v in values if v is not None], dtype=float)
    if vals.size == 0:
        return None
    sd = vals.std(ddof=1) if vals.size > 1 else 0.0
    return f"{vals.mean():.{digits}f} ({sd:.{digits}f})"
