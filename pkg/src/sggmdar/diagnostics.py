"""Heidelberger-Welch convergence diagnostic for a scalar trace.

Follows the conventions of the widely used coda implementation: the
spectral density at frequency zero comes from a Yule-Walker AR fit with
AIC order selection, and the Cramer-von Mises tail probability is the
four-term Bessel series.
"""

from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .errors import TraceTooShort


@dataclass
class HWResult:
    passed: bool
    stationarity_passed: bool
    start: int  # 0-based index of the retained segment, -1 if none
    statistic: float
    pvalue: float
    halfwidth_passed: bool
    mean: float
    halfwidth: float
    spectrum0: float
    ar_order: int

    def as_dict(self):
        return {k: (float(v) if isinstance(v, np.floating) else v) for k, v in asdict(self).items()}


def pcramer(q, eps=1e-5):
    """Distribution function of the Cramer-von Mises statistic."""
    q = float(q)
    if q <= 0:
        return 0.0
    log_eps = np.log(eps)
    total = 0.0
    for k in range(4):
        z = special.gamma(k + 0.5) * np.sqrt(4 * k + 1) / (special.gamma(k + 1) * np.pi**1.5 * np.sqrt(q))
        u = (4 * k + 1) ** 2 / (16.0 * q)
        if u <= -log_eps:
            total += z * np.exp(-u) * special.kv(0.25, u)
    return float(total)


def yule_walker_aic(x, order_max=None):
    """Yule-Walker AR fit with AIC order choice.

    Returns ``(coefs, var_pred, order)``; the innovation variance carries the
    ``n / (n - (order + 1))`` small-sample factor.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if order_max is None:
        order_max = min(n - 1, int(np.floor(10 * np.log10(n))))
    xc = x - x.mean()
    acov = np.array([xc[: n - k] @ xc[k:] / n for k in range(order_max + 1)])
    r0 = acov[0]
    # Levinson-Durbin, keeping every intermediate fit
    coefs = [np.zeros(0)]
    variances = [r0]
    a = np.zeros(0)
    v = r0
    for k in range(1, order_max + 1):
        if v <= 0:
            break
        refl = (acov[k] - a @ acov[1:k][::-1]) / v
        a = np.concatenate([a - refl * a[::-1], [refl]])
        v = v * (1.0 - refl * refl)
        coefs.append(a.copy())
        variances.append(v)
    with np.errstate(divide="ignore"):
        aic = np.array([n * np.log(var) + 2 * k if var > 0 else np.inf for k, var in enumerate(variances)])
    order = int(np.argmin(aic))
    var_pred = variances[order] * n / (n - (order + 1))
    return coefs[order], float(var_pred), order


def spectrum0_ar(x):
    """Spectral density at zero from an AR fit; zero for a trace with no residual spread."""
    x = np.asarray(x, dtype=float)
    t = np.arange(x.size, dtype=float)
    resid = x - np.polyval(np.polyfit(t, x, 1), t) if x.size > 1 else x * 0
    if np.std(resid) <= 1e-12 * max(1.0, np.abs(x).max()):
        return 0.0, 0
    coefs, var_pred, order = yule_walker_aic(x)
    return var_pred / (1.0 - coefs.sum()) ** 2, order


def heidelberger_welch(trace, eps=0.1, pvalue=0.05, min_length=100):
    """Stationarity and halfwidth tests.

    Prefixes of 0, 10, ..., 50 % of the trace are discarded in turn until the
    Cramer-von Mises statistic is not significant.  ``passed`` reports the
    stationarity outcome; the halfwidth test is reported alongside it.
    """
    x = np.asarray(trace, dtype=float).ravel()
    n_total = x.size
    if n_total < min_length:
        raise TraceTooShort(f"trace has {n_total} values, need at least {min_length}")
    if np.ptp(x) == 0:
        return HWResult(True, True, 0, 0.0, 1.0, True, float(x[0]), 0.0, 0.0, 0)

    starts = [int(i * n_total / 10) for i in range(6)]
    s0, _ = spectrum0_ar(x[n_total // 2:])
    converged = False
    stat = np.nan
    start = -1
    for st in starts:
        y = x[st:]
        n = y.size
        ybar = y.mean()
        B = np.cumsum(y) - ybar * np.arange(1, n + 1)
        stat = np.sum(B * B / (n * s0)) / n if s0 > 0 else np.nan
        if np.isfinite(stat) and pcramer(stat) < 1.0 - pvalue:
            converged = True
            start = st
            break
    p = 1.0 - pcramer(stat) if np.isfinite(stat) else np.nan
    if not converged:
        return HWResult(False, False, -1, float(stat), float(p), False, float("nan"), float("nan"), float(s0), 0)
    y = x[start:]
    s0ci, order = spectrum0_ar(y)
    ybar = float(y.mean())
    hw = 1.96 * np.sqrt(s0ci / y.size)
    hw_ok = bool(abs(hw) <= eps * abs(ybar)) if ybar != 0 else hw == 0
    return HWResult(True, True, start, float(stat), float(p), hw_ok, ybar, float(hw), float(s0ci), order)
