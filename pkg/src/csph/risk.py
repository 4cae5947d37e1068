"""Moments, correlation and common-shock risk measures.

Everything except the quantile is a ratio of master-formula moments; the
common-shock conditional measures condition on the shock arriving after a
threshold ``a``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError
from .linalg import spectral_abscissa
from .master import master_moment
from .model import marginal_cdf, marginal_generator, shock_cdf

__all__ = [
    "MomentSet",
    "RiskReport",
    "moment_set",
    "pearson",
    "entropic_risk",
    "value_at_risk",
    "shock_quantile",
    "cvar_cs",
    "mtce_cs",
    "mtcov_cs",
    "regular_variation_index",
    "risk_report",
]

# smallest survival probability of the shock we are willing to divide by
MIN_TAIL_PROB = 1e-280


@dataclass(frozen=True)
class MomentSet:
    e_x1: float
    e_x2: float
    e_x1_sq: float
    e_x2_sq: float
    e_x1x2: float
    e_tau: float

    @property
    def var1(self):
        return self.e_x1_sq - self.e_x1**2

    @property
    def var2(self):
        return self.e_x2_sq - self.e_x2**2

    @property
    def cov(self):
        return self.e_x1x2 - self.e_x1 * self.e_x2


def _tail_moments(m, a):
    """Raw moments of the shock/residual triple restricted to ``tau > a``."""
    y = (a, 0.0, 0.0)
    keys = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (2, 0, 0), (1, 1, 0), (1, 0, 1),
            (0, 2, 0), (0, 0, 2), (0, 1, 1)]
    return {n: master_moment(m, n, (0.0, 0.0, 0.0), y) for n in keys}


def moment_set(m):
    mm = _tail_moments(m, 0.0)
    a1, a2 = m.a1, m.a2
    return MomentSet(
        e_x1=a1 * mm[1, 0, 0] + mm[0, 1, 0],
        e_x2=a2 * mm[1, 0, 0] + mm[0, 0, 1],
        e_x1_sq=a1 * a1 * mm[2, 0, 0] + 2 * a1 * mm[1, 1, 0] + mm[0, 2, 0],
        e_x2_sq=a2 * a2 * mm[2, 0, 0] + 2 * a2 * mm[1, 0, 1] + mm[0, 0, 2],
        e_x1x2=a1 * a2 * mm[2, 0, 0] + a1 * mm[1, 0, 1] + a2 * mm[1, 1, 0] + mm[0, 1, 1],
        e_tau=mm[1, 0, 0],
    )


def pearson(m, moments=None):
    ms = moments or moment_set(m)
    if not (ms.var1 > 0 and ms.var2 > 0):
        raise DomainError(f"pearson: variances ({ms.var1:.3e}, {ms.var2:.3e}) must be positive")
    return float(np.clip(ms.cov / math.sqrt(ms.var1 * ms.var2), -1.0, 1.0))


def _tail_prob(m, a, measure):
    if a < 0:
        raise DomainError(f"{measure}: threshold a = {a!r} must be nonnegative")
    prob = master_moment(m, y=(a, 0.0, 0.0))
    if not prob > MIN_TAIL_PROB:
        raise DomainError(f"{measure}: P(tau > {a:g}) = {prob:.3e} underflows")
    return prob


def entropic_risk(m, i, vartheta, a=0.0):
    """``(1/vartheta) log E[exp(-vartheta X_i) | tau > a]``."""
    if not vartheta > 0:
        raise DomainError(f"entropic_risk: vartheta = {vartheta!r} must be positive")
    _, _, ai = m.margin(i)
    prob = _tail_prob(m, a, "entropic_risk")
    theta = (ai * vartheta, vartheta, 0.0) if i == 1 else (ai * vartheta, 0.0, vartheta)
    num = master_moment(m, (0, 0, 0), theta, (a, 0.0, 0.0))
    if not num > 0:
        raise DomainError(f"entropic_risk: tilted mass {num:.3e} underflows at a = {a:g}")
    return math.log(num / prob) / vartheta


def _quantile(cdf, level, start, tol, what):
    lo, hi = 0.0, start
    while cdf(hi) < level:
        lo, hi = hi, 2 * hi
        if hi > 1e6 * start:
            raise NumericalError(f"{what}: no bracket for level {level} below {1e6 * start:.3e}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cdf(mid) >= level:
            hi = mid
        else:
            lo = mid
    return hi


def value_at_risk(m, i, level, tol=1e-8):
    """Smallest ``x`` with ``F_i(x) >= level``, to absolute tolerance ``tol``.

    The bracket starts at the mean and doubles; bisection then returns the
    upper end of the final bracket, so the CDF there is at least ``level``.
    """
    if not 0 < level < 1:
        raise DomainError(f"value_at_risk: level {level!r} must lie in (0, 1)")
    _, _, ai = m.margin(i)
    own = (0, 1, 0) if i == 1 else (0, 0, 1)
    mean = ai * master_moment(m, (1, 0, 0)) + master_moment(m, own)
    return _quantile(lambda x: float(marginal_cdf(m, i, x)), level, mean, tol, "value_at_risk")


def shock_quantile(m, level, tol=1e-8):
    """Quantile of the shock time, used for default threshold grids."""
    if not 0 < level < 1:
        raise DomainError(f"shock_quantile: level {level!r} must lie in (0, 1)")
    mean = master_moment(m, (1, 0, 0))
    return _quantile(lambda t: float(shock_cdf(m, t)), level, mean, tol, "shock_quantile")


def cvar_cs(m, i, a):
    """``E[X_i | tau > a]``."""
    prob = _tail_prob(m, a, "cvar_cs")
    _, _, ai = m.margin(i)
    y = (a, 0.0, 0.0)
    own = (0, 1, 0) if i == 1 else (0, 0, 1)
    num = ai * master_moment(m, (1, 0, 0), y=y) + master_moment(m, own, y=y)
    return num / prob


def mtce_cs(m, a):
    """``E[X1 X2 | tau > a]``."""
    prob = _tail_prob(m, a, "mtce_cs")
    mm = _tail_moments(m, a)
    a1, a2 = m.a1, m.a2
    num = a1 * a2 * mm[2, 0, 0] + a1 * mm[1, 0, 1] + a2 * mm[1, 1, 0] + mm[0, 1, 1]
    return num / prob


def mtcov_cs(m, a):
    """``Cov(X1, X2 | tau > a)``."""
    return mtce_cs(m, a) - cvar_cs(m, 1, a) * cvar_cs(m, 2, a)


def regular_variation_index(m, i):
    """Tail index of ``exp(X_i)``: minus the spectral abscissa of margin i."""
    return -spectral_abscissa(marginal_generator(m, i))


@dataclass
class RiskReport:
    mean1: float
    mean2: float
    var1: float
    var2: float
    pearson: float
    e_tau: float
    var_at_risk: dict = field(default_factory=dict)
    cvar_cs: list = field(default_factory=list)
    erm: list = field(default_factory=list)
    mtce_cs: list = field(default_factory=list)
    mtcov_cs: list = field(default_factory=list)
    tail_index: tuple = (float("nan"), float("nan"))

    def to_dict(self):
        return {
            "mean": [self.mean1, self.mean2],
            "variance": [self.var1, self.var2],
            "pearson": self.pearson,
            "e_tau": self.e_tau,
            "value_at_risk": [
                {"level": lvl, "x1": v[0], "x2": v[1]} for lvl, v in sorted(self.var_at_risk.items())
            ],
            "cvar_cs": [{"a": a, "x1": v1, "x2": v2} for a, v1, v2 in self.cvar_cs],
            "erm": [{"a": a, "vartheta": th, "x1": v1, "x2": v2} for a, th, v1, v2 in self.erm],
            "mtce_cs": [{"a": a, "value": v} for a, v in self.mtce_cs],
            "mtcov_cs": [{"a": a, "value": v} for a, v in self.mtcov_cs],
            "tail_index": list(self.tail_index),
        }


def risk_report(m, levels=(), a_grid=(), vartheta_grid=()):
    ms = moment_set(m)
    report = RiskReport(
        mean1=ms.e_x1,
        mean2=ms.e_x2,
        var1=ms.var1,
        var2=ms.var2,
        pearson=pearson(m, ms),
        e_tau=ms.e_tau,
        tail_index=(regular_variation_index(m, 1), regular_variation_index(m, 2)),
    )
    for lvl in levels:
        report.var_at_risk[float(lvl)] = (value_at_risk(m, 1, lvl), value_at_risk(m, 2, lvl))
    for a in a_grid:
        a = float(a)
        report.cvar_cs.append((a, cvar_cs(m, 1, a), cvar_cs(m, 2, a)))
        report.mtce_cs.append((a, mtce_cs(m, a)))
        report.mtcov_cs.append((a, mtcov_cs(m, a)))
        for th in vartheta_grid:
            th = float(th)
            report.erm.append((a, th, entropic_risk(m, 1, th, a), entropic_risk(m, 2, th, a)))
    return report
