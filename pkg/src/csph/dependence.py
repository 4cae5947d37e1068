"""Dependence between the two residuals given the shock time.

Given ``tau = t`` the residuals are a mixture over the entry state K with
weights ``pi_k(t)``; within each component they are independent.  Linear and
rank correlations of the residual pair equal those of (X1, X2) given
``tau = t`` because the shock enters both margins as a constant shift.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError
from .linalg import kron_sum, mat_exp, solve_linear

__all__ = [
    "ConditionalWeights",
    "entry_weights",
    "state_moments",
    "cond_mean",
    "cond_var",
    "cond_cross_moment",
    "cond_pearson",
    "kendall_coefficient",
    "kendall_matrix",
    "cond_kendall",
    "cond_spearman",
]


@dataclass(frozen=True, eq=False)
class ConditionalWeights:
    t: float
    weights: np.ndarray


def entry_weights(m, t):
    """Law of the entry state K given that the shock happens at time ``t``."""
    t = float(t)
    if t < 0:
        raise DomainError(f"entry_weights: t = {t!r} must be nonnegative")
    flows = (m.alpha @ mat_exp(m.T * t)) @ m.U
    total = flows.sum()
    if not total > 1e-300:
        raise DomainError(f"entry_weights: shock density {total:.3e} underflows at t = {t:g}")
    return ConditionalWeights(t=t, weights=flows / total)


def state_moments(m, i):
    """First and second moments of residual ``i`` from each entry state."""
    Q, q, _ = m.margin(i)
    first = solve_linear(-Q, solve_linear(-Q, q))
    second = 2 * solve_linear(-Q, first)
    return first, second


def _weights(m, t):
    return entry_weights(m, t).weights


def cond_mean(m, i, t):
    return float(_weights(m, t) @ state_moments(m, i)[0])


def cond_var(m, i, t):
    w = _weights(m, t)
    first, second = state_moments(m, i)
    return max(float(w @ second - (w @ first) ** 2), 0.0)


def cond_cross_moment(m, t):
    w = _weights(m, t)
    return float(w @ (state_moments(m, 1)[0] * state_moments(m, 2)[0]))


def cond_pearson(m, t):
    w = _weights(m, t)
    (f1, s1), (f2, s2) = state_moments(m, 1), state_moments(m, 2)
    mean1, mean2 = w @ f1, w @ f2
    var1, var2 = w @ s1 - mean1**2, w @ s2 - mean2**2
    if not (var1 > 0 and var2 > 0):
        raise DomainError(f"cond_pearson: conditional variances ({var1:.3e}, {var2:.3e}) at t = {t:g}")
    cov = w @ (f1 * f2) - mean1 * mean2
    return float(np.clip(cov / np.sqrt(var1 * var2), -1.0, 1.0))


def kendall_matrix(m, i):
    """``C[k, l] = P(R_k <= R_l)`` for independent residuals of margin ``i``
    started in states ``k`` and ``l``."""
    Q, q, _ = m.margin(i)
    return _kendall_matrix(Q.tobytes(), Q.shape[0], q.tobytes())


@lru_cache(maxsize=64)
def _kendall_matrix(Qb, p, qb):
    Q = np.frombuffer(Qb).reshape(p, p)
    q = np.frombuffer(qb)
    surv_times_exit = solve_linear(-kron_sum(Q, Q), np.kron(np.ones(p), q))
    C = 1.0 - surv_times_exit.reshape(p, p)
    C.flags.writeable = False
    return C


def kendall_coefficient(m, i, k, l):
    return float(kendall_matrix(m, i)[k, l])


def cond_kendall(m, t):
    w = _weights(m, t)
    C1, C2 = kendall_matrix(m, 1), kendall_matrix(m, 2)
    return float(np.clip(4 * (w @ (C1 * C2) @ w) - 1, -1.0, 1.0))


def cond_spearman(m, t):
    w = _weights(m, t)
    C1, C2 = kendall_matrix(m, 1), kendall_matrix(m, 2)
    total = np.einsum("k,l,n,kl,kn->", w, w, w, C1, C2)
    return float(np.clip(12 * total - 3, -1.0, 1.0))
