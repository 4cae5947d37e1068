"""Common-shock phase-type model: parameters, validation and exact
distributional quantities.

A pair (X1, X2) is built from a Markov chain that runs on the shared states E
until it jumps into one of the post-shock states S at time ``tau``.  From the
entry state K the two margins continue independently on S with generators Q1
and Q2, absorbing after residual times R1, R2, and

    X1 = a1 * tau + R1,    X2 = a2 * tau + R2.

Post-shock state indices ``k`` are 0-based.  Margins are labelled 1 and 2.
Every evaluation function broadcasts over array arguments and returns 0 for
negative times.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionError, DomainError, SingularMatrixError, ValidationError
from .linalg import (
    exp_action_times,
    kron_product,
    kron_sum,
    mat_exp_times,
    solve_linear,
    spectral_abscissa,
)

__all__ = [
    "CSPHModel",
    "MPHModel",
    "validate",
    "marginal_generator",
    "marginal_pdf",
    "marginal_cdf",
    "marginal_mean",
    "shock_density_defective",
    "shock_density",
    "shock_cdf",
    "shock_mgf_defective",
    "residual_pdf",
    "residual_cdf",
    "residual_mgf",
    "coupling_matrix",
    "trivariate_density",
    "joint_pdf",
    "joint_cdf",
    "joint_mgf",
    "mph_joint_cdf",
    "mph_joint_pdf",
    "csph_from_mph",
]

PROB_TOL = 1e-12
BALANCE_TOL = 1e-10


def _frozen(x, ndim, name):
    a = np.array(x, dtype=float)
    if a.ndim != ndim:
        raise DimensionError(f"{name}: expected {ndim}-D array, got shape {a.shape}")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class CSPHModel:
    """Parameters ``(alpha, T, U, Q1, Q2, a1, a2)``.

    alpha is the initial law on the p0 pre-shock states, T their p0 x p0
    subintensity, U the p0 x p1 rates into the post-shock states, Q1 and Q2
    the post-shock subintensities and a1, a2 the shock scalings.  Shapes are
    checked on construction; call :func:`validate` for the sign and balance
    constraints.
    """

    alpha: np.ndarray
    T: np.ndarray
    U: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    a1: float = 1.0
    a2: float = 1.0

    def __post_init__(self):
        for name, ndim in (("alpha", 1), ("T", 2), ("U", 2), ("Q1", 2), ("Q2", 2)):
            object.__setattr__(self, name, _frozen(getattr(self, name), ndim, name))
        object.__setattr__(self, "a1", float(self.a1))
        object.__setattr__(self, "a2", float(self.a2))
        p0, p1 = self.p0, self.p1
        if p0 == 0 or p1 == 0:
            raise DimensionError("CSPHModel: state spaces must be nonempty")
        checks = [
            ("T", self.T.shape, (p0, p0)),
            ("U", self.U.shape, (p0, p1)),
            ("Q1", self.Q1.shape, (p1, p1)),
            ("Q2", self.Q2.shape, (p1, p1)),
        ]
        for name, got, want in checks:
            if got != want:
                raise DimensionError(f"CSPHModel: {name} has shape {got}, expected {want}")

    @property
    def p0(self):
        return self.alpha.shape[0]

    @property
    def p1(self):
        return self.U.shape[1]

    @cached_property
    def q1(self):
        return -self.Q1.sum(axis=1)

    @cached_property
    def q2(self):
        return -self.Q2.sum(axis=1)

    @cached_property
    def P(self):
        return coupling_matrix(self)

    def margin(self, i):
        """``(Q_i, q_i, a_i)`` for margin 1 or 2."""
        if i == 1:
            return self.Q1, self.q1, self.a1
        if i == 2:
            return self.Q2, self.q2, self.a2
        raise DomainError(f"margin index must be 1 or 2, got {i!r}")

    def to_dict(self):
        return {
            "alpha": self.alpha.tolist(),
            "T": self.T.tolist(),
            "U": self.U.tolist(),
            "Q1": self.Q1.tolist(),
            "Q2": self.Q2.tolist(),
            "a1": self.a1,
            "a2": self.a2,
        }


@dataclass(frozen=True, eq=False)
class MPHModel:
    """Mixture with a shared random start ``pi`` and independent margins
    driven by subintensities ``S1`` and ``S2`` from that start."""

    pi: np.ndarray
    S1: np.ndarray
    S2: np.ndarray

    def __post_init__(self):
        for name, ndim in (("pi", 1), ("S1", 2), ("S2", 2)):
            object.__setattr__(self, name, _frozen(getattr(self, name), ndim, name))
        p = self.pi.shape[0]
        for name in ("S1", "S2"):
            if getattr(self, name).shape != (p, p):
                raise DimensionError(f"MPHModel: {name} must be {p}x{p}")


def _check_probability(v, name):
    if np.any(~np.isfinite(v)):
        raise ValidationError(f"{name}: non-finite entry")
    neg = np.flatnonzero(v < 0)
    if neg.size:
        j = neg[0]
        raise ValidationError(f"{name}[{j}] = {v[j]:.3e} is negative")
    if abs(v.sum() - 1.0) > PROB_TOL:
        raise ValidationError(f"{name} sums to {v.sum():.15g}, expected 1 (off by {v.sum() - 1:.3e})")


def _check_subintensity(M, name):
    if np.any(~np.isfinite(M)):
        raise ValidationError(f"{name}: non-finite entry")
    off = M - np.diag(np.diag(M))
    bad = np.argwhere(off < 0)
    if bad.size:
        r, c = bad[0]
        raise ValidationError(f"{name}[{r},{c}] = {M[r, c]:.3e} is a negative off-diagonal rate")
    bad = np.flatnonzero(np.diag(M) > 0)
    if bad.size:
        r = bad[0]
        raise ValidationError(f"{name}[{r},{r}] = {M[r, r]:.3e} is a positive diagonal entry")


def _check_transient(M, name):
    rows = M.sum(axis=1)
    scale = np.maximum(1.0, np.abs(np.diag(M)))
    bad = np.flatnonzero(rows > BALANCE_TOL * scale)
    if bad.size:
        r = bad[0]
        raise ValidationError(f"row {r} of {name} sums to {rows[r]:.3e} > 0")
    try:
        solve_linear(-M, np.ones(M.shape[0]))
    except SingularMatrixError as exc:
        raise ValidationError(f"-{name} is singular, some state is never left: {exc}") from exc


def validate(m):
    """Return ``m`` if every structural constraint holds, else raise
    :class:`ValidationError` naming the offending entry and its size."""
    if isinstance(m, MPHModel):
        _check_probability(m.pi, "pi")
        for name in ("S1", "S2"):
            _check_subintensity(getattr(m, name), name)
            _check_transient(getattr(m, name), name)
        return m
    _check_probability(m.alpha, "alpha")
    _check_subintensity(m.T, "T")
    if np.any(~np.isfinite(m.U)):
        raise ValidationError("U: non-finite entry")
    bad = np.argwhere(m.U < 0)
    if bad.size:
        r, c = bad[0]
        raise ValidationError(f"U[{r},{c}] = {m.U[r, c]:.3e} is negative")
    balance = m.T.sum(axis=1) + m.U.sum(axis=1)
    scale = np.maximum(1.0, np.abs(np.diag(m.T)))
    bad = np.flatnonzero(np.abs(balance) > BALANCE_TOL * scale)
    if bad.size:
        r = bad[0]
        raise ValidationError(
            f"row {r}: T row sum + U row sum = {balance[r]:.3e}, expected 0 "
            "(pre-shock states must either move within E or exit to S)"
        )
    for name in ("Q1", "Q2"):
        _check_subintensity(getattr(m, name), name)
        _check_transient(getattr(m, name), name)
    for name in ("a1", "a2"):
        v = getattr(m, name)
        if not (np.isfinite(v) and v > 0):
            raise ValidationError(f"{name} = {v!r} must be positive and finite")
    return m


def _exp_at(M, x):
    """``exp(M * x)`` for every entry of ``x``; shape ``x.shape + M.shape``."""
    return mat_exp_times(M, x)


def _nonneg(x):
    x = np.asarray(x, dtype=float)
    return x, np.where(x > 0, x, 0.0)


def _state_index(m, k):
    if not (0 <= int(k) < m.p1) or int(k) != k:
        raise IndexError(f"post-shock state {k!r} out of range 0..{m.p1 - 1}")
    return int(k)


def marginal_generator(m, i):
    """Block subintensity ``[[T/a_i, U/a_i], [0, Q_i]]`` of margin ``i``."""
    Q, _, a = m.margin(i)
    p0, p1 = m.p0, m.p1
    G = np.zeros((p0 + p1, p0 + p1))
    G[:p0, :p0] = m.T / a
    G[:p0, p0:] = m.U / a
    G[p0:, p0:] = Q
    return G


def _marginal_parts(m, i):
    G = marginal_generator(m, i)
    init = np.concatenate([m.alpha, np.zeros(m.p1)])
    return init, G, -G.sum(axis=1)


def marginal_pdf(m, i, x):
    init, G, g = _marginal_parts(m, i)
    x, xc = _nonneg(x)
    val = exp_action_times(G, xc, g, "right") @ init
    return np.where(x >= 0, np.maximum(val, 0.0), 0.0)


def marginal_cdf(m, i, x):
    init, G, _ = _marginal_parts(m, i)
    x, xc = _nonneg(x)
    surv = exp_action_times(G, xc, np.ones(G.shape[0]), "right") @ init
    val = np.clip(1.0 - surv, 0.0, 1.0)
    return np.where(x > 0, val, 0.0)


def marginal_mean(m, i):
    init, G, _ = _marginal_parts(m, i)
    return float(init @ solve_linear(-G, np.ones(G.shape[0])))


def shock_density_defective(m, k, t):
    """Density of the shock time jointly with entry into state ``k``."""
    k = _state_index(m, k)
    t, tc = _nonneg(t)
    val = exp_action_times(m.T, tc, m.alpha) @ m.U[:, k]
    return np.where(t >= 0, val, 0.0)


def shock_density(m, t):
    t, tc = _nonneg(t)
    val = exp_action_times(m.T, tc, m.alpha) @ m.U.sum(axis=1)
    return np.where(t >= 0, val, 0.0)


def _resolvent_solve(M, s, rhs, what):
    n = M.shape[0]
    decay = spectral_abscissa(M)
    if not s < -decay:
        raise DomainError(
            f"{what}: transform diverges at s = {s!r}; it exists only for s < {-decay:.6g}"
        )
    try:
        return solve_linear(-M - s * np.eye(n), rhs)
    except SingularMatrixError as exc:
        raise DomainError(f"{what}: resolvent is singular at s = {s!r}") from exc


def shock_cdf(m, t):
    t, tc = _nonneg(t)
    surv = exp_action_times(m.T, tc, np.ones(m.p0), "right") @ m.alpha
    return np.where(t > 0, np.clip(1.0 - surv, 0.0, 1.0), 0.0)


def shock_mgf_defective(m, k, s):
    """``E[exp(s * tau); K = k] = alpha (-T - s I)^{-1} u_k``."""
    k = _state_index(m, k)
    s = float(s)
    return float(m.alpha @ _resolvent_solve(m.T, s, m.U[:, k], "shock_mgf_defective"))


def residual_pdf(m, i, k, y):
    Q, q, _ = m.margin(i)
    k = _state_index(m, k)
    y, yc = _nonneg(y)
    val = _exp_at(Q, yc)[..., k, :] @ q
    return np.where(y >= 0, np.maximum(val, 0.0), 0.0)


def residual_cdf(m, i, k, y):
    Q, _, _ = m.margin(i)
    k = _state_index(m, k)
    y, yc = _nonneg(y)
    surv = _exp_at(Q, yc)[..., k, :].sum(axis=-1)
    return np.where(y > 0, np.clip(1.0 - surv, 0.0, 1.0), 0.0)


def residual_mgf(m, i, k, s):
    Q, q, _ = m.margin(i)
    k = _state_index(m, k)
    return float(_resolvent_solve(Q, float(s), q, "residual_mgf")[k])


def coupling_matrix(m):
    """p0 x p1**2 matrix whose column ``k * p1 + k`` is ``U[:, k]``."""
    p1 = m.p1
    P = np.zeros((m.p0, p1 * p1))
    for k in range(p1):
        P[:, k * p1 + k] = m.U[:, k]
    return P


def trivariate_density(m, t, y1, y2):
    """Joint density of (tau, R1, R2)."""
    t, y1, y2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, y1, y2)))
    ok = (t >= 0) & (y1 >= 0) & (y2 >= 0)
    t, y1, y2 = (np.where(ok, v, 0.0) for v in (t, y1, y2))
    left = exp_action_times(m.T, t, m.alpha) @ m.P
    r1 = exp_action_times(m.Q1, y1, m.q1, "right")
    r2 = exp_action_times(m.Q2, y2, m.q2, "right")
    right = (r1[..., :, None] * r2[..., None, :]).reshape(r1.shape[:-1] + (-1,))
    val = np.einsum("...j,...j->...", left, right)
    return np.where(ok, np.maximum(val, 0.0), 0.0)


def _ridge(m, z1, z2):
    """Latest shock time compatible with (z1, z2) and the residual lags."""
    u = np.minimum(z1 / m.a1, z2 / m.a2)
    # one lag is zero up to rounding; clamp so it never goes negative
    lag1 = np.maximum(z1 - m.a1 * u, 0.0)
    lag2 = np.maximum(z2 - m.a2 * u, 0.0)
    return u, np.where(np.isfinite(lag1), lag1, 0.0), np.where(np.isfinite(lag2), lag2, 0.0)


def _post_shock_generator(m, with1, with2):
    Z = np.zeros((m.p1, m.p1))
    return kron_sum(m.a1 * m.Q1 if with1 else Z, m.a2 * m.Q2 if with2 else Z)


def _van_loan_row(m, with1, with2, u):
    """``alpha @ int_0^u exp(T t) P exp(C (u - t)) dt`` as a row action on
    the Van Loan block generator, one row per entry of ``u``."""
    C = _post_shock_generator(m, with1, with2)
    p0 = m.p0
    M = np.zeros((p0 + C.shape[0],) * 2)
    M[:p0, :p0] = m.T
    M[:p0, p0:] = m.P
    M[p0:, p0:] = C
    start = np.concatenate([m.alpha, np.zeros(C.shape[0])])
    return exp_action_times(M, u, start)[..., p0:]


def joint_pdf(m, z1, z2):
    z1, z2 = np.broadcast_arrays(np.asarray(z1, dtype=float), np.asarray(z2, dtype=float))
    ok = (z1 > 0) & (z2 > 0) & np.isfinite(z1) & np.isfinite(z2)
    z1c, z2c = np.where(ok, z1, 0.0), np.where(ok, z2, 0.0)
    u, lag1, lag2 = _ridge(m, z1c, z2c)
    row = _van_loan_row(m, True, True, u)
    f1 = exp_action_times(m.Q1, lag1, m.q1, "right")
    f2 = exp_action_times(m.Q2, lag2, m.q2, "right")
    w = (f1[..., :, None] * f2[..., None, :]).reshape(f1.shape[:-1] + (-1,))
    val = np.einsum("...j,...j->...", row, w)
    return np.where(ok, np.maximum(val, 0.0), 0.0)


def joint_cdf(m, z1, z2):
    z1, z2 = np.broadcast_arrays(np.asarray(z1, dtype=float), np.asarray(z2, dtype=float))
    pos = (z1 > 0) & (z2 > 0)
    both_inf = np.isposinf(z1) & np.isposinf(z2)
    calc = pos & ~both_inf
    z1c = np.where(calc, z1, 1.0)
    z2c = np.where(calc, z2, 1.0)
    u, lag1, lag2 = _ridge(m, z1c, z2c)
    ones = np.ones(m.p1)
    S1 = np.where(np.isposinf(z1c)[..., None], 0.0, exp_action_times(m.Q1, lag1, ones, "right"))
    S2 = np.where(np.isposinf(z2c)[..., None], 0.0, exp_action_times(m.Q2, lag2, ones, "right"))
    ones = np.broadcast_to(ones, S1.shape)

    def term(with1, with2, v1, v2):
        row = _van_loan_row(m, with1, with2, u)
        w = (v1[..., :, None] * v2[..., None, :]).reshape(v1.shape[:-1] + (-1,))
        return np.einsum("...j,...j->...", row, w)

    val = (
        term(False, False, ones, ones)
        - term(True, False, S1, ones)
        - term(False, True, ones, S2)
        + term(True, True, S1, S2)
    )
    val = np.clip(val, 0.0, 1.0)
    return np.where(both_inf, 1.0, np.where(calc, val, 0.0))


def joint_mgf(m, s1, s2):
    """``E[exp(s1 X1 + s2 X2)]`` as a sum over post-shock entry states."""
    s1, s2 = float(s1), float(s2)
    shock = _resolvent_solve(m.T, m.a1 * s1 + m.a2 * s2, m.U, "joint_mgf (shock)")
    r1 = _resolvent_solve(m.Q1, s1, m.q1, "joint_mgf (margin 1)")
    r2 = _resolvent_solve(m.Q2, s2, m.q2, "joint_mgf (margin 2)")
    return float((m.alpha @ shock) @ (r1 * r2))


def mph_joint_cdf(mph, y1, y2):
    y1, y2 = np.broadcast_arrays(np.asarray(y1, dtype=float), np.asarray(y2, dtype=float))
    ok = (y1 > 0) & (y2 > 0)
    F1 = 1.0 - _exp_at(mph.S1, np.where(ok, y1, 0.0)).sum(axis=-1)
    F2 = 1.0 - _exp_at(mph.S2, np.where(ok, y2, 0.0)).sum(axis=-1)
    val = (F1 * F2) @ mph.pi
    return np.where(ok, np.clip(val, 0.0, 1.0), 0.0)


def mph_joint_pdf(mph, y1, y2):
    y1, y2 = np.broadcast_arrays(np.asarray(y1, dtype=float), np.asarray(y2, dtype=float))
    ok = (y1 >= 0) & (y2 >= 0)
    f1 = _exp_at(mph.S1, np.where(ok, y1, 0.0)) @ -mph.S1.sum(axis=1)
    f2 = _exp_at(mph.S2, np.where(ok, y2, 0.0)) @ -mph.S2.sum(axis=1)
    return np.where(ok, (f1 * f2) @ mph.pi, 0.0)


def csph_from_mph(mph, lam, a1=1.0, a2=1.0):
    """Single pre-shock state with rate ``lam`` feeding the mixture start.

    As ``lam`` grows the shock time vanishes and the result converges to the
    mixture in distribution.
    """
    if not lam > 0:
        raise DomainError(f"lam must be positive, got {lam!r}")
    return validate(
        CSPHModel(
            alpha=[1.0],
            T=[[-lam]],
            U=lam * np.asarray(mph.pi, dtype=float)[None, :],
            Q1=mph.S1,
            Q2=mph.S2,
            a1=a1,
            a2=a2,
        )
    )
