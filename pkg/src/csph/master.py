"""Tilted, size-biased, tail-restricted moments of (tau, R1, R2).

A query fixes powers ``n``, exponential tilts ``theta`` and lower thresholds
``y`` for the shock time and the two residuals and asks for

    E[ tau^n0 e^{-theta0 tau} R1^n1 e^{-theta1 R1} R2^n2 e^{-theta2 R2};
       tau > y0, R1 > y1, R2 > y2 ].

Powers are handled with block upper-bidiagonal generators: the corner block
of ``exp(x * augmented)`` equals ``exp((M - theta I) x) x**N / N!``, which
turns every moment into an exponential and a resolvent of a bigger matrix.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import DimensionError, DomainError, SingularMatrixError
from .linalg import mat_exp, solve_linear, spectral_abscissa

__all__ = [
    "AugmentedGenerator",
    "MasterQuery",
    "augment_generator",
    "augment_initial",
    "augment_exit",
    "selector_down",
    "selector_left",
    "sb_esscher_numerator",
    "master_moment",
    "sb_esscher_density",
]


@dataclass(frozen=True, eq=False)
class AugmentedGenerator:
    base: np.ndarray
    order: int
    theta: float
    assembled: np.ndarray

    @property
    def block_size(self):
        return self.base.shape[0]


@dataclass(frozen=True)
class MasterQuery:
    """Powers ``n``, tilts ``theta`` and thresholds ``y``, each ordered as
    (shock, residual 1, residual 2)."""

    n: tuple = (0, 0, 0)
    theta: tuple = (0.0, 0.0, 0.0)
    y: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        theta = tuple(float(v) for v in self.theta)
        y = tuple(float(v) for v in self.y)
        if len(n) != 3 or len(theta) != 3 or len(y) != 3:
            raise DimensionError("MasterQuery: n, theta and y must each have three entries")
        if any(v < 0 for v in n) or any(v != w for v, w in zip(n, self.n)):
            raise DomainError(f"MasterQuery: powers must be nonnegative integers, got {self.n}")
        if any(not (v >= 0 and np.isfinite(v)) for v in y):
            raise DomainError(f"MasterQuery: thresholds must be finite and nonnegative, got {self.y}")
        if not all(np.isfinite(theta)):
            raise DomainError(f"MasterQuery: tilts must be finite, got {self.theta}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "y", y)


def augment_generator(M, N, theta=0.0):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"augment_generator: M must be square, got {M.shape}")
    if N < 0:
        raise DomainError(f"augment_generator: N must be nonnegative, got {N}")
    p = M.shape[0]
    shifted = M - theta * np.eye(p)
    big = np.zeros(((N + 1) * p, (N + 1) * p))
    for b in range(N + 1):
        big[b * p : (b + 1) * p, b * p : (b + 1) * p] = shifted
        if b < N:
            big[b * p : (b + 1) * p, (b + 1) * p : (b + 2) * p] = np.eye(p)
    return AugmentedGenerator(base=M, order=int(N), theta=float(theta), assembled=big)


def augment_initial(alpha, N):
    alpha = np.asarray(alpha, dtype=float)
    return np.concatenate([alpha, np.zeros(N * alpha.shape[0])])


def augment_exit(q, N):
    q = np.asarray(q, dtype=float)
    return np.concatenate([np.zeros(N * q.shape[0]), q])


def selector_down(N, p):
    """``(N+1)p x p`` matrix with the identity in its last block."""
    S = np.zeros(((N + 1) * p, p))
    S[N * p :, :] = np.eye(p)
    return S


def selector_left(N, p):
    """``p x (N+1)p`` matrix with the identity in its first block."""
    S = np.zeros((p, (N + 1) * p))
    S[:, :p] = np.eye(p)
    return S


def _tail_resolvent(aug, y, rhs, component):
    """``exp(A y) (-A)^{-1} rhs`` for the augmented generator ``A``."""
    A = aug.assembled
    if spectral_abscissa(aug.base) - aug.theta >= 0:
        raise DomainError(
            f"master_moment: {component} integral diverges for tilt {aug.theta:g} "
            f"(needs tilt > {spectral_abscissa(aug.base):.6g})"
        )
    try:
        x = solve_linear(-A, rhs)
    except SingularMatrixError as exc:
        raise DomainError(
            f"master_moment: augmented {component} generator is singular at tilt {aug.theta:g}"
        ) from exc
    return mat_exp(A * y) @ x if y > 0 else x


def _as_query(n, theta, y):
    if isinstance(n, MasterQuery):
        return n
    return MasterQuery(n=n, theta=theta, y=y)


def master_moment(m, n=(0, 0, 0), theta=(0.0, 0.0, 0.0), y=(0.0, 0.0, 0.0)):
    """Evaluate a :class:`MasterQuery` (or the raw triples) on model ``m``.

    Raises DomainError naming the shock or residual component whose tilted
    integral diverges.
    """
    qry = _as_query(n, theta, y)
    (n0, n1, n2), (t0, t1, t2), (y0, y1, y2) = qry.n, qry.theta, qry.y
    p0, p1 = m.p0, m.p1

    shock = augment_generator(m.T, n0, t0)
    # row vector: solve the transposed system so only one solve is needed
    if spectral_abscissa(m.T) - t0 >= 0:
        raise DomainError(
            f"master_moment: shock integral diverges for tilt {t0:g} "
            f"(needs tilt > {spectral_abscissa(m.T):.6g})"
        )
    start = augment_initial(m.alpha, n0)
    if y0 > 0:
        start = start @ mat_exp(shock.assembled * y0)
    try:
        row = solve_linear(-shock.assembled.T, start)
    except SingularMatrixError as exc:
        raise DomainError(f"master_moment: augmented shock generator is singular at tilt {t0:g}") from exc
    left = row[n0 * p0 :] @ m.P

    factors = []
    for label, Q, q, N, th, yy in (
        ("residual 1", m.Q1, m.q1, n1, t1, y1),
        ("residual 2", m.Q2, m.q2, n2, t2, y2),
    ):
        aug = augment_generator(Q, N, th)
        factors.append(_tail_resolvent(aug, yy, augment_exit(q, N), label)[:p1])
    right = np.kron(factors[0], factors[1])
    return float(factorial(n0) * factorial(n1) * factorial(n2) * (left @ right))


def sb_esscher_numerator(m, n, theta, x):
    """``x0^n0 x1^n1 x2^n2 exp(-theta . x) g(x)`` through augmented blocks,
    where ``g`` is the joint density of (tau, R1, R2)."""
    (n0, n1, n2) = (int(v) for v in n)
    (t0, t1, t2) = (float(v) for v in theta)
    (x0, x1, x2) = (float(v) for v in x)
    if min(x0, x1, x2) < 0:
        return 0.0
    p0, p1 = m.p0, m.p1
    shock = augment_generator(m.T, n0, t0).assembled
    left = augment_initial(m.alpha, n0) @ mat_exp(shock * x0)
    left = left[n0 * p0 :] @ m.P
    factors = []
    for Q, q, N, th, xx in ((m.Q1, m.q1, n1, t1, x1), (m.Q2, m.q2, n2, t2, x2)):
        A = augment_generator(Q, N, th).assembled
        factors.append((mat_exp(A * xx) @ augment_exit(q, N))[:p1])
    right = np.kron(factors[0], factors[1])
    return float(factorial(n0) * factorial(n1) * factorial(n2) * (left @ right))


def sb_esscher_density(m, n, theta, x):
    """Numerator normalised by its total mass, a proper density in x."""
    denom = master_moment(m, n, theta, (0.0, 0.0, 0.0))
    if not (np.isfinite(denom) and denom > 0):
        raise DomainError(f"sb_esscher_density: normalising constant {denom!r} is not positive")
    return sb_esscher_numerator(m, n, theta, x) / denom
