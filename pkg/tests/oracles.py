"""Reference computations that share no code with the package.

Matrix exponentials here come from scipy or a plain power series, integrals
from scipy's adaptive quadrature or a hand-written adaptive Simpson rule, and
densities are written in their literal conditioning/mixture forms.
"""

import math
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.linalg import expm


def expm_series(A, tol=0.0):
    """exp(A) by the Taylor series summed until the terms stop changing the
    sum, after halving A until its norm is below 1/2."""
    A = np.asarray(A, dtype=float)
    norm = np.abs(A).sum(axis=0).max()
    s = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0 else 0
    B = A / 2.0**s
    total = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, 200):
        term = term @ B / k
        new = total + term
        if np.array_equal(new, total):
            break
        total = new
    for _ in range(s):
        total = total @ total
    return total


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=50):
    """Adaptive Simpson quadrature for scalar- or array-valued ``f``."""

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        err = np.max(np.abs(left + right - whole))
        if depth <= 0 or err <= 15 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(a, m, fa, flm, fm, left, tol / 2, depth - 1) + recurse(
            m, b, fm, frm, fb, right, tol / 2, depth - 1
        )

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


class LiteralModel:
    """Closed forms of the model written straight from the construction."""

    FAR = 1000.0

    def __init__(self, m):
        self.alpha = np.array(m.alpha)
        self.T = np.array(m.T)
        self.U = np.array(m.U)
        self.Q = (np.array(m.Q1), np.array(m.Q2))
        self.q = tuple(-Q.sum(axis=1) for Q in self.Q)
        self.a = (m.a1, m.a2)
        self.p1 = self.U.shape[1]
        self._shock = lru_cache(maxsize=None)(self._shock_row)
        self._res = lru_cache(maxsize=None)(self._res_vec)
        self._shock_tuple = lru_cache(maxsize=None)(lambda t: tuple(self._shock(t).tolist()))
        self._res_tuple = lru_cache(maxsize=None)(lambda i, y: tuple(self._res(i, y, "pdf").tolist()))

    def _shock_row(self, t):
        return self.alpha @ expm(self.T * t) @ self.U

    def _res_vec(self, i, y, kind):
        E = expm(self.Q[i] * y)
        return E @ self.q[i] if kind == "pdf" else 1.0 - E.sum(axis=1)

    def shock_defective(self, t):
        """Vector over k of the defective shock densities at t."""
        return self._shock(float(t))

    def residual_pdf(self, i, y):
        return self._res(i, float(y), "pdf")

    def residual_cdf(self, i, y):
        return self._res(i, float(y), "cdf")

    def trivariate(self, t, y1, y2):
        """Mixture form: sum_k f_k(t) r1_k(y1) r2_k(y2)."""
        # plain floats: this sits in the innermost loop of the nested quadrature
        f = self._shock_tuple(float(t))
        r1 = self._res_tuple(0, float(y1))
        r2 = self._res_tuple(1, float(y2))
        return sum(a * b * c for a, b, c in zip(f, r1, r2))

    def ridge(self, z1, z2):
        return min(z1 / self.a[0], z2 / self.a[1])

    def joint_pdf(self, z1, z2, epsabs=1e-13, epsrel=1e-11):
        u = self.ridge(z1, z2)

        def g(t):
            return self.trivariate(t, z1 - self.a[0] * t, z2 - self.a[1] * t)

        val, _ = integrate.quad(g, 0.0, u, epsabs=epsabs, epsrel=epsrel, limit=200)
        return val

    def joint_cdf(self, z1, z2, tol=1e-11):
        u = self.ridge(z1, z2)

        def h(t):
            F1 = self.residual_cdf(0, max(z1 - self.a[0] * t, 0.0))
            F2 = self.residual_cdf(1, max(z2 - self.a[1] * t, 0.0))
            return float(np.sum(self.shock_defective(t) * F1 * F2))

        return float(adaptive_simpson(h, 0.0, u, tol=tol))

    def marginal_mean(self, i):
        """E[X_i] by quadrature of the survival function tail pieces."""
        tau = integrate.quad(lambda t: t * self.shock_defective(t).sum(), 0, np.inf, limit=200)[0]
        res = integrate.quad_vec(lambda y: y * self.residual_pdf(i, y), 0, np.inf)[0]
        return self.a[i] * tau + float(self._entry_probs() @ res)

    def _entry_probs(self):
        return self.alpha @ np.linalg.solve(-self.T, self.U)

    def tail_moment(self, n, theta, y, epsrel=1e-12):
        """E[tau^n0 e^{-th0 tau} R1^n1 e^{-th1 R1} R2^n2 e^{-th2 R2}; box].

        The integrand over the tail box is the literal weighted joint density
        g; because g is a finite sum of products in (t, y1, y2), Fubini turns
        the 3-D integral into three 1-D adaptive integrals of vectors.  Each
        range is cut at ``FAR`` past its threshold, where the densities are
        below 1e-100, so negative tilts never meet inf * 0.
        """
        (n0, n1, n2), (t0, t1, t2), (y0, y1, y2) = n, theta, y
        far = self.FAR
        shock = integrate.quad_vec(
            lambda t: t**n0 * np.exp(-t0 * t) * self.shock_defective(t), y0, y0 + far, epsrel=epsrel, epsabs=0
        )[0]
        r1 = integrate.quad_vec(
            lambda s: s**n1 * np.exp(-t1 * s) * self.residual_pdf(0, s), y1, y1 + far, epsrel=epsrel, epsabs=0
        )[0]
        r2 = integrate.quad_vec(
            lambda s: s**n2 * np.exp(-t2 * s) * self.residual_pdf(1, s), y2, y2 + far, epsrel=epsrel, epsabs=0
        )[0]
        return float(np.sum(shock * r1 * r2))

    def tail_moment_nested(self, n, theta, y, upper, epsrel=1e-8):
        """Same quantity by a genuinely nested 3-D quadrature of the literal
        integrand on a truncated box (slow; for spot checks)."""
        (n0, n1, n2), (t0, t1, t2), (y0, y1, y2) = n, theta, y

        def f(s2, s1, t):
            w = t**n0 * s1**n1 * s2**n2 * math.exp(-t0 * t - t1 * s1 - t2 * s2)
            return w * self.trivariate(t, s1, s2)

        val, _ = integrate.tplquad(
            f, y0, upper[0], y1, upper[1], y2, upper[2], epsabs=1e-12, epsrel=epsrel
        )
        return val
