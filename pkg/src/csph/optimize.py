"""Limited-memory BFGS minimiser with a strong-Wolfe line search.

The search direction comes from the two-loop recursion over the last
``memory`` curvature pairs.  Step lengths follow the bracketing/zoom scheme
of Nocedal and Wright (Algorithms 3.5 and 3.6) with cubic interpolation.
Function values and gradients are requested separately so that trial points
rejected by the sufficient-decrease test never pay for a gradient.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["LBFGSResult", "lbfgs", "two_loop_direction"]


@dataclass
class LBFGSResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str
    trace: list = field(default_factory=list)
    n_fun: int = 0
    n_grad: int = 0


def two_loop_direction(g, s_hist, y_hist):
    """Return ``-H g`` for the implicit inverse-Hessian approximation ``H``."""
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((a, rho))
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (a, rho) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _cubic_min(a0, f0, d0, a1, f1, d1):
    """Minimiser of the cubic through two points with slopes, or None."""
    d_1 = d0 + d1 - 3 * (f0 - f1) / (a0 - a1)
    disc = d_1 * d_1 - d0 * d1
    if disc < 0:
        return None
    d_2 = np.sign(a1 - a0) * np.sqrt(disc)
    denom = d1 - d0 + 2 * d_2
    if denom == 0:
        return None
    return a1 - (a1 - a0) * (d1 + d_2 - d_1) / denom


class _LineFunction:
    """phi(a) = f(x + a p) with cached values and lazily computed slopes."""

    def __init__(self, fun, grad, x, p, counters):
        self.fun, self.grad, self.x, self.p = fun, grad, x, p
        self.counters = counters
        self.values = {}
        self.grads = {}

    def value(self, a):
        if a not in self.values:
            self.counters["fun"] += 1
            v = self.fun(self.x + a * self.p)
            self.values[a] = v if np.isfinite(v) else np.inf
        return self.values[a]

    def slope(self, a):
        if a not in self.grads:
            self.counters["grad"] += 1
            self.grads[a] = self.grad(self.x + a * self.p)
        return float(self.grads[a] @ self.p)


def _zoom(phi, lo, hi, f0, d0, c1, c2, max_evals):
    f_lo = phi.value(lo)
    for _ in range(max_evals):
        f_hi = phi.value(hi)
        trial = None
        if np.isfinite(f_hi) and hi in phi.grads and lo in phi.grads:
            trial = _cubic_min(lo, f_lo, phi.slope(lo), hi, f_hi, phi.slope(hi))
        lo_b, hi_b = min(lo, hi), max(lo, hi)
        margin = 0.1 * (hi_b - lo_b)
        if trial is None or not (lo_b + margin <= trial <= hi_b - margin):
            trial = 0.5 * (lo + hi)
        f_t = phi.value(trial)
        if f_t > f0 + c1 * trial * d0 or f_t >= f_lo:
            hi = trial
        else:
            d_t = phi.slope(trial)
            if abs(d_t) <= -c2 * d0:
                return trial
            if d_t * (hi - lo) >= 0:
                hi = lo
            lo, f_lo = trial, f_t
        if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
            break
    # settle for the best sufficient-decrease point seen
    return lo if lo > 0 and f_lo <= f0 + c1 * lo * d0 else None


def _strong_wolfe(phi, f0, d0, a_init, c1, c2, max_evals=30, a_max=1e10):
    a_prev, f_prev = 0.0, f0
    a = a_init
    for i in range(max_evals):
        f_a = phi.value(a)
        if f_a > f0 + c1 * a * d0 or (i > 0 and f_a >= f_prev):
            return _zoom(phi, a_prev, a, f0, d0, c1, c2, max_evals)
        d_a = phi.slope(a)
        if abs(d_a) <= -c2 * d0:
            return a
        if d_a >= 0:
            return _zoom(phi, a, a_prev, f0, d0, c1, c2, max_evals)
        a_prev, f_prev = a, f_a
        a = min(2 * a, a_max)
    return None


def lbfgs(fun, grad, x0, memory=10, gtol=1e-5, ftol=1e-9, max_iter=2000, c1=1e-4, c2=0.9, callback=None):
    """Minimise ``fun`` starting from ``x0``.

    Stops when the gradient 2-norm drops below ``gtol``, when an accepted
    step changes ``fun`` by less than ``ftol`` relative to its magnitude, or
    after ``max_iter`` iterations.  ``callback(iteration, x, f)`` is called
    after every accepted step.
    """
    x = np.asarray(x0, dtype=float).copy()
    counters = {"fun": 1, "grad": 1}
    f = fun(x)
    g = grad(x)
    if not np.isfinite(f):
        return LBFGSResult(x, f, g, 0, False, "non-finite objective at the start", [(0, f)], 1, 1)
    trace = [(0, float(f))]
    s_hist, y_hist = [], []
    message = "iteration limit reached"
    converged = False
    it = 0
    while it < max_iter:
        gnorm = float(np.linalg.norm(g))
        if gnorm < gtol:
            converged, message = True, "gradient norm below tolerance"
            break
        p = two_loop_direction(g, s_hist, y_hist)
        d0 = float(g @ p)
        if not d0 < 0:
            s_hist.clear()
            y_hist.clear()
            p = -g
            d0 = -gnorm * gnorm
        a_init = 1.0 if s_hist else min(1.0, 1.0 / gnorm)
        phi = _LineFunction(fun, grad, x, p, counters)
        phi.values[0.0] = f
        phi.grads[0.0] = g
        step = _strong_wolfe(phi, f, d0, a_init, c1, c2)
        if step is None and s_hist:
            # curvature memory may be stale: retry once along steepest descent
            s_hist.clear()
            y_hist.clear()
            p = -g
            d0 = -gnorm * gnorm
            phi = _LineFunction(fun, grad, x, p, counters)
            phi.values[0.0] = f
            phi.grads[0.0] = g
            step = _strong_wolfe(phi, f, d0, min(1.0, 1.0 / gnorm), c1, c2)
        if step is None:
            message = "line search failed to find an acceptable step"
            break
        x_new = x + step * p
        f_new = phi.value(step)
        g_new = phi.grads[step] if step in phi.grads else grad(x_new)
        if step not in phi.grads:
            counters["grad"] += 1
        s, y = x_new - x, g_new - g
        if s @ y > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        it += 1
        rel_change = abs(f - f_new) / max(abs(f), abs(f_new), 1.0)
        x, f, g = x_new, f_new, g_new
        trace.append((it, float(f)))
        if callback is not None:
            callback(it, x, f)
        if rel_change < ftol:
            converged, message = True, "relative objective change below tolerance"
            break
    return LBFGSResult(x, float(f), g, it, converged, message, trace, counters["fun"], counters["grad"])
