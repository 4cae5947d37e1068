"""Maximum-likelihood fitting in the reduced parameterisation.

The fitted family scales only the first margin:

    X1 = beta * (tau + R1),    X2 = tau + R2,

which is the general model with ``a1 = beta``, ``a2 = 1`` and ``Q1 / beta``
in place of Q1.  Every general model can be written this way (see
:meth:`ReducedModel.from_csph`).

Free parameters are unconstrained reals:

    [log offdiag(T) | log U | log offdiag(Q1) | log q1 | log offdiag(Q2)
     | log q2 | log beta | alpha logits]

with diagonals filled in so rows balance, so every vector maps to a valid
model.  Off-diagonal entries are read row by row, skipping the diagonal.
Alpha logits (only when alpha is estimated) use state 0 as the reference.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CSPHError, DimensionError, FitError, NumericalError, ValidationError
from .model import CSPHModel, joint_pdf, validate
from .optimize import lbfgs
from .risk import moment_set

__all__ = [
    "BivariateDataset",
    "ModelStructure",
    "ReducedModel",
    "FitOptions",
    "FitResult",
    "n_free",
    "to_model",
    "from_model",
    "log_likelihood",
    "log_density_terms",
    "gradient",
    "fit",
    "LOG_DENSITY_FLOOR",
]

LOG_DENSITY_FLOOR = -1e12
CHUNK = 1024
# exp() arguments are clipped here so that rates stay finite and positive
_LOG_RATE_BOUND = 690.0


@dataclass(frozen=True, eq=False)
class BivariateDataset:
    """Ordered nonnegative observation pairs."""

    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        x1 = np.array(self.x1, dtype=float).reshape(-1)
        x2 = np.array(self.x2, dtype=float).reshape(-1)
        if x1.shape != x2.shape:
            raise DimensionError(f"dataset columns differ in length: {x1.size} vs {x2.size}")
        for name, col in (("x1", x1), ("x2", x2)):
            bad = np.flatnonzero(~(np.isfinite(col) & (col >= 0)))
            if bad.size:
                raise ValidationError(f"{name}[{bad[0]}] = {col[bad[0]]!r} is not a finite nonnegative number")
        x1.flags.writeable = False
        x2.flags.writeable = False
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)

    def __len__(self):
        return self.x1.size

    def permuted(self, order):
        return BivariateDataset(self.x1[order], self.x2[order])


@dataclass(frozen=True)
class ModelStructure:
    p0: int
    p1: int
    alpha_mode: str = "fixed"

    def __post_init__(self):
        if self.p0 < 1 or self.p1 < 1:
            raise DimensionError(f"state counts must be positive, got p0={self.p0}, p1={self.p1}")
        if self.alpha_mode not in ("fixed", "estimated"):
            raise ValueError(f"alpha_mode must be 'fixed' or 'estimated', got {self.alpha_mode!r}")


@dataclass(frozen=True, eq=False)
class ReducedModel:
    alpha: np.ndarray
    T: np.ndarray
    U: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    beta: float

    def __post_init__(self):
        for name in ("alpha", "T", "U", "Q1", "Q2"):
            a = np.array(getattr(self, name), dtype=float)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        object.__setattr__(self, "beta", float(self.beta))
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValidationError(f"beta = {self.beta!r} must be positive and finite")

    def to_csph(self):
        return CSPHModel(
            alpha=self.alpha,
            T=self.T,
            U=self.U,
            Q1=self.Q1 / self.beta,
            Q2=self.Q2,
            a1=self.beta,
            a2=1.0,
        )

    @classmethod
    def from_csph(cls, m):
        """Rescale time by ``a2`` so the second margin carries no scaling."""
        beta = m.a1 / m.a2
        return cls(
            alpha=m.alpha,
            T=m.T / m.a2,
            U=m.U / m.a2,
            Q1=beta * m.Q1,
            Q2=m.Q2,
            beta=beta,
        )

    def to_dict(self):
        return {
            "alpha": self.alpha.tolist(),
            "T": self.T.tolist(),
            "U": self.U.tolist(),
            "Q1": self.Q1.tolist(),
            "Q2": self.Q2.tolist(),
            "beta": self.beta,
        }


def _as_csph(model):
    return model.to_csph() if isinstance(model, ReducedModel) else model


def n_free(struct):
    p0, p1 = struct.p0, struct.p1
    n = p0 * (p0 - 1) + p0 * p1 + 2 * (p1 * (p1 - 1) + p1) + 1
    return n + (p0 - 1 if struct.alpha_mode == "estimated" else 0)


def _offdiag_mask(p):
    return ~np.eye(p, dtype=bool)


def to_model(struct, theta):
    """Map a free vector to a :class:`ReducedModel` that always validates."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (n_free(struct),):
        raise DimensionError(f"expected {n_free(struct)} free parameters, got shape {theta.shape}")
    p0, p1 = struct.p0, struct.p1
    rates = np.exp(np.clip(theta, -_LOG_RATE_BOUND, _LOG_RATE_BOUND))
    pos = 0

    def take(n):
        nonlocal pos
        out = rates[pos : pos + n]
        pos += n
        return out

    def generator(p):
        G = np.zeros((p, p))
        G[_offdiag_mask(p)] = take(p * (p - 1))
        return G

    T = generator(p0)
    U = take(p0 * p1).reshape(p0, p1)
    T[np.diag_indices(p0)] = -(T.sum(axis=1) + U.sum(axis=1))
    Qs = []
    for _ in range(2):
        Q = generator(p1)
        q = take(p1)
        Q[np.diag_indices(p1)] = -(Q.sum(axis=1) + q)
        Qs.append(Q)
    beta = take(1)[0]
    if struct.alpha_mode == "estimated":
        logits = np.concatenate([[0.0], theta[pos:]])
        w = np.exp(logits - logits.max())
        alpha = w / w.sum()
    else:
        alpha = np.zeros(p0)
        alpha[0] = 1.0
    return ReducedModel(alpha=alpha, T=T, U=U, Q1=Qs[0], Q2=Qs[1], beta=beta)


def from_model(struct, model):
    """Inverse of :func:`to_model` on models with strictly positive rates.

    Zero rates map to ``log(1e-300)``.
    """
    if not isinstance(model, ReducedModel):
        model = ReducedModel.from_csph(model)
    p0, p1 = struct.p0, struct.p1
    if model.T.shape != (p0, p0) or model.U.shape != (p0, p1):
        raise DimensionError(
            f"model has p0={model.T.shape[0]}, p1={model.U.shape[1]}; structure wants {p0}, {p1}"
        )

    def log(v):
        return np.log(np.maximum(np.asarray(v, dtype=float), 1e-300))

    parts = [log(model.T[_offdiag_mask(p0)]), log(model.U.reshape(-1))]
    for Q in (model.Q1, model.Q2):
        parts += [log(Q[_offdiag_mask(p1)]), log(-Q.sum(axis=1))]
    parts.append(log([model.beta]))
    if struct.alpha_mode == "estimated":
        la = log(model.alpha)
        parts.append(la[1:] - la[0])
    elif not (model.alpha[0] == 1.0 and np.all(model.alpha[1:] == 0)):
        raise ValidationError("structure fixes alpha at the first state but the model's alpha differs")
    return np.concatenate(parts)


def _chunk_log_density(m, x1, x2):
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = joint_pdf(m, x1, x2)
        logs = np.log(dens)
    bad = ~np.isfinite(logs)
    logs[bad] = LOG_DENSITY_FLOOR
    return logs, int(bad.sum())


def log_density_terms(model, data, threads=None):
    """Per-observation log densities (floored) and the number floored."""
    m = _as_csph(model)
    n = len(data)
    bounds = [(s, min(s + CHUNK, n)) for s in range(0, n, CHUNK)]
    workers = threads or os.cpu_count() or 1

    def work(b):
        s, e = b
        return _chunk_log_density(m, data.x1[s:e], data.x2[s:e])

    if workers == 1 or len(bounds) == 1:
        # rows are evaluated independently, so one pass gives the same bits
        results = [_chunk_log_density(m, data.x1, data.x2)] if n else []
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, bounds))
    logs = np.concatenate([r[0] for r in results]) if results else np.zeros(0)
    return logs, sum(r[1] for r in results)


def log_likelihood(model, data, threads=None, return_floored=False):
    """Sum of log joint densities.

    The sum is exactly rounded (``math.fsum``), so neither the chunking, the
    thread count nor the row order changes the result.  Points with zero
    density contribute ``LOG_DENSITY_FLOOR`` each; pass ``return_floored`` to
    also get how many did.
    """
    logs, floored = log_density_terms(model, data, threads)
    value = math.fsum(logs)
    return (value, floored) if return_floored else value


def _objective(struct, data, threads):
    def f(theta):
        return -log_likelihood(to_model(struct, theta), data, threads)

    return f


def gradient(struct, theta, data, threads=None, objective=None):
    """Central-difference gradient of the log-likelihood in free coordinates,
    step ``1e-6 * (1 + |theta_j|)``."""
    theta = np.asarray(theta, dtype=float)
    f = objective or _objective(struct, data, threads)
    g = np.empty_like(theta)
    for j in range(theta.size):
        h = 1e-6 * (1.0 + abs(theta[j]))
        up, down = theta.copy(), theta.copy()
        up[j] += h
        down[j] -= h
        fu, fd = f(up), f(down)
        if not (np.isfinite(fu) and np.isfinite(fd)):
            raise NumericalError(f"gradient: non-finite log-likelihood when perturbing coordinate {j}")
        g[j] = -(fu - fd) / ((theta[j] + h) - (theta[j] - h))
    return g


@dataclass
class FitOptions:
    max_iter: int = 2000
    memory: int = 10
    gtol: float = 1e-5
    ftol: float = 1e-9
    n_starts: int = 5
    seed: int = 0
    threads: int = None
    init_spread: float = 0.5


@dataclass
class FitResult:
    model: ReducedModel
    loglik: float
    iterations: int
    converged: bool
    gradient_norm: float
    trace: list
    structure: ModelStructure
    theta: np.ndarray
    message: str = ""
    n_floored: int = 0
    starts: list = field(default_factory=list)

    def to_dict(self):
        return {
            "model": self.model.to_dict(),
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "message": self.message,
            "n_floored": self.n_floored,
            "structure": {"p0": self.structure.p0, "p1": self.structure.p1, "alpha_mode": self.structure.alpha_mode},
            "trace": [[int(i), float(v)] for i, v in self.trace],
            "starts": self.starts,
        }


def initial_point(struct, data, rng, spread=0.5):
    """Random log-rates around a common rate matched to the data scale.

    Log-rates are drawn around 0, then shifted so that the model mean of X2
    equals the sample mean; beta is then set so the mean of X1 matches too.
    """
    theta = rng.normal(0.0, spread, size=n_free(struct))
    beta_at = n_free(struct) - 1 - (struct.p0 - 1 if struct.alpha_mode == "estimated" else 0)
    theta[beta_at] = 0.0
    mom = moment_set(to_model(struct, theta).to_csph())
    mean1, mean2 = float(np.mean(data.x1)), float(np.mean(data.x2))
    if mean2 > 0:
        # multiplying every rate by c divides every time by c
        theta[:beta_at] += math.log(mom.e_x2 / mean2)
        if mean1 > 0:
            theta[beta_at] = math.log(mean1 * mom.e_x2 / (mean2 * mom.e_x1))
    return theta


def fit(data, struct, init=None, options=None):
    """Multi-start L-BFGS maximisation of the log-likelihood.

    ``init`` (a free vector) replaces the first random start.  Raises
    :class:`FitError` if no start produces a finite log-likelihood.
    """
    opts = options or FitOptions()
    if len(data) == 0:
        raise FitError("fit: dataset is empty")
    objective = _objective(struct, data, opts.threads)

    def grad(theta):
        return -gradient(struct, theta, data, opts.threads, objective)

    best, diagnostics = None, []
    for start in range(opts.n_starts):
        rng = np.random.default_rng([opts.seed, start])
        try:
            x0 = np.asarray(init, dtype=float) if (init is not None and start == 0) else initial_point(
                struct, data, rng, opts.init_spread
            )
            res = lbfgs(
                objective, grad, x0, memory=opts.memory, gtol=opts.gtol, ftol=opts.ftol, max_iter=opts.max_iter
            )
        except (CSPHError, FloatingPointError) as exc:
            diagnostics.append({"start": start, "status": "failed", "error": str(exc)})
            continue
        if not np.isfinite(res.fun):
            diagnostics.append({"start": start, "status": "failed", "error": res.message})
            continue
        diagnostics.append(
            {
                "start": start,
                "status": "converged" if res.converged else "stopped",
                "loglik": -res.fun,
                "iterations": res.iterations,
                "message": res.message,
            }
        )
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise FitError("fit: every start failed", diagnostics)
    model = to_model(struct, best.x)
    validate(model.to_csph())
    loglik, floored = log_likelihood(model, data, opts.threads, return_floored=True)
    return FitResult(
        model=model,
        loglik=loglik,
        iterations=best.iterations,
        converged=best.converged,
        gradient_norm=float(np.linalg.norm(best.grad)),
        trace=[(i, -v) for i, v in best.trace],
        structure=struct,
        theta=best.x,
        message=best.message,
        n_floored=floored,
        starts=diagnostics,
    )
