"""Exact path simulation by exponential holding times and jump-chain steps.

Draws come from numpy's Philox counter-based generator.  A dataset of ``n``
records is cut into consecutive blocks of ``BLOCK`` records and block ``b``
uses the stream seeded with ``SeedSequence([seed, b])``, so the output is a
pure function of ``(model, n, seed)`` and blocks can be produced in any order.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "BLOCK",
    "SampleRecord",
    "make_rng",
    "sample_ctmc_exit",
    "sample_csph",
    "sample_dataset",
    "write_csv",
]

BLOCK = 16384


@dataclass(frozen=True, eq=False)
class SampleRecord:
    """Observations plus the latent path summary that produced them.

    Fields are scalars for a single draw and equal-length arrays otherwise.
    """

    x1: np.ndarray
    x2: np.ndarray
    tau12: np.ndarray
    k: np.ndarray
    resid1: np.ndarray
    resid2: np.ndarray

    def __len__(self):
        return np.size(self.x1)


def make_rng(seed, block=0):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block)])))


def _jump_table(T, exits):
    """Cumulative jump probabilities over [within-states | exits], per row."""
    T = np.asarray(T, dtype=float)
    exits = np.asarray(exits, dtype=float)
    if exits.ndim == 1:
        exits = exits[:, None]
    rates = -np.diag(T)
    off = T - np.diag(np.diag(T))
    dead = np.flatnonzero(~(rates > 0))
    if dead.size:
        raise ValidationError(f"state {dead[0]} has total rate {rates[dead[0]]!r}; it is never left")
    probs = np.hstack([off, exits]) / rates[:, None]
    cum = np.cumsum(probs, axis=1)
    cum[:, -1] = np.inf  # guard against rounding in the last bin
    return rates, cum


def sample_ctmc_exit(T, exits, init, rng, size=None):
    """Run the chain with subintensity ``T`` until it leaves through one of
    the columns of ``exits``.

    ``init`` is either a probability vector or an integer array of starting
    states (one per draw).  Returns ``(exit_time, exit_column)``.
    """
    rates, cum = _jump_table(T, exits)
    p = rates.shape[0]
    init = np.asarray(init)
    if np.issubdtype(init.dtype, np.integer):
        state = init.astype(np.intp).copy()
    else:
        n = 1 if size is None else int(size)
        state = rng.choice(p, size=n, p=init / init.sum())
    time = np.zeros(state.shape[0])
    exit_col = np.full(state.shape[0], -1, dtype=np.intp)
    active = np.arange(state.shape[0])
    while active.size:
        s = state[active]
        time[active] += rng.exponential(size=active.size) / rates[s]
        u = rng.random(size=active.size)
        nxt = (u[:, None] >= cum[s]).sum(axis=1)
        leaving = nxt >= p
        exit_col[active[leaving]] = nxt[leaving] - p
        state[active[~leaving]] = nxt[~leaving]
        active = active[~leaving]
    if size is None and not np.issubdtype(init.dtype, np.integer):
        return float(time[0]), int(exit_col[0])
    return time, exit_col


def _sample_block(m, n, rng):
    tau, k = sample_ctmc_exit(m.T, m.U, m.alpha, rng, size=n)
    r1, _ = sample_ctmc_exit(m.Q1, m.q1, k, rng)
    r2, _ = sample_ctmc_exit(m.Q2, m.q2, k, rng)
    return tau, k, r1, r2


def _assemble(m, tau, k, r1, r2):
    return SampleRecord(
        x1=m.a1 * tau + r1,
        x2=m.a2 * tau + r2,
        tau12=tau,
        k=k,
        resid1=r1,
        resid2=r2,
    )


def sample_csph(m, rng, size=None):
    """Draw from the model with a caller-supplied generator."""
    n = 1 if size is None else int(size)
    rec = _assemble(m, *_sample_block(m, n, rng))
    if size is None:
        return SampleRecord(*(v[0].item() for v in vars(rec).values()))
    return rec


def sample_dataset(m, n, seed):
    """``n`` independent records, reproducible from ``seed``."""
    n = int(n)
    if n < 1:
        raise ValueError(f"sample_dataset: n must be at least 1, got {n}")
    parts = []
    for b, start in enumerate(range(0, n, BLOCK)):
        size = min(BLOCK, n - start)
        parts.append(_sample_block(m, size, make_rng(seed, b)))
    tau, k, r1, r2 = (np.concatenate(col) for col in zip(*parts))
    return _assemble(m, tau, k, r1, r2)


def write_csv(path_or_file, records, latent=False):
    """Write ``x1,x2`` (and the latent columns if requested) with 17
    significant digits."""
    cols = ["x1", "x2"] + (["tau12", "k", "resid1", "resid2"] if latent else [])
    rows = zip(*(np.atleast_1d(getattr(records, c)) for c in cols))

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([str(int(v)) if c == "k" else format(float(v), ".17g") for c, v in zip(cols, row)])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)
