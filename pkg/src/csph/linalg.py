"""Dense matrix kernels: exponential, Kronecker algebra, Van Loan integrals,
pivoted linear solves and the spectral abscissa.

Every function accepts plain nested sequences or numpy arrays.  ``mat_exp``,
``solve_linear`` and ``van_loan_integral`` are vectorised over leading batch
axes so that thousands of small exponentials (one per observation in a
likelihood) cost a handful of numpy calls instead of a Python loop.  Each
slice of a batch is processed independently, so the value for one matrix never
depends on what else is in the batch.
"""

import numpy as np

from .errors import DimensionError, DomainError, NumericalError, SingularMatrixError

__all__ = [
    "mat_exp",
    "kron_product",
    "kron_sum",
    "van_loan_integral",
    "mat_exp_times",
    "exp_action_times",
    "solve_linear",
    "spectral_abscissa",
    "PIVOT_TOL",
]

# Relative pivot threshold: |pivot| < PIVOT_TOL * ||A||_inf means singular.
PIVOT_TOL = 1e-12

# Degree-13 Pade coefficients and the 1-norm bound below which the unscaled
# approximant is accurate to double precision (Higham, 2005).
_PADE13 = np.array(
    [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ]
)
_THETA13 = 5.371920351148152


def _as_matrix_stack(A, name, square=True):
    A = np.asarray(A, dtype=float)
    if A.ndim < 2:
        raise DimensionError(f"{name}: expected a matrix, got shape {A.shape}")
    if square and A.shape[-1] != A.shape[-2]:
        raise DimensionError(f"{name}: matrix must be square, got shape {A.shape[-2:]}")
    if A.shape[-1] == 0 or A.shape[-2] == 0:
        raise DimensionError(f"{name}: empty matrix")
    return A


def _lu_solve(A, B):
    """Gaussian elimination with partial pivoting on stacks.

    ``A`` has shape (b, n, n) and ``B`` shape (b, n, m).  Returns X with
    A @ X = B slice by slice.  Raises SingularMatrixError if any pivot falls
    below PIVOT_TOL * ||A||_inf of its own slice.
    """
    nb, n, _ = A.shape
    m = B.shape[2]
    # batch-last layout: every elementary operation acts on contiguous
    # length-nb vectors
    W = np.empty((n, n + m, nb))
    W[:, :n, :] = np.moveaxis(A, 0, -1)
    W[:, n:, :] = np.moveaxis(B, 0, -1)
    scale = np.abs(W[:, :n, :]).sum(axis=1).max(axis=0)
    cols = np.arange(nb)
    for j in range(n):
        p = j + np.argmax(np.abs(W[j:, j, :]), axis=0)
        if (p != j).any():
            row_j = W[j].copy()
            W[j] = W[p, :, cols].T
            W[p, :, cols] = row_j.T
        piv = W[j, j, :]
        bad = ~(np.abs(piv) >= PIVOT_TOL * scale)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise SingularMatrixError(
                f"pivot {piv[k]:.3e} in column {j} is below "
                f"{PIVOT_TOL:g} * ||A||_inf = {PIVOT_TOL * scale[k]:.3e}"
                + (f" (batch item {k})" if nb > 1 else "")
            )
        if j + 1 < n:
            f = W[j + 1 :, j, :] / piv
            W[j + 1 :, j:, :] -= f[:, None, :] * W[j, None, j:, :]
    X = np.empty((n, m, nb))
    for j in range(n - 1, -1, -1):
        acc = W[j, n:, :] - (W[j, j + 1 : n, None, :] * X[j + 1 :]).sum(axis=0)
        X[j] = acc / W[j, j, :]
    return np.moveaxis(X, -1, 0)


def solve_linear(A, B):
    """Solve ``A X = B`` by LU factorisation with partial pivoting.

    Parameters
    ----------
    A : array_like, shape (..., n, n)
    B : array_like, shape (..., n) or (..., n, m)

    Returns
    -------
    ndarray with the shape of ``B``.

    Raises
    ------
    SingularMatrixError
        If a pivot is smaller than ``1e-12 * ||A||_inf``.
    """
    A = _as_matrix_stack(A, "solve_linear")
    B = np.asarray(B, dtype=float)
    n = A.shape[-1]
    vector_rhs = B.ndim == 1 or B.ndim == A.ndim - 1
    Bm = B[..., None] if vector_rhs else B
    if Bm.shape[-2] != n:
        raise DimensionError(f"solve_linear: A is {n}x{n} but B has {Bm.shape[-2]} rows")
    batch = np.broadcast_shapes(A.shape[:-2], Bm.shape[:-2])
    Ab = np.broadcast_to(A, batch + A.shape[-2:]).reshape(-1, n, n)
    Bb = np.broadcast_to(Bm, batch + Bm.shape[-2:]).reshape(-1, n, Bm.shape[-1])
    X = _lu_solve(Ab, Bb).reshape(batch + Bm.shape[-2:])
    return X[..., 0] if vector_rhs else X


# Rows give the weights on (A2, A4, A6) for the four polynomial pieces of the
# approximant; the identity terms b1 and b0 are added on the diagonal.
_PADE13_MIX = np.array(
    [
        [_PADE13[9], _PADE13[11], _PADE13[13]],
        [_PADE13[3], _PADE13[5], _PADE13[7]],
        [_PADE13[8], _PADE13[10], _PADE13[12]],
        [_PADE13[2], _PADE13[4], _PADE13[6]],
    ]
)


def _pade13(A):
    """Evaluate the [13/13] Pade approximant of exp on a (b, n, n) stack."""
    n = A.shape[-1]
    diag = (slice(None), np.arange(n), np.arange(n))
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    powers = np.stack([A2, A4, A6]).reshape(3, -1)
    W1, W2, Z1, Z2 = (_PADE13_MIX @ powers).reshape((4,) + A.shape)
    inner = A6 @ W1
    inner += W2
    inner[diag] += _PADE13[1]
    U = A @ inner
    V = A6 @ Z1
    V += Z2
    V[diag] += _PADE13[0]
    try:
        return _lu_solve(V - U, V + U)
    except SingularMatrixError as exc:
        raise NumericalError(f"mat_exp: Pade denominator is singular ({exc})") from exc


def mat_exp(A):
    """Matrix exponential by degree-13 Pade approximation with scaling and squaring.

    The scaling exponent ``s`` is chosen per matrix from its 1-norm so that
    ``||A / 2**s||_1 <= 5.37``; the approximant is then squared ``s`` times.
    Leading axes are treated as a batch.

    Raises
    ------
    DimensionError
        If the trailing two axes are not square.
    NumericalError
        If the input is not finite or the result overflows.
    """
    A = _as_matrix_stack(A, "mat_exp")
    if not np.all(np.isfinite(A)):
        raise NumericalError("mat_exp: input contains non-finite entries")
    shape = A.shape
    n = shape[-1]
    X = A.reshape(-1, n, n)
    norms = np.abs(X).sum(axis=1).max(axis=1)
    with np.errstate(divide="ignore"):
        s = np.ceil(np.log2(norms / _THETA13))
    s = np.maximum(s, 0).astype(int)
    # order by decreasing s so each squaring round acts on a leading slice
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    E = _pade13(X[order] * np.exp2(-s_sorted)[:, None, None])
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(int(s_sorted[0]) if s_sorted.size else 0):
            k = int(np.searchsorted(-s_sorted, -j, side="left"))
            E[:k] = E[:k] @ E[:k]
    out = np.empty_like(E)
    out[order] = E
    if not np.all(np.isfinite(out)):
        raise NumericalError("mat_exp: result overflowed")
    return out.reshape(shape)


# Remainder steps satisfy ||M r||_1 <= _STEP_NORM; the degree-12 Taylor
# polynomial then has truncation error below 0.25**13 / 13! ~ 2e-18.
_STEP_NORM = 0.25
_TAYLOR12 = 1.0 / np.array([float(np.prod(np.arange(1, k + 1))) for k in range(13)])


def _taylor12(A):
    """Degree-12 Taylor polynomial of exp on a stack, Paterson-Stockmeyer form."""
    n = A.shape[-1]
    eye = np.eye(n)
    A2 = A @ A
    A3 = A2 @ A
    A4 = A2 @ A2
    c = _TAYLOR12

    def block(j):
        return c[4 * j] * eye + c[4 * j + 1] * A + c[4 * j + 2] * A2 + c[4 * j + 3] * A3

    P = block(2) + c[12] * A4
    P = block(1) + A4 @ P
    return block(0) + A4 @ P


def mat_exp_times(M, times):
    """``exp(M t)`` for one square matrix at many nonnegative times.

    Each time is split as ``t = K h + r`` with ``||M h||_1 = 0.25``.  The
    factors ``exp(M h 2**j)`` come from one :func:`mat_exp` call followed by
    repeated squaring and are shared by all times; the remainder uses a
    degree-12 Taylor polynomial.  The value at one time never depends on the
    other times in the call.  Returns shape ``times.shape + M.shape``.
    """
    M = _as_matrix_stack(M, "mat_exp_times")
    if M.ndim != 2:
        raise DimensionError("mat_exp_times: expected a single matrix")
    if not np.all(np.isfinite(M)):
        raise NumericalError("mat_exp_times: input contains non-finite entries")
    t = np.asarray(times, dtype=float)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise DomainError("mat_exp_times: times must be finite and nonnegative")
    n = M.shape[0]
    flat = t.reshape(-1)
    norm = np.abs(M).sum(axis=0).max()
    if norm == 0:
        return np.broadcast_to(np.eye(n), t.shape + (n, n)).copy()
    h = _STEP_NORM / norm
    steps = np.floor(flat / h)
    if steps.size and steps.max() >= 2.0**52:
        return mat_exp(t[..., None, None] * M)
    steps = steps.astype(np.int64)
    X = _taylor12((flat - steps * h)[:, None, None] * M)
    E = mat_exp(M * h)
    remaining = steps
    while remaining.any():
        odd = (remaining & 1).astype(bool)
        if odd.any():
            X[odd] = X[odd] @ E
        remaining = remaining >> 1
        if remaining.any():
            E = E @ E
    if not np.all(np.isfinite(X)):
        raise NumericalError("mat_exp_times: result overflowed")
    return X.reshape(t.shape + (n, n))


def _rows_times(V, E):
    """``V @ E`` for a stack of row vectors.

    A single row would be dispatched to a matrix-vector kernel whose rounding
    differs from the matrix-matrix one, so it is padded to two rows; that keeps
    every row's bits independent of how many companions it has.
    """
    if V.shape[0] == 1:
        return (np.concatenate([V, V]) @ E)[:1]
    return V @ E


def exp_action_times(M, times, v, side="left"):
    """``v @ exp(M t)`` (``side="left"``) or ``exp(M t) @ v`` (``"right"``)
    at many nonnegative times, without forming the exponentials.

    Uses the same ``t = K h + r`` split as :func:`mat_exp_times`: a Taylor
    polynomial of degree 12 applied to ``v`` for the remainder, then the
    shared factors ``exp(M h 2**j)`` for the set bits of ``K``.  Every row is
    multiplied by the same sequence of full-stack products, so its bits do not
    depend on the other times.  Returns shape
    ``times.shape + (n,)``.
    """
    M = _as_matrix_stack(M, "exp_action_times")
    if M.ndim != 2:
        raise DimensionError("exp_action_times: expected a single matrix")
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if side == "right":
        M = M.T
    n = M.shape[0]
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise DimensionError(f"exp_action_times: vector has shape {v.shape}, matrix is {n}x{n}")
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(v))):
        raise NumericalError("exp_action_times: input contains non-finite entries")
    t = np.asarray(times, dtype=float)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise DomainError("exp_action_times: times must be finite and nonnegative")
    flat = t.reshape(-1)
    norm = np.abs(M).sum(axis=0).max()
    if norm == 0:
        return np.broadcast_to(v, t.shape + (n,)).copy()
    h = _STEP_NORM / norm
    steps = np.floor(flat / h)
    if steps.size and steps.max() >= 2.0**52:
        return np.einsum("j,...jk->...k", v, mat_exp(t[..., None, None] * M))
    steps = steps.astype(np.int64)
    # per-row scalars are expanded to full rows once: broadcasting a column
    # across short rows is several times slower than same-shape arithmetic
    rem = np.repeat(flat - steps * h, n).reshape(-1, n)
    term = np.broadcast_to(v, (flat.size, n)).copy()
    acc = term.copy()
    for k in range(1, 13):
        term = _rows_times(term, M)
        term *= rem
        term /= k
        acc += term
    # ||M h|| = 0.25, where the degree-12 Taylor polynomial is already exact
    E = _taylor12(M * h)
    top = int(steps.max()) if steps.size else 0
    for j in range(top.bit_length()):
        if j:
            E = E @ E
        bit = np.repeat(((steps >> j) & 1).astype(float), n).reshape(-1, n)
        # exact select: each row is multiplied by 0 or 1 on both sides
        acc = acc * (1.0 - bit) + _rows_times(acc, E) * bit
    if not np.all(np.isfinite(acc)):
        raise NumericalError("exp_action_times: result overflowed")
    return acc.reshape(t.shape + (n,))


def kron_product(A, B):
    """Kronecker product ``A (x) B``; vectors are treated as columns."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim > 2 or B.ndim > 2:
        raise DimensionError("kron_product: inputs must be vectors or matrices")
    return np.kron(A, B)


def kron_sum(A, B):
    """Kronecker sum ``A (+) B = A (x) I + I (x) B``."""
    A = _as_matrix_stack(A, "kron_sum")
    B = _as_matrix_stack(B, "kron_sum")
    if A.ndim != 2 or B.ndim != 2:
        raise DimensionError("kron_sum: inputs must be 2-D")
    return np.kron(A, np.eye(B.shape[0])) + np.kron(np.eye(A.shape[0]), B)


def van_loan_integral(A, B, C, u):
    """Return ``int_0^u exp(A t) B exp(C (u - t)) dt``.

    Computed as the upper-right block of ``exp([[A, B], [0, C]] u)``.  ``u``
    may be a scalar or an array of times, in which case the result has shape
    ``u.shape + B.shape``.
    """
    A = _as_matrix_stack(A, "van_loan_integral")
    C = _as_matrix_stack(C, "van_loan_integral")
    B = np.asarray(B, dtype=float)
    p, q = A.shape[0], C.shape[0]
    if A.ndim != 2 or C.ndim != 2 or B.shape != (p, q):
        raise DimensionError(
            f"van_loan_integral: A {A.shape}, B {B.shape}, C {C.shape} are not conformable"
        )
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise DomainError("van_loan_integral: u must be finite and nonnegative")
    M = np.zeros((p + q, p + q))
    M[:p, :p] = A
    M[:p, p:] = B
    M[p:, p:] = C
    return mat_exp_times(M, u)[..., :p, p:]


def spectral_abscissa(A):
    """Largest real part among the eigenvalues of ``A``.

    Eigenvalues come from LAPACK's Hessenberg reduction followed by shifted QR.
    """
    A = _as_matrix_stack(A, "spectral_abscissa")
    if A.ndim != 2:
        raise DimensionError("spectral_abscissa: expected a single matrix")
    if not np.all(np.isfinite(A)):
        raise NumericalError("spectral_abscissa: input contains non-finite entries")
    try:
        eig = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"spectral_abscissa: QR iteration did not converge ({exc})") from exc
    return float(np.max(eig.real))
