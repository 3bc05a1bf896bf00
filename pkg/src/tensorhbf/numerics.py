"""Dense complex linear-algebra kernels.

Matrices are plain 2-D ``complex128`` ndarrays and 3-way tensors are
``(I, J, P)`` ndarrays whose frontal slab ``p`` is ``T[:, :, p]``.

Unfolding convention
--------------------
For a tensor with slabs ``T[:, :, p] = A @ diag(C[p]) @ B.T``::

    unfold(T, 1) == A @ khatri_rao(C, B).T      # (I, P*J), column p*J + j
    unfold(T, 2) == B @ khatri_rao(C, A).T      # (J, P*I), column p*I + i
    unfold(T, 3) == C @ khatri_rao(B, A).T      # (P, J*I), column j*I + i

``khatri_rao(X, Y)[:, f] == np.kron(X[:, f], Y[:, f])``, so the row index
of the second argument runs fastest.
"""

from typing import NamedTuple

import numpy as np
from scipy import linalg as sla

DEFAULT_RCOND = 1e-12

# axis permutations taking (I, J, P) to the row/column order of each unfolding
_UNFOLD_AXES = {1: (0, 2, 1), 2: (1, 2, 0), 3: (2, 1, 0)}


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class SvdConvergenceError(np.linalg.LinAlgError):
    """The SVD iteration failed to converge."""

    def __init__(self, message, residual=float("inf")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class SvdResult(NamedTuple):
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray


def as_matrix(M, name="M"):
    """Return ``M`` as a finite 2-D complex128 array."""
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def _lapack_svd(M):
    try:
        return np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError:
        pass
    try:
        # gesvd is slower but more robust than the divide-and-conquer driver
        return sla.svd(M, full_matrices=False, lapack_driver="gesvd")
    except np.linalg.LinAlgError as exc:
        raise SvdConvergenceError(f"SVD of {M.shape} matrix did not converge: {exc}") from exc


def svd(M):
    """Thin SVD ``M = U @ diag(S) @ V.conj().T`` with a fixed phase gauge.

    The first entry of each column of ``V`` whose modulus exceeds
    ``1e-12`` times the column maximum is made real and positive; ``U`` is
    rotated by the same phase so the product is unchanged.

    Parameters
    ----------
    M : array_like, shape (m, n)

    Returns
    -------
    SvdResult
        ``U`` (m, r), ``S`` (r,) non-increasing, ``V`` (n, r) with
        ``r = min(m, n)``.
    """
    M = as_matrix(M)
    U, S, Vh = _lapack_svd(M)
    V = Vh.conj().T
    mags = np.abs(V)
    for f in range(V.shape[1]):
        col = mags[:, f]
        idx = np.flatnonzero(col > 1e-12 * col.max())
        if idx.size == 0:
            continue
        ph = V[idx[0], f] / col[idx[0]]
        V[:, f] *= ph.conjugate()
        U[:, f] *= ph.conjugate()
    recon = (U * S) @ V.conj().T
    scale = max(np.linalg.norm(M), np.finfo(float).tiny)
    res = np.linalg.norm(recon - M) / scale
    if not np.isfinite(res) or res > 1e-8:
        raise SvdConvergenceError("SVD reconstruction check failed", res)
    return SvdResult(U, S, V)


def pseudo_inverse(M, rcond=DEFAULT_RCOND):
    """Moore-Penrose inverse, truncating singular values below ``rcond * max(S)``."""
    if rcond < 0:
        raise ValueError("rcond must be non-negative")
    U, S, V = svd(M)
    keep = S > rcond * S[0] if S.size and S[0] > 0 else np.zeros(S.shape, bool)
    inv_s = np.zeros_like(S)
    inv_s[keep] = 1.0 / S[keep]
    return (V * inv_s) @ U.conj().T


def khatri_rao(A, B):
    """Column-wise Kronecker product, shape ``(A.rows * B.rows, cols)``."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or B.ndim != 2:
        raise DimensionError("khatri_rao expects 2-D operands")
    if A.shape[1] != B.shape[1]:
        raise DimensionError(
            f"khatri_rao column mismatch: {A.shape[1]} vs {B.shape[1]}"
        )
    return (A[:, None, :] * B[None, :, :]).reshape(A.shape[0] * B.shape[0], A.shape[1])


def unfold(T, mode):
    """Mode-``mode`` matricization (``mode`` in 1, 2, 3); see module docstring."""
    if mode not in _UNFOLD_AXES:
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    T = np.asarray(T)
    if T.ndim != 3:
        raise DimensionError(f"expected a 3-way tensor, got shape {T.shape}")
    perm = np.transpose(T, _UNFOLD_AXES[mode])
    return perm.reshape(perm.shape[0], -1)


def fold(M, mode, shape):
    """Inverse of :func:`unfold` for a tensor of the given ``(I, J, P)`` shape."""
    if mode not in _UNFOLD_AXES:
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    axes = _UNFOLD_AXES[mode]
    permuted_shape = tuple(shape[a] for a in axes)
    M = np.asarray(M)
    if M.size != np.prod(shape):
        raise DimensionError(f"cannot fold {M.shape} into {tuple(shape)}")
    return np.transpose(M.reshape(permuted_shape), np.argsort(axes))


def least_squares(A, Y):
    """Minimum-norm minimizer of ``||A @ X - Y||_F``.

    Uses LAPACK ``gelsd`` (SVD based), so rank-deficient ``A`` is handled
    without forming normal equations. ``Y`` may be 1-D.
    """
    A = as_matrix(A, "A")
    Y = np.asarray(Y, dtype=np.complex128)
    if Y.shape[0] != A.shape[0]:
        raise DimensionError(f"row mismatch: A has {A.shape[0]}, Y has {Y.shape[0]}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("Y contains non-finite entries")
    X, *_ = sla.lstsq(A, Y, cond=None, lapack_driver="gelsd", check_finite=False)
    return X
