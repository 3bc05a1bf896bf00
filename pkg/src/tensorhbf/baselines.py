"""Codebook (SOMP) and unit-modulus (phase extraction) hybrid baselines."""

from dataclasses import dataclass

import numpy as np

from .hybrid import PRECODER, HybridBeamformer, band_errors, normalize_power
from .numerics import pseudo_inverse


@dataclass(frozen=True)
class Codebook:
    """Unit-modulus dictionary with one candidate analog beam per column.

    DFT columns are left unnormalized (entries of modulus one, column norm
    ``sqrt(N)``).
    """

    columns: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=np.complex128)
        if cols.ndim != 2:
            raise ValueError("codebook columns must be a 2-D matrix")
        if np.max(np.abs(np.abs(cols) - 1.0)) > 1e-12:
            raise ValueError("codebook entries must have unit modulus")
        object.__setattr__(self, "columns", cols)

    @property
    def size(self):
        return self.columns.shape[1]


def dft_codebook(N, N_cb=None):
    """``N x N_cb`` codebook with entries ``exp(2j pi n m / N_cb)``."""
    N_cb = N if N_cb is None else N_cb
    if N < 1 or N_cb < N:
        raise ValueError(f"need N_cb >= N >= 1, got N={N}, N_cb={N_cb}")
    n = np.arange(N)[:, None]
    m = np.arange(N_cb)[None, :]
    return Codebook(np.exp(2j * np.pi * n * m / N_cb), kind="dft")


def somp(stack, cb, N_RF, normalize=None):
    """Simultaneous OMP: pick ``N_RF`` codebook columns shared by all bands.

    At each step the column maximizing ``sum_k ||cb^H R[k]||^2`` (row-wise)
    is added, already-selected columns are masked and ties go to the lowest
    index. Baseband matrices are the least-squares fit on the selected
    columns; residuals are renormalized per band to unit Frobenius norm.
    """
    K, N, N_s = stack.per_band.shape
    if cb.columns.shape[0] != N:
        raise ValueError(f"codebook has {cb.columns.shape[0]} rows, stack has N={N}")
    if N_RF > cb.size:
        raise ValueError(f"N_RF={N_RF} exceeds codebook size {cb.size}")
    F = stack.per_band
    D = cb.columns
    R = F.copy()
    selected = []
    history = []
    for _ in range(N_RF):
        psi = np.einsum("nm,kns->kms", D.conj(), R)
        score = np.sum(np.abs(psi) ** 2, axis=(0, 2))
        score[selected] = -np.inf
        # argmax returns the first maximum, i.e. the lowest index on ties
        selected.append(int(np.argmax(score)))
        analog = D[:, selected]
        baseband = np.einsum("rn,kns->krs", pseudo_inverse(analog), F)
        diff = F - np.einsum("nr,krs->kns", analog, baseband)
        norms = np.linalg.norm(diff, axis=(1, 2))
        history.append(float(np.sqrt(np.sum(norms ** 2))))
        R = diff.copy()
        big = norms > 1e-14
        R[big] /= norms[big, None, None]

    errors = band_errors(stack, analog, baseband)
    normalize = stack.role == PRECODER if normalize is None else normalize
    if normalize:
        baseband = normalize_power(analog, baseband, N_s)
    return HybridBeamformer(
        method="somp",
        analog=analog,
        baseband=baseband,
        role=stack.role,
        power_normalized=normalize,
        band_errors=errors,
        feedback=np.array(selected),
        history=history,
    )


def _pe_objective(F, analog, baseband):
    return float(np.sum(np.abs(F - np.einsum("nr,krs->kns", analog, baseband)) ** 2))


def pe_altmin(stack, N_RF, max_iters=200, tol=1e-8, seed=0, init=None, normalize=None,
              majorize=True):
    """Phase-extraction alternating minimization over unit-modulus analog matrices.

    Alternates ``F_BB[k] = pinv(F_RF) F[k]`` with the entrywise phase
    extraction ``F_RF = exp(j arg(G))``, ``G = sum_k F[k] F_BB[k]^H``, until
    the relative change of ``sum_k ||F[k] - F_RF F_BB[k]||_F^2`` is below
    ``tol``. Zero entries of ``G`` get phase 0. The starting analog matrix
    is ``init`` if given, otherwise uniform random phases from ``seed``.

    Plain phase extraction ignores the term ``tr(F_RF M F_RF^H)`` with
    ``M = sum_k F_BB[k] F_BB[k]^H`` and can increase the objective when
    ``M`` is not a multiple of the identity. With ``majorize`` that term
    is replaced by its tangent majorizer at the current point, giving
    ``G + F_RF (lambda_max(M) I - M)`` as the matrix whose phases are
    extracted; the objective then never increases, and the step is
    identical to plain phase extraction whenever ``M`` is a scaled
    identity (e.g. ``N_RF == 1``).
    """
    K, N, N_s = stack.per_band.shape
    if N_RF < N_s:
        raise ValueError(f"N_RF={N_RF} must be >= N_s={N_s}")
    F = stack.per_band
    if init is None:
        rng = np.random.default_rng(seed)
        analog = np.exp(1j * rng.uniform(-np.pi, np.pi, (N, N_RF)))
    else:
        analog = np.asarray(init, dtype=np.complex128)
    history = []
    baseband = None
    for _ in range(max_iters):
        baseband = np.einsum("rn,kns->krs", pseudo_inverse(analog), F)
        history.append(_pe_objective(F, analog, baseband))
        G = np.einsum("kns,krs->nr", F, baseband.conj())
        if majorize:
            M = np.einsum("krs,kts->rt", baseband, baseband.conj())
            lam = np.linalg.eigvalsh(M)[-1]
            G = G + analog @ (lam * np.eye(N_RF) - M)
        analog = np.exp(1j * np.angle(G))
        if len(history) > 1 and abs(history[-2] - history[-1]) <= tol * max(history[-2], 1e-300):
            break
    baseband = np.einsum("rn,kns->krs", pseudo_inverse(analog), F)
    history.append(_pe_objective(F, analog, baseband))

    errors = band_errors(stack, analog, baseband)
    normalize = stack.role == PRECODER if normalize is None else normalize
    if normalize:
        baseband = normalize_power(analog, baseband, N_s)
    return HybridBeamformer(
        method="pe",
        analog=analog,
        baseband=baseband,
        role=stack.role,
        power_normalized=normalize,
        band_errors=errors,
        feedback=np.angle(analog).ravel(),
        history=history,
    )
