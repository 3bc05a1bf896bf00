"""Vandermonde two-slab PARAFAC factorization of wideband digital precoders.

A precoder stack ``X = [F[0], ..., F[K-1]]`` (``N x K N_s``) is modelled
as ``X = F_RF @ B.T`` with Vandermonde columns
``F_RF[:, i] = [1, e^{j phi_i}, ..., e^{j (N-1) phi_i}]``. Dropping the
last or first row of ``F_RF`` gives two subarrays related by
``F_RF[1:] = F_RF[:-1] @ diag(e^{j phi})``, so the two row-shifted copies
of ``X`` form a two-slab tensor

    T[:, :, 0] = X[:-1] = A diag(1)          B^T
    T[:, :, 1] = X[1:]  = A diag(e^{j phi})  B^T

whose CPD factors carry the phases (in ``A`` and ``C``) and the
baseband matrices (in ``B``).
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .cpd import CpdFactors, TalsOptions, TalsReport, tals
from .hybrid import (
    COMBINER,
    PRECODER,
    DigitalPrecoderStack,
    HybridBeamformer,
    band_errors,
    normalize_power,
)

PHASE_COLLISION_GAP = 1e-6


class IdentifiabilityError(ValueError):
    pass


class DegenerateColumnError(ValueError):
    pass


class ScalingError(ValueError):
    pass


@dataclass
class HybridFactorization(HybridBeamformer):
    """Hybrid beamformer whose analog columns are Vandermonde vectors.

    ``phases[i]`` fully describes ``analog[:, i]``, so the feedback payload
    is ``phases`` itself.
    """

    phases: np.ndarray = None
    report: TalsReport = None
    non_unique: bool = False


@dataclass(frozen=True)
class Identifiability:
    ok: bool
    violations: tuple = ()

    def __bool__(self):
        return self.ok


@dataclass
class VtparOptions:
    """Options for :func:`assemble`.

    ``normalize`` defaults to ``True`` for precoders and ``False`` for
    combiners. ``refit_baseband`` replaces the CPD-derived baseband
    matrices with ``pinv(F_RF) @ F[k]``, the least-squares optimum for the
    recovered analog matrix.
    """

    tals: TalsOptions = field(default_factory=lambda: TalsOptions(init="gevd"))
    force: bool = False
    normalize: bool = None
    refit_baseband: bool = False


def vandermonde(phases, n):
    """``n x len(phases)`` matrix with columns ``exp(1j * phase * arange(n))``."""
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    return np.exp(1j * np.outer(np.arange(n), phases))


def build_two_slab_tensor(stack):
    """Return the ``(N-1, K*N_s, 2)`` tensor of row-shifted copies of the stacked precoders."""
    if stack.N < 2:
        raise ValueError("need N >= 2 antennas to form two subarrays")
    X = stack.stacked()
    return np.stack([X[:-1], X[1:]], axis=2)


def identifiability_check(N, N_RF, K, N_s):
    """Check the two-slab uniqueness conditions for a Vandermonde analog factor.

    With two slabs and a Vandermonde ``A`` of full k-rank the uniqueness
    condition reduces to ``A`` being tall (``N - 1 >= N_RF``, i.e.
    ``N >= N_RF + 1``) and ``B`` being tall (``K * N_s >= N_RF``).
    """
    for name, value in (("N", N), ("N_RF", N_RF), ("K", K), ("N_s", N_s)):
        if int(value) != value or value < 1:
            raise ValueError(f"{name} must be a positive integer, got {value!r}")
    violations = []
    if N < N_RF + 1:
        violations.append(f"N < N_RF + 1 ({N} < {N_RF + 1})")
    if K * N_s < N_RF:
        violations.append(f"K*N_s < N_RF ({K * N_s} < {N_RF})")
    return Identifiability(not violations, tuple(violations))


def recover_phases(A_hat):
    """Per-column phase ``arg(sum_n A[n+1] conj(A[n]))``, in ``[-pi, pi]``.

    The estimate is unaffected by the complex scale of each column.
    """
    A_hat = np.asarray(A_hat, dtype=np.complex128)
    if A_hat.ndim != 2 or A_hat.shape[0] < 2:
        raise ValueError("A_hat needs at least two rows")
    norms = np.linalg.norm(A_hat, axis=0)
    bad = np.flatnonzero(norms <= 1e-14)
    if bad.size:
        raise DegenerateColumnError(f"columns {bad.tolist()} are numerically zero")
    corr = np.sum(A_hat[1:] * A_hat[:-1].conj(), axis=0)
    return np.angle(corr)


def resolve_scaling(factors, phases):
    """Remove the per-column scale ambiguity of a two-slab CPD.

    Returns
    -------
    analog : ndarray, shape (I + 1, F)
        Vandermonde matrix rebuilt from ``phases``.
    B_fixed : ndarray, shape (J, F)
        ``B[:, i] * A[0, i] * C[0, i]``.
    C_fixed : ndarray, shape (2, F)
        ``C[:, i] / C[0, i]``; row 0 is all ones.
    """
    phases = np.asarray(phases, dtype=float)
    if factors.rank != phases.size:
        raise ValueError(f"rank {factors.rank} != {phases.size} phases")
    if factors.C.shape[0] != 2:
        raise ValueError("C must have exactly two rows")
    lam1 = factors.A[0]
    lam3 = factors.C[0]
    tiny = np.flatnonzero((np.abs(lam1) < 1e-12) | (np.abs(lam3) < 1e-12))
    if tiny.size:
        raise ScalingError(f"scale reference is ~0 for columns {tiny.tolist()}")
    analog = vandermonde(phases, factors.A.shape[0] + 1)
    return analog, factors.B * (lam1 * lam3), factors.C / lam3


def _phase_collisions(phases):
    out = []
    for i, j in combinations(range(len(phases)), 2):
        if abs(np.angle(np.exp(1j * (phases[i] - phases[j])))) < PHASE_COLLISION_GAP:
            out.append((i, j))
    return out


def assemble(stack, N_RF, opts=None):
    """Factorize ``stack`` as ``F_RF @ F_BB[k]`` with a Vandermonde ``F_RF``.

    Builds the two-slab tensor, fits a rank-``N_RF`` CPD, reads the phases
    off the first factor, fixes the scaling and reshapes the second factor
    into ``K`` baseband matrices. Precoders are then power-normalized per
    band; ``band_errors`` are measured before that step.
    """
    opts = opts or VtparOptions()
    K, N, N_s = stack.per_band.shape
    warnings = []
    ident = identifiability_check(N, N_RF, K, N_s)
    if not ident:
        if not opts.force:
            raise IdentifiabilityError("; ".join(ident.violations))
        warnings.extend(f"identifiability: {v}" for v in ident.violations)

    T = build_two_slab_tensor(stack)
    factors, report = tals(T, N_RF, opts.tals)
    warnings.extend(report.warnings)
    phases = recover_phases(factors.A)
    analog, B_fixed, _ = resolve_scaling(factors, phases)

    if opts.refit_baseband:
        pinv = np.linalg.pinv(analog)
        baseband = np.einsum("rn,kns->krs", pinv, stack.per_band)
    else:
        baseband = np.stack([B_fixed[k * N_s:(k + 1) * N_s].T for k in range(K)])

    collisions = _phase_collisions(phases)
    if collisions:
        warnings.append(f"phase collision between RF chains {collisions}; factorization not unique")
    if np.linalg.matrix_rank(B_fixed) < N_RF:
        warnings.append("recovered B is rank deficient")

    errors = band_errors(stack, analog, baseband)
    normalize = opts.normalize if opts.normalize is not None else stack.role == PRECODER
    if normalize:
        baseband = normalize_power(analog, baseband, N_s)

    return HybridFactorization(
        method="vtpar",
        analog=analog,
        baseband=baseband,
        role=stack.role,
        power_normalized=normalize,
        band_errors=errors,
        feedback=phases.copy(),
        history=list(report.residual_history),
        warnings=warnings,
        phases=phases,
        report=report,
        non_unique=bool(collisions),
    )


__all__ = [
    "COMBINER",
    "PRECODER",
    "CpdFactors",
    "DigitalPrecoderStack",
    "HybridFactorization",
    "Identifiability",
    "IdentifiabilityError",
    "VtparOptions",
    "assemble",
    "build_two_slab_tensor",
    "identifiability_check",
    "recover_phases",
    "resolve_scaling",
    "vandermonde",
]
