"""Rank-F PARAFAC (CPD) model and trilinear alternating least squares."""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .numerics import DimensionError, khatri_rao, least_squares, unfold


@dataclass(frozen=True)
class CpdFactors:
    """Factors of ``T[:, :, p] = A @ diag(C[p]) @ B.T``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        ranks = {self.A.shape[1], self.B.shape[1], self.C.shape[1]}
        if len(ranks) != 1 or any(m.ndim != 2 for m in (self.A, self.B, self.C)):
            raise DimensionError(
                f"factor column counts differ: A{self.A.shape} B{self.B.shape} C{self.C.shape}"
            )

    @property
    def rank(self):
        return self.A.shape[1]

    @property
    def shape(self):
        return (self.A.shape[0], self.B.shape[0], self.C.shape[0])

    def permute(self, perm):
        perm = list(perm)
        return CpdFactors(self.A[:, perm], self.B[:, perm], self.C[:, perm])

    def rescale(self, a_scale, b_scale, c_scale):
        return CpdFactors(self.A * a_scale, self.B * b_scale, self.C * c_scale)


@dataclass
class TalsOptions:
    """Options for :func:`tals`.

    ``init`` is ``"random"`` (complex Gaussian factors drawn from ``seed``),
    ``"gevd"`` (generalized-eigenvalue start, exact for noiseless
    two-slab data; later restarts fall back to random) or a
    :class:`CpdFactors` used as the starting point of the first restart.
    ``order`` is the per-sweep update order of the factors (0=A, 1=B, 2=C).
    ``line_search`` tries an extrapolated point ``X + s (X - X_prev)``
    after each sweep (step ``s = it ** (1/3)``) and keeps it only when it
    lowers the residual, so monotonicity is preserved.
    ``vandermonde_projection`` projects every column of ``A`` onto the
    nearest scaled Vandermonde vector after each A-update; it is an
    experimental extension and voids the monotonicity guarantee.
    """

    max_iters: int = 500
    rel_tol: float = 1e-10
    seed: Optional[int] = 0
    init: object = "random"
    n_restarts: int = 5
    order: Sequence[int] = (0, 1, 2)
    line_search: bool = True
    vandermonde_projection: bool = False


@dataclass
class TalsReport:
    iterations: int
    residual_history: list
    converged: bool
    final_residual: float
    restart: int = 0
    restart_residuals: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def reconstruct(factors):
    """Dense tensor of shape ``(I, J, P)`` from CPD factors."""
    A, B, C = factors.A, factors.B, factors.C
    return np.einsum("if,jf,pf->ijp", A, B, C)


def residual(T, factors):
    """Relative Frobenius error ``||T - [[A, B, C]]|| / ||T||``.

    Falls back to the absolute error when ``T`` is all zeros.
    """
    T = np.asarray(T)
    if T.shape != factors.shape:
        raise DimensionError(f"tensor {T.shape} vs factors {factors.shape}")
    err = np.linalg.norm(T - reconstruct(factors))
    nrm = np.linalg.norm(T)
    return float(err / nrm) if nrm > 0 else float(err)


def _random_factors(shape, rank, rng):
    def draw(n):
        return (rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))) / np.sqrt(2)

    return [draw(n) for n in shape]


def gevd_init(T, rank):
    """Closed-form CPD start from the first two slabs of ``T``.

    Both slabs are compressed onto the dominant rank-dimensional row and
    column subspaces of ``[X0, X1]`` / ``[X0; X1]``; the eigenvectors of
    the compressed pencil give ``B``, then ``A`` and ``C`` follow by least
    squares. Exact for noiseless data with full-rank ``A``, ``B`` and
    distinct ratios ``C[1]/C[0]``.
    """
    I, J, P = T.shape
    if P < 2 or rank > min(I, J):
        raise ValueError("gevd init needs P >= 2 and rank <= min(I, J)")
    X0, X1 = T[:, :, 0], T[:, :, 1]
    U = np.linalg.svd(np.hstack([X0, X1]), full_matrices=False)[0][:, :rank]
    Vh = np.linalg.svd(np.vstack([X0, X1]), full_matrices=False)[2][:rank]
    S0 = U.conj().T @ X0 @ Vh.conj().T
    S1 = U.conj().T @ X1 @ Vh.conj().T
    # S_p = K D_p N with B^T = N Vh, so S0^{-1} S1 = N^{-1} D0^{-1} D1 N
    _, W = np.linalg.eig(np.linalg.solve(S0, S1))
    B = Vh.T @ np.linalg.inv(W).T
    A, C = _solve_ac(T, B)
    return [A, B, C]


def _solve_ac(T, B):
    I, J, P = T.shape
    rank = B.shape[1]
    # with B fixed, each slab is A diag(C[p]) B^T; solve jointly for A*C[p]
    pinvBT = np.linalg.pinv(B.T)
    G = np.stack([T[:, :, p] @ pinvBT for p in range(P)], axis=2)  # (I, F, P)
    A = np.empty((I, rank), dtype=complex)
    C = np.empty((P, rank), dtype=complex)
    for f in range(rank):
        u, s, vh = np.linalg.svd(G[:, f, :], full_matrices=False)
        A[:, f] = u[:, 0] * s[0]
        C[:, f] = vh[0]
    return A, C


def _project_vandermonde(A):
    out = np.empty_like(A)
    n = np.arange(A.shape[0])
    for f in range(A.shape[1]):
        a = A[:, f]
        phi = np.angle(np.vdot(a[:-1], a[1:]))
        v = np.exp(1j * phi * n)
        out[:, f] = v * (np.vdot(v, a) / A.shape[0])
    return out


def _single_run(T, rank, factors, opts, unfoldings, norm_T):
    A, B, C = factors
    history = []
    converged = False
    it = 0

    def rel_err(A, B, C):
        err = np.linalg.norm(unfoldings[2] - C @ khatri_rao(B, A).T)
        return float(err / norm_T) if norm_T > 0 else float(err)

    for it in range(1, opts.max_iters + 1):
        prev = (A, B, C)
        for which in opts.order:
            if which == 0:
                A = least_squares(khatri_rao(C, B), unfoldings[0].T).T
                if opts.vandermonde_projection:
                    A = _project_vandermonde(A)
            elif which == 1:
                B = least_squares(khatri_rao(C, A), unfoldings[1].T).T
            else:
                C = least_squares(khatri_rao(B, A), unfoldings[2].T).T
        res = rel_err(A, B, C)
        if opts.line_search and it > 1 and not opts.vandermonde_projection:
            step = it ** (1.0 / 3.0)
            trial = [x + step * (x - x0) for x, x0 in zip((A, B, C), prev)]
            trial_res = rel_err(*trial)
            if trial_res < res:
                (A, B, C), res = trial, trial_res
        history.append(res)
        if res <= 1e-15:
            converged = True
            break
        if len(history) > 1 and abs(history[-2] - res) < opts.rel_tol * res:
            converged = True
            break
    return CpdFactors(A, B, C), history, converged, it


EXACT_FIT = 1e-14


def tals(T, rank, opts=None):
    """Fit a rank-``rank`` CPD to ``T`` by trilinear alternating least squares.

    Each sweep solves the exact least-squares problem for one factor with
    the other two fixed (``A`` from ``unfold(T, 1) ~ A (C kr B)^T`` and so
    on), so the fit error never increases. Iteration stops when the
    relative change of the residual drops below ``opts.rel_tol`` or after
    ``opts.max_iters`` sweeps. With ``opts.n_restarts > 1`` independent
    starts are run and the lowest residual wins (ties go to the earlier
    restart). Remaining restarts are skipped once one reaches a relative
    residual of ``EXACT_FIT`` (round-off level), since none can do better.

    Returns
    -------
    factors : CpdFactors
    report : TalsReport
    """
    opts = opts or TalsOptions()
    T = np.asarray(T, dtype=np.complex128)
    if T.ndim != 3 or min(T.shape) < 1:
        raise DimensionError(f"expected a non-empty 3-way tensor, got shape {T.shape}")
    if not np.all(np.isfinite(T)):
        raise ValueError("tensor contains non-finite entries")
    if rank < 1:
        raise ValueError("rank must be >= 1")

    I, J, P = T.shape
    warnings = []
    if rank > I * J:
        warnings.append(f"rank {rank} exceeds I*J={I * J}; C is not identifiable")

    unfoldings = [unfold(T, m) for m in (1, 2, 3)]
    norm_T = np.linalg.norm(T)
    children = np.random.SeedSequence(opts.seed).spawn(max(1, opts.n_restarts))

    best = None
    restart_residuals = []
    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        if r == 0 and isinstance(opts.init, CpdFactors):
            start = [np.array(m, dtype=complex) for m in (opts.init.A, opts.init.B, opts.init.C)]
        elif r == 0 and opts.init == "gevd":
            try:
                start = gevd_init(T, rank)
            except (ValueError, np.linalg.LinAlgError) as exc:
                warnings.append(f"gevd init failed ({exc}); using random start")
                start = _random_factors(T.shape, rank, rng)
        else:
            start = _random_factors(T.shape, rank, rng)
        factors, history, converged, iters = _single_run(T, rank, start, opts, unfoldings, norm_T)
        final = history[-1] if history else residual(T, factors)
        restart_residuals.append(final)
        if best is None or final < best[1][-1]:
            best = (factors, history, converged, iters, r)
        if final <= EXACT_FIT:
            break

    factors, history, converged, iters, r = best
    report = TalsReport(
        iterations=iters,
        residual_history=history,
        converged=converged,
        final_residual=history[-1],
        restart=r,
        restart_residuals=restart_residuals,
        warnings=warnings,
    )
    return factors, report
