"""Containers shared by the hybrid factorization methods."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

PRECODER = "precoder"
COMBINER = "combiner"


@dataclass(frozen=True)
class DigitalPrecoderStack:
    """K fully-digital precoders (or combiners), stored as a ``(K, N, N_s)`` array."""

    per_band: np.ndarray
    role: str = PRECODER

    def __post_init__(self):
        arr = np.asarray(self.per_band, dtype=np.complex128)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"per_band must be (K, N, N_s), got shape {arr.shape}")
        if self.role not in (PRECODER, COMBINER):
            raise ValueError(f"role must be 'precoder' or 'combiner', got {self.role!r}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("per_band contains non-finite entries")
        if self.role == PRECODER:
            norms = np.linalg.norm(arr, axis=1)
            if np.max(np.abs(norms - 1.0)) > 1e-9:
                raise ValueError("precoder columns must have unit norm (tol 1e-9)")
        object.__setattr__(self, "per_band", arr)

    @classmethod
    def from_list(cls, mats, role=PRECODER):
        return cls(np.stack([np.asarray(m, dtype=np.complex128) for m in mats]), role)

    @property
    def K(self):
        return self.per_band.shape[0]

    @property
    def N(self):
        return self.per_band.shape[1]

    @property
    def N_s(self):
        return self.per_band.shape[2]

    def stacked(self):
        """``[F[0], ..., F[K-1]]`` as one ``(N, K*N_s)`` matrix."""
        return np.concatenate(list(self.per_band), axis=1)


@dataclass
class HybridBeamformer:
    """Analog matrix shared across bands plus per-band baseband matrices.

    ``band_errors`` holds ``||F[k] - analog @ baseband[k]||_F / ||F[k]||_F``
    measured before power normalization. ``feedback`` is the payload a
    receiver would report to describe ``analog`` (phases, codebook
    indices, ...).
    """

    method: str
    analog: np.ndarray
    baseband: np.ndarray
    role: str = PRECODER
    power_normalized: bool = False
    band_errors: np.ndarray = None
    feedback: Optional[np.ndarray] = None
    history: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def N_RF(self):
        return self.analog.shape[1]

    def products(self):
        """``analog @ baseband[k]`` for every band, shape ``(K, N, N_s)``."""
        return np.einsum("nr,krs->kns", self.analog, self.baseband)

    def feedback_count(self):
        return 0 if self.feedback is None else int(np.size(self.feedback))


def band_errors(stack, analog, baseband):
    target = stack.per_band
    approx = np.einsum("nr,krs->kns", analog, baseband)
    num = np.linalg.norm(target - approx, axis=(1, 2))
    den = np.linalg.norm(target, axis=(1, 2))
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), num)


def normalize_power(analog, baseband, n_s):
    """Scale each ``baseband[k]`` so that ``||analog @ baseband[k]||_F^2 = n_s``.

    Bands whose product is identically zero are left untouched.
    """
    out = np.array(baseband, dtype=np.complex128, copy=True)
    for k in range(out.shape[0]):
        nrm = np.linalg.norm(analog @ out[k])
        if nrm > 0:
            out[k] *= np.sqrt(n_s) / nrm
    return out
