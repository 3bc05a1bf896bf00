"""Spectral efficiency, factorization error and feedback-overhead accounting."""

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg as sla

GAMMA_COND_LIMIT = 1e12

OVERHEAD_METHODS = ("unit_modulus", "codebook", "vandermonde")
METHOD_FEASIBLE_SET = {"pe": "unit_modulus", "somp": "codebook", "vtpar": "vandermonde"}

CSV_COLUMNS = ("method", "mean_rate", "runtime_ms", "overhead", "per_band_rate", "per_band_nmse")


class IllConditionedCombinerError(np.linalg.LinAlgError):
    pass


@dataclass
class EvalReport:
    method: str
    per_band_rate: list
    per_band_nmse: list
    overhead: dict = field(default_factory=dict)
    runtime_ms: float = 0.0

    @property
    def mean_rate(self):
        return float(np.mean(self.per_band_rate))

    @property
    def mean_nmse(self):
        return float(np.mean(self.per_band_nmse))

    def to_record(self):
        rec = asdict(self)
        rec["mean_rate"] = self.mean_rate
        return rec

    def to_json(self):
        return json.dumps(self.to_record(), sort_keys=True)

    def csv_row(self):
        """Values in ``CSV_COLUMNS`` order; per-band lists are ``;``-joined."""
        return [
            self.method,
            repr(self.mean_rate),
            repr(float(self.runtime_ms)),
            json.dumps(self.overhead, sort_keys=True),
            ";".join(repr(float(x)) for x in self.per_band_rate),
            ";".join(repr(float(x)) for x in self.per_band_nmse),
        ]


def reports_to_csv(reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rep in reports:
        writer.writerow(rep.csv_row())
    return buf.getvalue()


def spectral_efficiency(H, F_RF, F_BB, W_RF, W_BB, alpha, sigma2, N_s):
    """Achievable rate ``log2 det(I + alpha/N_s Gamma^{-1} W^H H F F^H H^H W)``.

    ``Gamma = sigma2 W^H W`` with ``W = W_RF W_BB`` and ``F = F_RF F_BB``.
    Gamma is factorized by Cholesky; the rate is evaluated through the
    whitened effective channel ``L^{-1} W^H H F`` so no inverse is formed.
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.complex128))
    F = np.atleast_2d(np.asarray(F_RF, dtype=np.complex128)) @ np.atleast_2d(F_BB)
    W = np.atleast_2d(np.asarray(W_RF, dtype=np.complex128)) @ np.atleast_2d(W_BB)
    if H.shape != (W.shape[0], F.shape[0]) or W.shape[1] != N_s or F.shape[1] != N_s:
        raise ValueError(f"inconsistent shapes: H{H.shape} F{F.shape} W{W.shape} N_s={N_s}")
    WhW = W.conj().T @ W
    if np.linalg.cond(WhW) > GAMMA_COND_LIMIT:
        raise IllConditionedCombinerError("combiner W_RF W_BB is (nearly) rank deficient")
    L = sla.cholesky(sigma2 * WhW, lower=True)
    G = sla.solve_triangular(L, W.conj().T @ H @ F, lower=True)
    M = np.eye(N_s) + (alpha / N_s) * (G @ G.conj().T)
    sign, logdet = np.linalg.slogdet(M)
    return max(float(logdet.real / np.log(2.0)), 0.0)


def factorization_nmse(stack, hf):
    """``||F[k] - F_RF F_BB[k]||_F^2 / ||F[k]||_F^2`` per band.

    ``hf`` is anything with ``analog`` and ``baseband`` attributes.
    """
    target = stack.per_band
    approx = np.einsum("nr,krs->kns", hf.analog, hf.baseband)
    num = np.sum(np.abs(target - approx) ** 2, axis=(1, 2))
    den = np.sum(np.abs(target) ** 2, axis=(1, 2))
    return num / np.where(den > 0, den, 1.0)


def feedback_overhead(method, N, N_RF):
    """Number of real parameters that describe an ``N x N_RF`` analog beamformer."""
    if N < 1 or N_RF < 1:
        raise ValueError("N and N_RF must be >= 1")
    method = METHOD_FEASIBLE_SET.get(method, method)
    if method == "unit_modulus":
        return N * N_RF
    if method in ("codebook", "vandermonde"):
        return N_RF
    raise ValueError(f"unknown method {method!r}; expected one of {OVERHEAD_METHODS}")
