"""Clustered geometric wideband channel and fully-digital reference beamformers.

Each realization draws ``n_clusters`` clusters with an exponential delay,
uniform centre angles at both ends and ``n_rays`` rays per cluster with
Laplacian angle offsets. Arrays are half-wavelength ULAs. Subcarrier
frequencies are measured from the centre of the whole allocation and
each subband matrix is the mean of its ``subband_size`` subcarrier
responses.

Ensemble file format
--------------------
Line 1 is ``TENSORHBF-ENSEMBLE 1``; line 2 a JSON header with ``dims``
``[K, N_r, N_t]``, ``noise_variance`` and the generating ``config``; the
rest is ``K*N_r*N_t`` complex values as interleaved little-endian float64
(real, imag) pairs in C order.
"""

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .hybrid import COMBINER, PRECODER, DigitalPrecoderStack
from .numerics import svd

MAGIC = b"TENSORHBF-ENSEMBLE 1\n"


@dataclass(frozen=True)
class ChannelConfig:
    N_t: int = 32
    N_r: int = 8
    K: int = 30
    n_clusters: int = 6
    n_rays: int = 2
    delay_spread: float = 300e-9
    subcarrier_spacing: float = 60e3
    subband_size: int = 12
    angle_spread: float = 0.01
    seed: int = 0
    snr_db: float = 0.0
    power: float = 1.0

    def __post_init__(self):
        for name in ("N_t", "N_r", "K", "n_clusters", "n_rays", "subband_size"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not self.delay_spread > 0:
            raise ValueError("delay_spread must be > 0")
        if not self.subcarrier_spacing > 0:
            raise ValueError("subcarrier_spacing must be > 0")
        if self.angle_spread < 0:
            raise ValueError("angle_spread must be >= 0")
        if not self.power > 0:
            raise ValueError("power must be > 0")

    def replace(self, **changes):
        return ChannelConfig(**{**asdict(self), **changes})

    @property
    def noise_variance(self):
        return self.power * 10.0 ** (-self.snr_db / 10.0)


@dataclass(frozen=True)
class Paths:
    """Multipath parameters; per-ray arrays have shape ``(n_clusters, n_rays)``."""

    delays: np.ndarray
    aod: np.ndarray
    aoa: np.ndarray
    gains: np.ndarray
    cluster_power: np.ndarray


@dataclass(frozen=True)
class ChannelEnsemble:
    per_band: np.ndarray  # (K, N_r, N_t)
    noise_variance: float
    config: ChannelConfig = None

    def __post_init__(self):
        arr = np.asarray(self.per_band, dtype=np.complex128)
        if arr.ndim != 3:
            raise ValueError(f"per_band must be (K, N_r, N_t), got {arr.shape}")
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be > 0")
        object.__setattr__(self, "per_band", arr)

    @property
    def K(self):
        return self.per_band.shape[0]

    def with_snr(self, snr_db, power=1.0):
        cfg = self.config.replace(snr_db=snr_db) if self.config else None
        return ChannelEnsemble(self.per_band, power * 10.0 ** (-snr_db / 10.0), cfg)


def steering(n, theta):
    """Half-wavelength ULA response(s), shape ``(n,) + shape(theta)``."""
    theta = np.asarray(theta, dtype=float)
    k = np.arange(n).reshape((n,) + (1,) * theta.ndim)
    return np.exp(1j * np.pi * k * np.sin(theta))


def draw_paths(cfg, rng):
    C, R = cfg.n_clusters, cfg.n_rays
    delays = rng.exponential(cfg.delay_spread, C)
    centre_tx = rng.uniform(-np.pi / 2, np.pi / 2, C)
    centre_rx = rng.uniform(-np.pi / 2, np.pi / 2, C)
    aod = centre_tx[:, None] + rng.laplace(0.0, cfg.angle_spread, (C, R))
    aoa = centre_rx[:, None] + rng.laplace(0.0, cfg.angle_spread, (C, R))
    power = np.exp(-delays / cfg.delay_spread)
    power /= power.sum()
    std = np.sqrt(power / R)[:, None]
    gains = std * (rng.standard_normal((C, R)) + 1j * rng.standard_normal((C, R))) / np.sqrt(2)
    return Paths(delays, aod, aoa, gains, power)


def subband_responses(cfg, delays):
    """Mean of ``exp(-2j pi f_q tau)`` over each subband, shape ``(K, n_clusters)``."""
    Q = cfg.K * cfg.subband_size
    f = (np.arange(Q) - (Q - 1) / 2.0) * cfg.subcarrier_spacing
    phasors = np.exp(-2j * np.pi * np.outer(f, delays))
    return phasors.reshape(cfg.K, cfg.subband_size, -1).mean(axis=1)


def synthesize(cfg, paths, normalize=True):
    """Per-subband channel matrices for fixed multipath parameters.

    With ``normalize`` the matrices are scaled so that, averaged over the
    subbands, the expected (over ray gains) ``||H[k]||_F^2`` is
    ``N_t * N_r`` given the drawn delays.
    """
    a_t = steering(cfg.N_t, paths.aod)  # (N_t, C, R)
    a_r = steering(cfg.N_r, paths.aoa)
    clusters = np.einsum("icr,cr,jcr->cij", a_r, paths.gains, a_t.conj())
    resp = subband_responses(cfg, np.asarray(paths.delays, dtype=float))
    H = np.einsum("kc,cij->kij", resp, clusters)
    if normalize:
        expected = np.mean(np.abs(resp) ** 2 @ np.asarray(paths.cluster_power, dtype=float))
        if expected > 0:
            H /= np.sqrt(expected)
    return H


def generate_channel(cfg):
    """Draw one seeded channel realization."""
    rng = np.random.default_rng(cfg.seed)
    paths = draw_paths(cfg, rng)
    return ChannelEnsemble(synthesize(cfg, paths), cfg.noise_variance, cfg)


def optimal_precoders(ens, N_s):
    """Top-``N_s`` right singular vectors of every ``H[k]``."""
    K, N_r, N_t = ens.per_band.shape
    if N_s < 1 or N_s > min(N_t, N_r):
        raise ValueError(f"N_s={N_s} must be in [1, min(N_t, N_r)={min(N_t, N_r)}]")
    return DigitalPrecoderStack(np.stack([svd(H).V[:, :N_s] for H in ens.per_band]), PRECODER)


def wmmse_combiners(ens, precoders):
    """``W[k] = ((Hb^H Hb + s2 I)^{-1} Hb^H)^H`` with ``Hb = H[k] F[k]``, shape ``(N_r, N_s)``."""
    if precoders.K != ens.K or precoders.N != ens.per_band.shape[2]:
        raise ValueError("precoders do not match the channel ensemble")
    s2 = ens.noise_variance
    out = []
    for H, F in zip(ens.per_band, precoders.per_band):
        Hb = H @ F
        gram = Hb.conj().T @ Hb + s2 * np.eye(F.shape[1])
        out.append(np.linalg.solve(gram, Hb.conj().T).conj().T)
    return DigitalPrecoderStack(np.stack(out), COMBINER)


def _config_to_json(cfg):
    return None if cfg is None else {k: (float(v) if isinstance(v, np.floating) else v) for k, v in asdict(cfg).items()}


def save_ensemble(path, ens):
    header = {
        "dims": list(ens.per_band.shape),
        "noise_variance": float(ens.noise_variance),
        "config": _config_to_json(ens.config),
    }
    data = np.ascontiguousarray(ens.per_band).view(np.float64).astype("<f8", copy=False)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(data.tobytes())


def load_ensemble(path):
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path}: not a channel ensemble file")
    end = raw.index(b"\n", len(MAGIC))
    header = json.loads(raw[len(MAGIC):end])
    dims = tuple(header["dims"])
    values = np.frombuffer(raw[end + 1:], dtype="<f8")
    if values.size != 2 * int(np.prod(dims)):
        raise ValueError(f"{path}: payload has {values.size} floats, expected {2 * int(np.prod(dims))}")
    per_band = values.astype(np.float64).view(np.complex128).reshape(dims)
    cfg = header.get("config")
    if cfg is not None:
        names = {f.name for f in fields(ChannelConfig)}
        cfg = ChannelConfig(**{k: v for k, v in cfg.items() if k in names})
    return ChannelEnsemble(per_band.copy(), header["noise_variance"], cfg)
