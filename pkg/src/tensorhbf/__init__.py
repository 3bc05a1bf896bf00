"""Wideband hybrid beamforming via Vandermonde-constrained two-slab PARAFAC.

The package factorizes stacks of fully-digital precoders (or combiners)
into a frequency-flat analog matrix with Vandermonde columns and per-band
baseband matrices, and ships codebook-OMP and phase-extraction baselines,
a clustered wideband channel simulator, and metrics for comparing them.
"""

from .numerics import (
    SvdResult,
    svd,
    pseudo_inverse,
    khatri_rao,
    unfold,
    fold,
    least_squares,
)
from .cpd import CpdFactors, TalsOptions, TalsReport, reconstruct, residual, tals
from .vtpar import (
    DigitalPrecoderStack,
    HybridFactorization,
    build_two_slab_tensor,
    identifiability_check,
    recover_phases,
    resolve_scaling,
    assemble,
    vandermonde,
)
from .baselines import Codebook, dft_codebook, somp, pe_altmin
from .channel import (
    ChannelConfig,
    ChannelEnsemble,
    generate_channel,
    optimal_precoders,
    wmmse_combiners,
)
from .evalkit import (
    EvalReport,
    spectral_efficiency,
    factorization_nmse,
    feedback_overhead,
)

__version__ = "0.1.0"
