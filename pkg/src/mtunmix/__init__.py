"""Multitemporal hyperspectral unmixing with Kalman-smoothed endmember variability.

Library layout:

- :mod:`mtunmix.hseq`     array types, vectorization, on-disk HSEQ format
- :mod:`mtunmix.kronops`  Kronecker utilities, block traces, Woodbury solves
- :mod:`mtunmix.kalman`   filter / RTS smoother / marginal likelihood
- :mod:`mtunmix.em`       sufficient statistics and closed-form M-steps
- :mod:`mtunmix.fcls`     simplex-constrained least squares
- :mod:`mtunmix.vca`      endmember extraction
- :mod:`mtunmix.pipeline` end-to-end unmixing driver
- :mod:`mtunmix.synth`    synthetic benchmark generator
- :mod:`mtunmix.metrics`  evaluation metrics and alignment
- :mod:`mtunmix.cli`      command-line front end
"""

from .em import EmParams
from .hseq import AbundanceSequence, GlmmModel, HsiSequence, read_hseq, write_hseq
from .kalman import Belief, ModelMatrices, Trajectory
from .pipeline import PipelineConfig, UnmixResult, default_init, run_kalman_em, vca_extract
from .synth import GroundTruth, SynthConfig, generate, synthetic_endmembers

__version__ = "0.1.0"

__all__ = [
    "AbundanceSequence",
    "Belief",
    "EmParams",
    "GlmmModel",
    "GroundTruth",
    "HsiSequence",
    "ModelMatrices",
    "PipelineConfig",
    "SynthConfig",
    "Trajectory",
    "UnmixResult",
    "default_init",
    "generate",
    "read_hseq",
    "run_kalman_em",
    "synthetic_endmembers",
    "vca_extract",
    "write_hseq",
    "__version__",
]
