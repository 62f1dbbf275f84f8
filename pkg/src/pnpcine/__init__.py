"""Multi-coil cardiac-cine MRI reconstruction toolkit.

Plug-and-play ADMM with pluggable denoisers (identity, undecimated-wavelet
soft-thresholding, trained spectrally-normalized 3-D CNN) plus CS-TV,
CS-UWT (FISTA) and L+S baselines, all runnable on a synthetic dynamic
phantom at desk scale.
"""

from .core import (
    ComplexImage,
    MultiCoilKSpace,
    SamplingMask,
    SensitivityMaps,
    inner_product,
    l2_norm,
)
from .errors import (
    CertificationError,
    DenoiserError,
    DimensionError,
    DivergenceError,
    EmptyMaskError,
    FormatError,
    InfeasibleMaskError,
    ParameterError,
    PnpCineError,
    UndefinedMetricError,
    UndefinedSnrError,
)

__version__ = "0.1.0"
