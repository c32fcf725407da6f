"""Modular registration-based template tracking."""
from .appearance import NCC, RSCV, SCV, SSD, ZNCC, GainBias, make_am
from .errors import (CallOrderError, DegenerateParameterizationError,
                     DegeneratePatchError, NoConsensusError, SingularWarpError)
from .image import as_image, pix_grad, pix_hess, sample_patch
from .search import (ESM, FALK, FCLK, IALK, ICLK, NN, PF, TrackerConfig,
                     make_tracker)
from .ssm import (Affine, Homography, SamplerConfig, Similitude, Translation,
                  estimate_warp_from_pts, make_ssm)

__version__ = "0.1.0"
