"""Chest X-ray enhancement and preprocessing toolkit."""

from .enhance import (
    TECHNIQUES,
    BcetCoefficients,
    BcetTargets,
    ClaheParams,
    EnhanceParams,
    GammaParams,
    apply_technique,
    bcet,
    bcet_apply,
    bcet_fit,
    clahe,
    complement,
    gamma_correct,
    hist_equalize,
)
from .histogram import Histogram, ImageStats, compute_histogram, image_stats, normalized_cdf
from .metrics import (
    ConfusionMatrix,
    classification_report,
    confusion_from_pairs,
    seg_overlap_scores,
    time_block,
)
from .preprocess import (
    AugmentSpec,
    BinaryMask,
    ResizeSpec,
    apply_mask,
    augment_rotations,
    resize_bilinear,
    rotate,
    zscore_normalize,
)
from .raster import FloatImage, HsvPixel, ImageBuffer, decode_image, encode_image, hsv_to_rgb, rgb_to_hsv

__version__ = "0.1.0"
