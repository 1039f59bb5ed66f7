"""Same-quality double JPEG compression forensics from quantized DCT coefficients."""

from .block_codec import (
    CoefficientPlane,
    RecompressionTrace,
    change_counts,
    change_mask,
    quality_to_qmatrix,
    recompress_once,
    recompression_trace,
    residual_map,
)
from .dct_features import binary_volume, block_to_channel_reshape, coefficient_histogram, feature_volume_set
from .estimators import DCTFeatureExtractor, RecompressionLocalizer, SingleCompressionDetector
from .jpeg_parser import CoefficientImage, estimate_quality, load_coefficients, parse_jpeg, read_jpeg
from .localization import Heatmap, adaptive_aggregate, binarize, image_level_score, instability_heatmap

__version__ = "0.1.0"

__all__ = [
    "CoefficientImage",
    "CoefficientPlane",
    "DCTFeatureExtractor",
    "Heatmap",
    "RecompressionLocalizer",
    "RecompressionTrace",
    "SingleCompressionDetector",
    "adaptive_aggregate",
    "binarize",
    "binary_volume",
    "block_to_channel_reshape",
    "change_counts",
    "change_mask",
    "coefficient_histogram",
    "estimate_quality",
    "feature_volume_set",
    "image_level_score",
    "instability_heatmap",
    "load_coefficients",
    "parse_jpeg",
    "quality_to_qmatrix",
    "read_jpeg",
    "recompress_once",
    "recompression_trace",
    "residual_map",
]
