"""scikit-learn compatible wrappers around the recompression analysis."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_k, check_planes, check_T, check_threshold
from .block_codec import change_counts, recompression_trace, residual_map
from .dct_features import binary_volume, feature_volume_set
from .localization import binarize, image_level_score, instability_heatmap

__all__ = ["RecompressionLocalizer", "DCTFeatureExtractor", "SingleCompressionDetector"]


class RecompressionLocalizer(TransformerMixin, BaseEstimator):
    """Instability heatmaps for same-quality double-compression splicing.

    Nothing is learned; ``fit`` only validates the hyper-parameters so the
    object composes with pipelines and grid searches.

    Parameters
    ----------
    k : int
        Number of recompressions in the trace.
    threshold : float
        Heatmap level at or above which a pixel is flagged by ``predict``.
    clamp : bool
        Clamp decoded samples to [0, 255] inside the chain.
    """

    def __init__(self, k=7, threshold=0.5, clamp=True):
        self.k = k
        self.threshold = threshold
        self.clamp = clamp

    def fit(self, X=None, y=None):
        self.k_ = check_k(self.k)
        self.threshold_ = check_threshold(self.threshold)
        return self

    def traces(self, X):
        check_is_fitted(self)
        return [recompression_trace(p, self.k_, clamp=self.clamp) for p in check_planes(X)]

    def transform(self, X):
        """List of :class:`~recompress.localization.Heatmap`, one per plane."""
        return [instability_heatmap(t) for t in self.traces(X)]

    def predict(self, X):
        return [binarize(h, self.threshold_) for h in self.transform(X)]

    def decision_function(self, X):
        return np.array([image_level_score(h) for h in self.transform(X)])


class DCTFeatureExtractor(TransformerMixin, BaseEstimator):
    """Block-reshaped de-quantized, quantized and residual-guided volumes.

    Each plane becomes an ``(H/8, W/8, 3 * (T+1) * 64)`` array.
    """

    def __init__(self, T=20, k=7, signed_residual=False, clamp=True):
        self.T = T
        self.k = k
        self.signed_residual = signed_residual
        self.clamp = clamp

    def fit(self, X=None, y=None):
        self.T_ = check_T(self.T)
        self.k_ = check_k(self.k)
        self.n_features_out_ = 3 * (self.T_ + 1) * 64
        return self

    def transform(self, X):
        check_is_fitted(self)
        out = []
        for plane in check_planes(X):
            R = residual_map(recompression_trace(plane, self.k_, clamp=self.clamp))
            volumes = feature_volume_set(binary_volume(plane, self.T_), plane.q, R,
                                         signed=self.signed_residual)
            out.append(volumes.concatenated())
        return out


class SingleCompressionDetector(ClassifierMixin, BaseEstimator):
    """Flags singly compressed planes by their first-recompression instability.

    The score is the fraction of coefficients that change on one
    recompression. ``fit`` picks the score threshold with the best training
    accuracy. Class 1 means singly compressed, class 0 doubly compressed.
    """

    def __init__(self, clamp=True):
        self.clamp = clamp

    def decision_function(self, X):
        scores = []
        for plane in check_planes(X):
            trace = recompression_trace(plane, 1, clamp=self.clamp)
            scores.append(change_counts(trace)[0] / plane.coeffs.size)
        return np.array(scores)

    def fit(self, X, y):
        y = np.asarray(y).astype(int)
        if set(np.unique(y)) - {0, 1}:
            raise ValueError("labels must be 0 (double) or 1 (single)")
        scores = self.decision_function(X)
        if len(scores) != len(y):
            raise ValueError(f"{len(scores)} planes but {len(y)} labels")
        levels = np.unique(scores)
        candidates = np.concatenate([[levels[0]], (levels[:-1] + levels[1:]) / 2, [np.inf]])
        acc = [np.mean((scores >= t).astype(int) == y) for t in candidates]
        self.threshold_ = float(candidates[int(np.argmax(acc))])
        self.classes_ = np.array([0, 1])
        return self

    def predict(self, X):
        check_is_fitted(self)
        return (self.decision_function(X) >= self.threshold_).astype(int)
