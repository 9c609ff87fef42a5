"""scikit-learn compatible transformers for encodings and flit ordering.

These wrap the array kernels so the ordering composes with ``Pipeline`` and
``get_params``/``set_params``. Rows are flits, columns are word slots.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import ordering
from ._validation import check_half_split, check_real_array, check_word_array, check_word_width
from .bitcore import fixed8_raw, fixed8_scale, float32_raw, quantize_fixed8_array


class Float32Encoder(TransformerMixin, BaseEstimator):
    """Real values -> IEEE single-precision bit patterns (``uint32``)."""

    def fit(self, X, y=None):
        X = check_real_array(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        return float32_raw(check_real_array(X))

    def inverse_transform(self, X):
        X = check_word_array(X, 32)
        return X.astype(np.uint32).view(np.float32)


class Fixed8Quantizer(TransformerMixin, BaseEstimator):
    """Symmetric per-tensor 8-bit quantiser emitting two's-complement patterns.

    Parameters
    ----------
    scale : float or None
        Quantisation step. ``None`` fits ``max|X| / 127`` on the training data.
    """

    def __init__(self, scale=None):
        self.scale = scale

    def fit(self, X, y=None):
        X = check_real_array(X)
        if self.scale is not None and not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        self.scale_ = float(self.scale) if self.scale is not None else fixed8_scale(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        return fixed8_raw(quantize_fixed8_array(check_real_array(X), self.scale_))

    def inverse_transform(self, X):
        check_is_fitted(self, "scale_")
        X = check_word_array(X, 8)
        return X.astype(np.uint8).view(np.int8).astype(np.float64) * self.scale_


class FlitOrderer(TransformerMixin, BaseEstimator):
    """Reorder the words of each flit by descending '1'-bit count.

    Parameters
    ----------
    scheme : {"O0", "O1", "O2"}
        Baseline, affiliated (pairs move with their weight) or separated
        (each half sorted on its own).
    layout : {"half-half", "weights-only"}
        Whether a flit carries inputs | weights or weights alone.
    word_width : {8, 32}
    """

    def __init__(self, scheme="O1", layout="half-half", word_width=32):
        self.scheme = scheme
        self.layout = layout
        self.word_width = word_width

    def fit(self, X, y=None):
        check_word_width(self.word_width)
        self.scheme_ = ordering.OrderingScheme.parse(self.scheme)
        self.layout_ = ordering.Layout.parse(self.layout)
        X = check_word_array(X, self.word_width)
        if self.layout_ is ordering.Layout.HALF_HALF:
            check_half_split(X.shape[1])
        self.n_features_in_ = X.shape[1]
        return self

    def _validate(self, X):
        check_is_fitted(self, "scheme_")
        X = check_word_array(X, self.word_width)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"fitted on {self.n_features_in_} slots, got {X.shape[1]}")
        return X

    def transform(self, X):
        return self.transform_with_index(X)[0]

    def transform_with_index(self, X):
        """Ordered flits plus the per-row permutation (sorted slot -> original slot)."""
        return ordering.order_array(self._validate(X), self.scheme_, self.layout_)

    def inverse_transform(self, X, perm):
        check_is_fitted(self, "scheme_")
        return ordering.deorder_array(self._validate(X), perm)

    def index_overhead_bits(self):
        check_is_fitted(self, "scheme_")
        return ordering.index_overhead_bits(self.scheme_, self.n_features_in_)
