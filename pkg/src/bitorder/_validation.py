"""Input checks shared by the estimators and batch entry points."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .bitcore import WORD_WIDTHS


def check_word_width(width) -> int:
    width = int(width)
    if width not in WORD_WIDTHS:
        raise ValueError(f"word_width must be one of {WORD_WIDTHS}, got {width}")
    return width


def check_word_array(X, width: int, *, ensure_min_samples: int = 1) -> np.ndarray:
    """Validate a (flits, slots) array of raw bit patterns of ``width`` bits."""
    width = check_word_width(width)
    X = check_array(X, dtype=None, ensure_min_samples=ensure_min_samples)
    if X.dtype.kind not in "ui":
        raise TypeError(f"raw words must be integers, got dtype {X.dtype}")
    if X.size and (X.min() < 0 or int(X.max()) >> width):
        raise ValueError(f"raw words must lie in [0, 2**{width})")
    return X.astype(np.uint32, copy=False)


def check_real_array(X) -> np.ndarray:
    return check_array(X, dtype=np.float64, ensure_all_finite=True)


def check_half_split(n_slots: int) -> int:
    if n_slots % 2:
        raise ValueError(f"half-half flits need an even number of slots, got {n_slots}")
    return n_slots // 2
