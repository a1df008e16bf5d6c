"""Data-driven choice of minifloat layout for a tensor.

The spread indicator s_w = max|W| / quantile(|W|, alpha) measures how far
the extreme magnitudes sit above the bulk.  Each candidate ExMy layout of
the target width covers a characteristic magnitude span (its range_ratio r),
so the selector picks the layout whose log2 r is closest to log2 s_w: spread
data buys exponent bits, concentrated data buys mantissa bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .formats import FpFormat, candidate_formats
from .tensors import WORKING_DTYPE, quantile_nearest_rank


@dataclass(frozen=True)
class SelectionConfig:
    n_bits: int = 4
    alpha: float = 25.0

    def __post_init__(self):
        if not 2 <= self.n_bits <= 8:
            raise ValueError(f"n_bits must be in 2..8, got {self.n_bits}")
        if not 0.0 < self.alpha < 100.0:
            raise ValueError(f"alpha must be in (0, 100) exclusive, got {self.alpha}")


def spread_indicator(w: np.ndarray, alpha: float = 25.0) -> float:
    """s_w = max|W| / quantile(|W|, alpha), lower nearest-rank quantile.

    Scale-invariant.  A constant tensor (all-zero included) gives exactly
    1.0; a zero quantile under a nonzero max gives the +inf sentinel.
    """
    w = np.asarray(w, dtype=WORKING_DTYPE)
    if w.size == 0:
        raise ValueError("spread of an empty tensor is undefined")
    top = float(np.max(np.abs(w)))
    denom = quantile_nearest_rank(w, alpha)
    if denom == 0.0:
        return 1.0 if top == 0.0 else float("inf")
    return top / denom


def select_format(w: np.ndarray, cfg: SelectionConfig = SelectionConfig()) -> FpFormat:
    """Pick the candidate layout whose range_ratio best matches the spread.

    Minimizes |log2 r - log2 s_w| over candidate_formats(cfg.n_bits); ties
    prefer the layout with more mantissa bits.  An infinite spread selects
    the widest-range (largest n_e) candidate outright.
    """
    s_w = spread_indicator(w, cfg.alpha)
    candidates = candidate_formats(cfg.n_bits)
    if math.isinf(s_w):
        return candidates[-1]
    log_s = math.log2(s_w)
    # candidates are ordered by ascending n_e, i.e. descending n_m, so the
    # first minimum is the preferred tie-break
    return min(candidates, key=lambda f: abs(math.log2(f.range_ratio) - log_s))


def selection_table(w: np.ndarray, cfg: SelectionConfig = SelectionConfig()) -> dict:
    """Diagnostic view of the selection: spread plus per-candidate distances."""
    s_w = spread_indicator(w, cfg.alpha)
    rows = []
    for f in candidate_formats(cfg.n_bits):
        dist = float("inf") if math.isinf(s_w) else abs(math.log2(f.range_ratio) - math.log2(s_w))
        rows.append({"format": str(f), "range_ratio": f.range_ratio, "log2_distance": dist})
    return {"spread": s_w, "alpha": cfg.alpha, "selected": str(select_format(w, cfg)), "candidates": rows}
