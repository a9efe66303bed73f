"""scikit-learn style wrappers so extraction and authentication fit in a Pipeline.

``SignatureExtractor`` turns rows of raw capacitances into normalized
N_AC traces; ``ACAuthenticator`` learns a card from authentic traces and then
flags outliers (sklearn convention: 1 accept, -1 reject).
"""

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from momauth.auth import ACCard, build_card, weight_assign, weighted_distance
from momauth.frontend import ComparatorModel
from momauth.process import ChipInstance
from momauth.signature import default_cof_grid, extract_signature


class SignatureExtractor(TransformerMixin, BaseEstimator):
    """Extract N_AC(C_OF) traces from capacitance rows.

    Each row of ``X`` is ``[cu_p_1 .. cu_p_N, cu_n_1 .. cu_n_N]`` in farads.
    The noise stream of row ``i`` is keyed by ``chip_id_offset + i``.

    Parameters
    ----------
    cof_grid : array-like or None
        C_OF / Cu ratios; ``None`` uses the default 12-point grid.
    cu_nominal : float
        Design unit capacitance that a grid ratio of 1 refers to.
    """

    def __init__(self, cof_grid=None, repeats=15, cu_nominal=1e-15, sigma_n=float(np.sqrt(250e-18)),
                 v_offset=0.0, v_ref=1.0, count_rule="two-phase", global_seed=0, chip_id_offset=0):
        self.cof_grid = cof_grid
        self.repeats = repeats
        self.cu_nominal = cu_nominal
        self.sigma_n = sigma_n
        self.v_offset = v_offset
        self.v_ref = v_ref
        self.count_rule = count_rule
        self.global_seed = global_seed
        self.chip_id_offset = chip_id_offset

    def fit(self, X, y=None):
        X = check_array(X)
        if X.shape[1] % 2:
            raise ValueError("X must have an even number of columns (P then N arrays)")
        self.n_features_in_ = X.shape[1]
        self.grid_ = default_cof_grid() if self.cof_grid is None else np.asarray(self.cof_grid, dtype=float)
        return self

    def transform_traces(self, X):
        check_is_fitted(self, "grid_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        n = X.shape[1] // 2
        traces = []
        for i, row in enumerate(X):
            cid = self.chip_id_offset + i
            chip = ChipInstance(row[:n], row[n:], cof_series_unit=self.cu_nominal, cof_series_ratio=1.0, chip_id=cid)
            model = ComparatorModel(self.sigma_n, self.v_offset, self.global_seed, cid)
            traces.append(extract_signature(chip, model, self.grid_, self.repeats, self.v_ref,
                                            count_rule=self.count_rule))
        return traces

    def transform(self, X):
        return np.stack([t.normalized for t in self.transform_traces(X)])


class ACAuthenticator(OutlierMixin, BaseEstimator):
    """Learn an AC card from authentic traces; predict 1 (accept) or -1 (reject).

    ``sensitivity`` (per grid point) turns on weighted distances; ``None``
    keeps uniform weights.
    """

    def __init__(self, k_sigma=3.0, threshold_quantile=0.99, sensitivity=None, cof_grid=None, repeats=1):
        self.k_sigma = k_sigma
        self.threshold_quantile = threshold_quantile
        self.sensitivity = sensitivity
        self.cof_grid = cof_grid
        self.repeats = repeats

    def fit(self, X, y=None):
        X = check_array(X)
        if len(X) < 10:
            raise ValueError(f"enrollment needs at least 10 traces, got {len(X)}")
        grid = np.arange(X.shape[1], dtype=float) if self.cof_grid is None else np.asarray(self.cof_grid, dtype=float)
        self.card_ = build_card(X, grid, self.k_sigma, self.sensitivity, self.threshold_quantile, repeats=self.repeats)
        self.n_features_in_ = X.shape[1]
        self.offset_ = -self.card_.d_threshold
        return self

    @classmethod
    def from_card(cls, card):
        est = cls(k_sigma=card.k_sigma, cof_grid=card.cof_grid, repeats=card.repeats)
        est.card_ = card
        est.n_features_in_ = len(card.cof_grid)
        est.offset_ = -card.d_threshold
        return est

    def _check(self, X):
        check_is_fitted(self, "card_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        return X

    def score_samples(self, X):
        """Negative weighted distance; higher is more authentic."""
        X = self._check(X)
        return -weighted_distance(X, self.card_.avg_trace, self.card_.weights)

    def decision_function(self, X):
        return self.score_samples(X) - self.offset_

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1, -1)

    @property
    def weights_(self):
        check_is_fitted(self, "card_")
        return self.card_.weights


__all__ = ["SignatureExtractor", "ACAuthenticator", "ACCard", "weight_assign"]
