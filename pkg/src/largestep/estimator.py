"""Scikit-learn style wrapper around the GD engine."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_is_fitted, validate_data

from .dataset import max_margin_2d, normalize
from .diagnostics import DerivedConstants, detect_oscillations, transition_time
from .engine import run, sigmoid_weights


class LargeStepGDClassifier(ClassifierMixin, BaseEstimator):
    """Unregularized logistic regression trained by fixed-step gradient descent from 0.

    Rows are multiplied by their +/-1 label and scaled by the largest row
    norm before training, so the objective is the averaged logistic loss of
    the folded rows. In 2-D the exact max-margin certificate is computed and
    ``eta=None`` means ``eta_multiplier * eta0``; for other dimensions
    ``eta`` and ``t_max`` must be given.

    Parameters
    ----------
    eta : float or None
        Step size.
    eta_multiplier : float
        Factor on ``eta0`` used when ``eta`` is None.
    t_max : int or None
        Step budget; ``None`` picks the default horizon (2-D only).
    threshold : {"eighth", "two"}
        Loss level defining ``tau_``: ``1/(8 eta)`` or ``2/eta``.
    stop_at_threshold : bool
        Halt ``grace_steps`` steps after the threshold is first reached.
    grace_steps : int
    record_margins : bool
        Keep the per-example margins on ``trajectory_``.
    """

    def __init__(self, eta=None, eta_multiplier=1.0, t_max=None, threshold="eighth",
                 stop_at_threshold=False, grace_steps=0, record_margins=False):
        self.eta = eta
        self.eta_multiplier = eta_multiplier
        self.t_max = t_max
        self.threshold = threshold
        self.stop_at_threshold = stop_at_threshold
        self.grace_steps = grace_steps
        self.record_margins = record_margins

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        if self.classes_.size > 2:
            raise ValueError(f"binary problems only, got {self.classes_.size} classes")
        signs = np.where(y == self.classes_[-1], 1.0, -1.0)
        ds = normalize(X, signs)
        self.scale_ = float(np.max(np.linalg.norm(X, axis=1)))
        cert = max_margin_2d(ds) if ds.d == 2 else None
        if self.eta is not None:
            eta = float(self.eta)
        elif cert is not None:
            eta = self.eta_multiplier * DerivedConstants(1.0, cert.gamma, ds.n).eta0
        else:
            raise ValueError("eta is required when d != 2 (no margin certificate)")
        if cert is None and self.t_max is None:
            raise ValueError("t_max is required when d != 2")
        self.certificate_ = cert
        self.eta_ = eta
        self.constants_ = (DerivedConstants(eta=eta, gamma=cert.gamma, n=ds.n)
                           if cert is not None else None)
        if self.threshold not in ("eighth", "two"):
            raise ValueError(f"threshold must be 'eighth' or 'two', got {self.threshold!r}")
        thr = (1.0 / (8.0 * eta)) if self.threshold == "eighth" else 2.0 / eta
        self.trajectory_ = run(ds, cert, eta, t_max=self.t_max,
                               record_margins=self.record_margins,
                               stop_threshold=thr if self.stop_at_threshold else None,
                               grace_steps=self.grace_steps)
        self.tau_ = transition_time(self.trajectory_, thr)
        self.oscillations_ = (detect_oscillations(self.trajectory_, self.constants_)
                              if cert is not None else [])
        self.n_iter_ = self.trajectory_.T
        self.coef_ = (self.trajectory_.w[-1] / self.scale_)[None, :]
        self.intercept_ = np.zeros(1)
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return X @ self.coef_[0]

    def predict(self, X):
        scores = self.decision_function(X)
        if self.classes_.size == 1:
            return np.full(scores.shape, self.classes_[0])
        return self.classes_[(scores > 0).astype(int)]

    def predict_proba(self, X):
        scores = self.decision_function(X)
        p_neg = sigmoid_weights(scores)
        if self.classes_.size == 1:
            return np.ones((scores.size, 1))
        return np.column_stack([p_neg, 1.0 - p_neg])

    def loss_curve(self):
        check_is_fitted(self)
        return self.trajectory_.F.copy()
