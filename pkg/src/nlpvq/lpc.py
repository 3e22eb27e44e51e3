"""Scalar linear predictor baseline (autocorrelation method).

Coefficients come from the Levinson-Durbin recursion on the windowed
autocorrelation sequence; reflection coefficients are clamped to
(-0.999, 0.999) so the synthesis filter stays minimum-phase even on
degenerate input, which matters when the predictor runs inside a
feedback codec loop.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_float_vector

DEFAULT_ORDER = 10
REFLECTION_CLAMP = 0.999


@dataclass(frozen=True)
class LinearPredictor:
    """Forward predictor x_hat[n] = sum_i coefficients[i] * x[n-1-i]
    (coefficients indexed most recent first)."""

    coefficients: np.ndarray
    reflection: np.ndarray
    degenerate: bool = False  # all-zero history, coefficients forced to zero

    def __post_init__(self):
        coeff = as_float_vector(self.coefficients, "coefficients")
        coeff.setflags(write=False)
        object.__setattr__(self, "coefficients", coeff)
        object.__setattr__(self, "reflection",
                           np.asarray(self.reflection, dtype=np.float64))

    @property
    def order(self):
        return self.coefficients.shape[0]


def _autocorrelation(samples, order):
    n = samples.shape[0]
    return np.array([samples[: n - k] @ samples[k:] for k in range(order + 1)])


def fit_linear_predictor(samples, order=DEFAULT_ORDER):
    """Fit order coefficients that minimize forward-prediction SSE in the
    autocorrelation formulation over the given history.

    Needs at least 2*order samples. An all-zero history yields zero
    coefficients with the ``degenerate`` flag set.
    """
    x = as_float_vector(samples, "samples")
    if x.shape[0] < 2 * order:
        raise ValueError(
            f"need at least {2 * order} samples to fit order {order}, "
            f"got {x.shape[0]}"
        )
    r = _autocorrelation(x, order)
    if r[0] <= 0.0:
        return LinearPredictor(
            coefficients=np.zeros(order),
            reflection=np.zeros(order),
            degenerate=True,
        )

    a = np.zeros(order)
    reflection = np.zeros(order)
    energy = r[0]
    for m in range(order):
        # k = (r[m+1] - sum_j a[j] * r[m-j]) / E, clamped for stability
        acc = r[m + 1] - (a[:m] @ r[m:0:-1] if m > 0 else 0.0)
        k = acc / energy if energy > 0 else 0.0
        k = float(np.clip(k, -REFLECTION_CLAMP, REFLECTION_CLAMP))
        reflection[m] = k
        new_a = a.copy()
        new_a[m] = k
        new_a[:m] = a[:m] - k * a[:m][::-1]
        a = new_a
        energy *= 1.0 - k * k
        if energy <= 0.0:
            energy = np.finfo(float).tiny
    return LinearPredictor(coefficients=a, reflection=reflection)


def predict_linear(predictor, context):
    """One-step prediction from order past samples, most recent first."""
    ctx = as_float_vector(context, "context", length=predictor.order)
    return float(predictor.coefficients @ ctx)


class LinearScalarPredictor(BaseEstimator):
    """Estimator facade over the autocorrelation LPC fit.

    fit() takes the 1-D sample history; predict() takes rows of ``order``
    past samples (most recent first) and returns one prediction per row.
    """

    def __init__(self, order=DEFAULT_ORDER):
        self.order = order

    def fit(self, X, y=None):
        self.predictor_ = fit_linear_predictor(np.ravel(X), order=self.order)
        self.coefficients_ = self.predictor_.coefficients
        return self

    def predict(self, X):
        check_is_fitted(self, "predictor_")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.array([predict_linear(self.predictor_, row) for row in X])
