"""scikit-learn wrappers around the activation kernels and the dense trainer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .. import kernels
from ..core import ActivationSpec
from .train import Dataset, TrainConfig, build_network, train


def _spec(activation) -> ActivationSpec:
    if isinstance(activation, ActivationSpec):
        return activation
    return ActivationSpec.parse(activation)


class ActivationTransformer(TransformerMixin, BaseEstimator):
    """Element-wise activation as a stateless transformer.

    ``output='derivative'`` returns the slope instead of the value, which is
    handy for inspecting gradient suppression on a feature matrix.
    """

    def __init__(self, activation="gem:n=1", output="value"):
        self.activation = activation
        self.output = output

    def fit(self, X, y=None):
        _spec(self.activation)
        if self.output not in ("value", "derivative"):
            raise ValueError(f"output must be 'value' or 'derivative', got {self.output!r}")
        validate_data(self, X, reset=True)
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = validate_data(self, X, reset=False)
        spec = _spec(self.activation)
        if self.output == "derivative":
            return kernels.apply_backward_direct(np.ones_like(X), X, spec)
        return kernels.apply_forward(X, spec).output


class GemMLPClassifier(ClassifierMixin, BaseEstimator):
    """Dense classifier trained with the package's own backpropagation.

    ``hidden_layers`` layers of ``width`` units share one activation.  The
    training history is kept in ``report_``.
    """

    def __init__(
        self,
        activation="gem:n=1",
        hidden_layers=2,
        width=32,
        optimizer="adamw",
        lr=1e-3,
        epochs=200,
        batch_size=32,
        weight_decay=0.0,
        init_gain="1.0",
        init_bias=1.0,
        seed=42,
    ):
        self.activation = activation
        self.hidden_layers = hidden_layers
        self.width = width
        self.optimizer = optimizer
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.init_gain = init_gain
        self.init_bias = init_bias
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            optimizer=self.optimizer,
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            weight_decay=self.weight_decay,
            seed=self.seed,
            activation=str(_spec(self.activation)),
            depth=self.hidden_layers,
            width=self.width,
            init_gain=str(self.init_gain),
            init_bias=self.init_bias,
        )

    def fit(self, X, y):
        X, y = validate_data(self, X, y, reset=True)
        check_classification_targets(y)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        cfg = self._config()
        self.net_ = build_network(cfg, X.shape[1], len(self.classes_))
        empty = np.empty((0, X.shape[1]))
        self.report_ = train(self.net_, Dataset(X, codes.astype(np.int64), empty, np.empty(0, np.int64)), cfg)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "net_")
        X = validate_data(self, X, reset=False)
        return self.net_.predict(X)

    def predict_proba(self, X):
        logits = self.decision_function(X)
        shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
        return shifted / shifted.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[self.decision_function(X).argmax(axis=1)]

