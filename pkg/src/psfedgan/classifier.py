"""Dense softmax classifiers: the global model and the attack judge."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .nnkernel import Network, Rng, adam, apply_update, backward, forward, mlp, softmax, softmax_cross_entropy


def classifier_layers(in_dim, num_classes, hidden=(32,)):
    return mlp([in_dim, *hidden, num_classes], hidden="relu", output="identity")


def train_classifier(net, opt, samples, labels, epochs, batch_size, rng):
    """Minibatch training on softmax cross-entropy.

    Each epoch draws one Fisher-Yates permutation from ``rng`` and walks it in
    consecutive batches (the last one may be short). Returns ``(net, opt)``.
    """
    samples = np.asarray(samples, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    for _ in range(epochs):
        if n == 0:
            break
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            x = samples[idx]
            _, grad = softmax_cross_entropy(forward(net, x), labels[idx])
            grads, _ = backward(net, x, grad)
            params, opt = apply_update(net.params, grads, opt)
            net = net.with_params(params)
    return net, opt


def accuracy(net, samples, labels):
    pred = np.argmax(forward(net, samples), axis=1)
    return float(np.mean(pred == np.asarray(labels))) if len(labels) else float("nan")


class DenseClassifier(ClassifierMixin, BaseEstimator):
    """Scikit-learn wrapper around a dense softmax network.

    ``y`` must hold integer class indices ``0..n_classes-1``; the fitted
    network is exposed as ``network_`` so it can serve as a judge.
    """

    def __init__(self, hidden=(32,), n_classes=None, epochs=20, batch_size=32,
                 learning_rate=1e-3, random_state=0):
        self.hidden = hidden
        self.n_classes = n_classes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float32)
        y = y.astype(np.int64)
        if y.min() < 0:
            raise ValueError("class labels must be non-negative integers")
        n_classes = self.n_classes or int(y.max()) + 1
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = X.shape[1]
        rng = Rng(self.random_state)
        net = Network.initialize(classifier_layers(X.shape[1], n_classes, tuple(self.hidden)), rng)
        self.network_, self.optimizer_ = train_classifier(
            net, adam(self.learning_rate), X, y, self.epochs, self.batch_size, rng)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float32)
        return softmax(forward(self.network_, X))

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]


__all__ = ["DenseClassifier", "accuracy", "classifier_layers", "train_classifier"]
