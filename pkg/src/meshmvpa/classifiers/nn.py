"""Backpropagation network: optional sigmoid hidden layer, softmax output.

Trained by full-batch gradient descent on the mean cross-entropy.
"""

import numpy as np
from scipy.special import expit, log_softmax, softmax

INIT_RANGE = 0.1


def init_params(n_features, n_hidden, n_classes, seed):
    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)  # noqa: E731
    if n_hidden == 0:
        return {"W1": u(n_features, n_classes), "b1": u(n_classes)}
    return {"W1": u(n_features, n_hidden), "b1": u(n_hidden),
            "W2": u(n_hidden, n_classes), "b2": u(n_classes)}


def logits(params, X):
    if "W2" not in params:
        return X @ params["W1"] + params["b1"]
    H = expit(X @ params["W1"] + params["b1"])
    return H @ params["W2"] + params["b2"]


def loss_and_grad(params, X, y_index):
    """Mean cross-entropy and its gradient with respect to every parameter."""
    n = len(X)
    Y = np.zeros((n, params["b2" if "W2" in params else "b1"].size))
    Y[np.arange(n), y_index] = 1.0
    if "W2" not in params:
        Z = X @ params["W1"] + params["b1"]
        loss = -(Y * log_softmax(Z, axis=1)).sum() / n
        dZ = (softmax(Z, axis=1) - Y) / n
        return loss, {"W1": X.T @ dZ, "b1": dZ.sum(axis=0)}
    H = expit(X @ params["W1"] + params["b1"])
    Z = H @ params["W2"] + params["b2"]
    loss = -(Y * log_softmax(Z, axis=1)).sum() / n
    dZ = (softmax(Z, axis=1) - Y) / n
    dH = dZ @ params["W2"].T * H * (1.0 - H)
    return loss, {"W1": X.T @ dH, "b1": dH.sum(axis=0), "W2": H.T @ dZ, "b2": dZ.sum(axis=0)}


def train(X, y_index, n_classes, n_hidden, learning_rate, epochs, seed):
    params = init_params(X.shape[1], n_hidden, n_classes, seed)
    for _ in range(epochs):
        _, grads = loss_and_grad(params, X, y_index)
        for name, g in grads.items():
            params[name] -= learning_rate * g
    return params
