"""Gaussian naive Bayes with either a normal or a kernel-density likelihood per feature."""

import numpy as np
from scipy.special import logsumexp

FLOOR = 1e-9
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def fit_gaussian(X, y_index, n_classes):
    """Per-class feature means and variances (unbiased, floored)."""
    F = X.shape[1]
    means = np.empty((n_classes, F))
    variances = np.empty((n_classes, F))
    for c in range(n_classes):
        Xc = X[y_index == c]
        if len(Xc) == 0:
            # absent class; log_prior is -inf so it never wins
            means[c], variances[c] = 0.0, 1.0
            continue
        means[c] = Xc.mean(axis=0)
        variances[c] = Xc.var(axis=0, ddof=1) if len(Xc) > 1 else 0.0
    return means, np.maximum(variances, FLOOR)


def silverman_bandwidth(Xc):
    """1.06 * std * m**(-1/5) per feature, floored."""
    m = len(Xc)
    std = Xc.std(axis=0, ddof=1) if m > 1 else np.zeros(Xc.shape[1])
    return np.maximum(1.06 * std * m ** (-0.2), FLOOR)


def log_prior(y_index, n_classes):
    counts = np.bincount(y_index, minlength=n_classes)
    with np.errstate(divide="ignore"):
        return np.log(counts / counts.sum())


def gaussian_log_likelihood(X, means, variances):
    """Joint log-likelihood of each row under each class, shape (n, C)."""
    out = np.empty((len(X), len(means)))
    for c in range(len(means)):
        z = (X - means[c]) ** 2 / variances[c]
        out[:, c] = -0.5 * z.sum(axis=1) - 0.5 * np.log(variances[c]).sum() - X.shape[1] * _LOG_SQRT_2PI
    return out


def kde_log_likelihood(X, stores, bandwidths, block=64):
    """Naive-Bayes KDE log-likelihood, shape (n, C).

    ``stores[c]`` holds the training rows of class ``c``; each feature gets
    an independent one-dimensional Gaussian kernel density.
    """
    out = np.empty((len(X), len(stores)))
    for c, (S, h) in enumerate(zip(stores, bandwidths)):
        m = len(S)
        const = -np.log(h).sum() - X.shape[1] * (_LOG_SQRT_2PI + np.log(m))
        for lo in range(0, len(X), block):
            q = X[lo:lo + block]
            z = (q[:, None, :] - S[None, :, :]) / h  # (b, m, F)
            out[lo:lo + len(q), c] = logsumexp(-0.5 * z * z, axis=1).sum(axis=1) + const
    return out


def posteriors(log_joint):
    """Normalize per-row log joint scores into class posteriors."""
    return np.exp(log_joint - logsumexp(log_joint, axis=1, keepdims=True))
