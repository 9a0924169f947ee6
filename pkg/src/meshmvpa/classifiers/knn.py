"""k-nearest-neighbor voting with deterministic tie-breaking."""

import numpy as np

# query rows per distance block
_BLOCK = 512


def neighbor_order(X_train, X_query, k_max):
    """Indices of the ``k_max`` nearest training rows for each query row.

    Equal distances keep training order, so the smaller index wins.
    """
    X_train = np.asarray(X_train, dtype=np.float64)
    X_query = np.asarray(X_query, dtype=np.float64)
    sq_train = np.einsum("ij,ij->i", X_train, X_train)
    out = np.empty((len(X_query), k_max), dtype=np.int64)
    for lo in range(0, len(X_query), _BLOCK):
        q = X_query[lo:lo + _BLOCK]
        d2 = sq_train[None, :] - 2.0 * q @ X_train.T + np.einsum("ij,ij->i", q, q)[:, None]
        out[lo:lo + len(q)] = np.argsort(d2, axis=1, kind="stable")[:, :k_max]
    return out


def vote(neighbor_labels, n_classes, ks):
    """Majority votes for several k at once.

    Parameters
    ----------
    neighbor_labels : ndarray of int, shape (n_query, k_max)
        Class index of each query's neighbors, nearest first.
    ks : sequence of int

    Returns
    -------
    ndarray, shape (len(ks), n_query); vote ties go to the smallest class index.
    """
    onehot = np.zeros(neighbor_labels.shape + (n_classes,), dtype=np.int32)
    np.put_along_axis(onehot, neighbor_labels[..., None], 1, axis=2)
    counts = np.cumsum(onehot, axis=1)
    return np.stack([np.argmax(counts[:, k - 1, :], axis=1) for k in ks])


def predict_indices(X_train, y_index, n_classes, X_query, ks):
    """Predicted class indices for each k in ``ks``, shape (len(ks), n_query)."""
    order = neighbor_order(X_train, X_query, max(ks))
    return vote(np.asarray(y_index)[order], n_classes, ks)
