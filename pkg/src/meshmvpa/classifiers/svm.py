"""Soft-margin SVM trained by sequential minimal optimization.

The dual is solved with maximal-violating-pair working sets and second
order selection of the partner index, on a precomputed kernel matrix.
Multiclass problems are split one-vs-one.
"""

import numpy as np

KKT_TOL = 1e-3
_TAU = 1e-12


def kernel_matrix(A, B, kernel, sigma=1.0):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    G = A @ B.T
    if kernel == "linear":
        return G
    if kernel == "rbf":
        d2 = np.einsum("ij,ij->i", A, A)[:, None] + np.einsum("ij,ij->i", B, B)[None, :] - 2.0 * G
        return np.exp(-np.maximum(d2, 0.0) / (2.0 * sigma * sigma))
    raise ValueError(f"unknown kernel {kernel!r}")


def smo(K, y, C, tol=KKT_TOL, max_iter=1_000_000, alpha0=None):
    """Solve the binary dual problem.

    Parameters
    ----------
    K : ndarray, shape (n, n)
        Kernel matrix.
    y : ndarray, shape (n,)
        Labels in {-1, +1}.
    C : float
        Box constraint.
    alpha0 : ndarray, optional
        Feasible starting point (``0 <= alpha0 <= C`` and ``y @ alpha0 == 0``),
        e.g. the solution for a smaller ``C``.

    Returns
    -------
    alpha : ndarray, shape (n,)
    rho : float
        Decision function is ``sum(alpha * y * K[:, x]) - rho``.
    """
    n = len(y)
    y = y.astype(np.float64)
    if alpha0 is None:
        alpha = np.zeros(n)
        grad = -np.ones(n)  # gradient of 0.5 a'Qa - e'a, Q = yy'K
    else:
        alpha = np.array(alpha0, dtype=np.float64)
        grad = y * (K @ (alpha * y)) - 1.0
    diag = np.diag(K).copy()
    pos = y > 0

    for _ in range(max_iter):
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        score = -y * grad
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        g_max = score[i]
        if g_max - score[low].min() < tol:
            break

        cand = low & (score < g_max)
        b = g_max - score[cand]
        a = diag[i] + diag[cand] - 2.0 * K[i, cand]
        a = np.where(a > 0, a, _TAU)
        j = int(np.flatnonzero(cand)[np.argmin(-(b * b) / a)])

        ai_old, aj_old = alpha[i], alpha[j]
        yi, yj = y[i], y[j]
        Qij = yi * yj * K[i, j]
        if yi != yj:
            quad = diag[i] + diag[j] + 2.0 * Qij
            quad = quad if quad > 0 else _TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = diag[i] + diag[j] - 2.0 * Qij
            quad = quad if quad > 0 else _TAU
            delta = (grad[i] - grad[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
                if aj > C:
                    aj, ai = C, total - C
            else:
                if aj < 0:
                    aj, ai = 0.0, total
                if ai < 0:
                    ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        grad += y * (K[:, i] * (yi * (ai - ai_old)) + K[:, j] * (yj * (aj - aj_old)))

    return alpha, _rho(alpha, y, grad, C)


def _rho(alpha, y, grad, C):
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yg[free].mean())
    at_upper = alpha >= C
    ub_mask = np.where(at_upper, y < 0, y > 0)
    lb_mask = ~ub_mask
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    if np.isinf(ub) or np.isinf(lb):
        return float(ub if np.isfinite(ub) else lb)
    return float((ub + lb) / 2.0)


def kkt_residuals(K, y, alpha, rho, C):
    """Violation of the KKT conditions for every multiplier.

    Zero multipliers need margin >= 1, free ones margin == 1, bounded ones
    margin <= 1, where margin is ``y * f(x)``.
    """
    margin = y * (K @ (alpha * y) - rho)
    res = np.where(alpha <= 0, np.maximum(0.0, 1.0 - margin),
                   np.where(alpha >= C, np.maximum(0.0, margin - 1.0), np.abs(margin - 1.0)))
    return res


def fit_ovo(K, y_index, n_classes, C, warm=None):
    """One binary machine per class pair (a < b); class ``a`` is +1.

    Returns a list of ``(a, b, support, coef, rho)`` where ``support`` indexes
    training rows and ``coef = alpha * y`` on them. ``warm`` is the list of
    full multiplier vectors from :func:`fit_ovo_path`, used as starting points.
    """
    return _fit_pairs(K, y_index, n_classes, C, warm)[0]


def fit_ovo_path(K, y_index, n_classes, cs):
    """Machines for each cost in ascending ``cs``, each warm-started from the last."""
    warm = None
    for C in cs:
        machines, warm = _fit_pairs(K, y_index, n_classes, C, warm)
        yield machines


def _fit_pairs(K, y_index, n_classes, C, warm):
    machines, alphas = [], []
    for a, b in ((a, b) for a in range(n_classes) for b in range(a + 1, n_classes)):
        idx = np.flatnonzero((y_index == a) | (y_index == b))
        yy = np.where(y_index[idx] == a, 1.0, -1.0)
        start = None if warm is None else warm[len(alphas)]
        alpha, rho = smo(K[np.ix_(idx, idx)], yy, C, alpha0=start)
        alphas.append(alpha)
        sv = alpha > 0
        machines.append((a, b, idx[sv], (alpha * yy)[sv], rho))
    return machines, alphas


def predict_ovo(K_query, machines, n_classes):
    """Majority vote; ties and zero decision values go to the smaller class."""
    votes = np.zeros((K_query.shape[0], n_classes), dtype=np.int64)
    rows = np.arange(K_query.shape[0])
    for a, b, sv, coef, rho in machines:
        f = K_query[:, sv] @ coef - rho
        winner = np.where(f >= 0, a, b)
        votes[rows, winner] += 1
    return np.argmax(votes, axis=1)
