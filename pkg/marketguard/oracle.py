"""
Independent dense solver for the C-SVM dual, used to check SMO.

    maximize    sum(alpha) - 1/2 alpha' Q alpha,   Q_ij = y_i y_j k(x_i, x_j)
    subject to  0 <= alpha_i <= c,  sum(alpha_i y_i) = 0

Accelerated projected-gradient ascent; the projection onto the box cut by
the equality hyperplane is exact (breakpoint search on the multiplier).
Every few iterations the active set is read off the iterate and the free
block is solved directly, which finishes small problems to round-off.
"""
import logging
import math

import numpy as np

from marketguard.errors import InvalidInputError, OracleError, SizeLimitError
from marketguard.svm import (DualSolution, as_labels, as_samples, bias_from_alphas, kernel_matrix, kkt_residuals,
                             objective_of)

log = logging.getLogger('marketguard')

MAX_ORACLE_SIZE = 12
DEFAULT_MAX_ITER = 20000
POLISH_EVERY = 25
TARGET_RESIDUAL = 1e-8
ACCEPT_RESIDUAL = 1e-6


def project(v, y, c):
    """euclidean projection of v onto {0 <= a <= c, y'a = 0}"""
    bp = np.unique(np.concatenate((y * v, y * (v - c))))
    vals = np.clip(v[None, :] - bp[:, None] * y[None, :], 0.0, c).dot(y)
    # vals is nonincreasing along bp
    k = int(np.argmax(vals <= 0)) if (vals <= 0).any() else len(bp) - 1
    if k == 0 or vals[k] == 0:
        nu = bp[k]
    else:
        lo, hi = bp[k - 1], bp[k]
        flo, fhi = vals[k - 1], vals[k]
        nu = lo + (hi - lo) * flo / (flo - fhi)
    return np.clip(v - nu * y, 0.0, c)


def _polish(Q, y, alpha, c, eps):
    upper = alpha >= c - eps
    lower = (alpha <= eps) & ~upper
    free = ~(upper | lower)
    fixed = np.where(upper, c, 0.0)
    if not free.any():
        return fixed
    F = np.flatnonzero(free)
    B = np.flatnonzero(~free)
    n = len(F)
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = Q[np.ix_(F, F)]
    A[:n, n] = y[F]
    A[n, :n] = y[F]
    rhs = np.empty(n + 1)
    rhs[:n] = 1.0 - Q[np.ix_(F, B)].dot(fixed[B])
    rhs[n] = -y[B].dot(fixed[B])
    sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    cand = fixed.copy()
    cand[F] = sol[:n]
    if (cand[F] < -eps).any() or (cand[F] > c + eps).any():
        return None
    return np.clip(cand, 0.0, c)


def _worst_residual(K, y, alpha, c, eps):
    bias = bias_from_alphas(K, y, alpha, c, free_eps=eps)
    f = K.dot(alpha * y) + bias
    return float(np.max(kkt_residuals(f, y, alpha, c, bound_eps=eps))), bias


def qp_oracle(samples, labels, kernel, c, max_iter=DEFAULT_MAX_ITER):
    X = as_samples(samples)
    y = as_labels(labels).astype(float)
    m = len(X)
    if m != len(y):
        raise InvalidInputError('%d samples but %d labels' % (m, len(y)))
    if m > MAX_ORACLE_SIZE:
        raise SizeLimitError('oracle is limited to %d samples, got %d' % (MAX_ORACLE_SIZE, m))
    if not (isinstance(c, (int, float)) and math.isfinite(c) and c > 0):
        raise InvalidInputError('c must be a finite number > 0, got %r' % (c,))
    if m == 0:
        return DualSolution(alphas=np.zeros(0), objective=0.0, bias=0.0)

    K = kernel_matrix(kernel, X, X)
    Q = np.outer(y, y) * K
    lipschitz = float(np.max(np.linalg.eigvalsh(Q)))
    if lipschitz <= 0:
        lipschitz = 1.0
    alpha = np.zeros(m)
    z = alpha
    t = 1.0
    obj = objective_of(K, y, alpha)
    best, best_res, best_bias = None, math.inf, 0.0
    for it in range(1, max_iter + 1):
        new = project(z + (1.0 - Q.dot(z)) / lipschitz, y, c)
        new_obj = objective_of(K, y, new)
        if new_obj < obj:
            # function restart: drop the momentum and take a plain step
            t = 1.0
            new = project(alpha + (1.0 - Q.dot(alpha)) / lipschitz, y, c)
            new_obj = objective_of(K, y, new)
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        z = new + ((t - 1.0) / t_next) * (new - alpha)
        alpha, obj, t = new, new_obj, t_next

        if it % POLISH_EVERY and it != max_iter:
            continue
        scale = min(c, max(1.0, float(alpha.max())))
        for cand in (_polish(Q, y, alpha, c, 1e-7 * scale), alpha):
            if cand is None or abs(cand.dot(y)) > 1e-9 * scale:
                continue
            eps = 1e-9 * min(c, max(1.0, float(cand.max())))
            res, bias = _worst_residual(K, y, cand, c, eps)
            if res < best_res:
                best, best_res, best_bias = cand, res, bias
        if best_res <= TARGET_RESIDUAL:
            break

    if best is None or best_res > ACCEPT_RESIDUAL:
        raise OracleError('oracle did not converge in %d iterations (kkt residual %.3g)' % (max_iter, best_res))
    log.debug('oracle: %d iterations, residual %.3g', it, best_res)
    return DualSolution(alphas=best, objective=objective_of(K, y, best), bias=best_bias)
