"""
Soft-margin support vector machine trained with sequential minimal optimization.

The decision function is f(x) = sum_i alpha_i * y_i * k(x_i, x) + b, with
labels -1 (normal) and +1 (fraudulent). Training works on the C-SVM dual;
the hard-margin problem is recovered with a large ``c``.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from marketguard.errors import (InvalidInputError, TrainingError, ConvergenceError, DegenerateModelError,
                                UnsupportedOperationError)

log = logging.getLogger('marketguard')

LINEAR = 'linear'
POLYNOMIAL = 'polynomial'
RBF = 'rbf'
KERNELS = (LINEAR, POLYNOMIAL, RBF)

NORMAL = -1
FRAUDULENT = 1

ETA_FLOOR = 1e-12
# pair steps the finishing phase may take per allowed pass
POLISH_STEPS_PER_PASS = 50


def _finite_number(name, value):
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        raise InvalidInputError('%s must be a number, got %r' % (name, value))
    if not math.isfinite(value):
        raise InvalidInputError('%s must be finite, got %r' % (name, value))


@dataclass(frozen=True)
class Kernel(object):
    variant: str = LINEAR
    degree: int = 3
    offset: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.variant not in KERNELS:
            raise InvalidInputError('unknown kernel %r, expected one of %s' % (self.variant, ', '.join(KERNELS)))
        if self.variant == POLYNOMIAL:
            if isinstance(self.degree, bool) or not isinstance(self.degree, (int, np.integer)) or self.degree < 1:
                raise InvalidInputError('polynomial degree must be an integer >= 1, got %r' % (self.degree,))
            _finite_number('offset', self.offset)
            if self.offset < 0:
                raise InvalidInputError('polynomial offset must be >= 0, got %r' % (self.offset,))
        if self.variant == RBF:
            _finite_number('gamma', self.gamma)
            if self.gamma <= 0:
                raise InvalidInputError('rbf gamma must be > 0, got %r' % (self.gamma,))

    @classmethod
    def linear(cls):
        return cls(LINEAR)

    @classmethod
    def polynomial(cls, degree=3, offset=1.0):
        return cls(POLYNOMIAL, degree=degree, offset=offset)

    @classmethod
    def rbf(cls, gamma):
        return cls(RBF, gamma=gamma)

    def to_dict(self):
        if self.variant == POLYNOMIAL:
            return {'variant': POLYNOMIAL, 'degree': int(self.degree), 'offset': float(self.offset)}
        if self.variant == RBF:
            return {'variant': RBF, 'gamma': float(self.gamma)}
        return {'variant': LINEAR}

    @classmethod
    def from_dict(cls, d):
        variant = d.get('variant')
        if variant == POLYNOMIAL:
            return cls.polynomial(degree=d['degree'], offset=d['offset'])
        if variant == RBF:
            return cls.rbf(d['gamma'])
        return cls(variant)

    def __str__(self):
        if self.variant == POLYNOMIAL:
            return 'polynomial(degree=%d, offset=%g)' % (self.degree, self.offset)
        if self.variant == RBF:
            return 'rbf(gamma=%g)' % self.gamma
        return 'linear'


@dataclass(frozen=True)
class TrainConfig(object):
    c: float = 1.0
    kkt_tol: float = 1e-3
    value_eps: float = 1e-8
    max_passes: int = 200
    rng_seed: int = 0

    def __post_init__(self):
        for name in ('c', 'kkt_tol', 'value_eps'):
            value = getattr(self, name)
            _finite_number(name, value)
            if value <= 0:
                raise InvalidInputError('%s must be > 0, got %r' % (name, value))
        if isinstance(self.max_passes, bool) or not isinstance(self.max_passes, (int, np.integer)) \
                or self.max_passes <= 0:
            raise InvalidInputError('max_passes must be a positive integer, got %r' % (self.max_passes,))
        if isinstance(self.rng_seed, bool) or not isinstance(self.rng_seed, (int, np.integer)) or self.rng_seed < 0:
            raise InvalidInputError('rng_seed must be an unsigned integer, got %r' % (self.rng_seed,))

    def to_dict(self):
        return {'c': float(self.c), 'kkt_tol': float(self.kkt_tol), 'value_eps': float(self.value_eps),
                'max_passes': int(self.max_passes), 'rng_seed': int(self.rng_seed)}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SvmModel(object):
    kernel: Kernel
    support_samples: np.ndarray
    support_labels: np.ndarray
    alphas: np.ndarray
    bias: float
    config: TrainConfig = TrainConfig()

    def __post_init__(self):
        samples = np.array(self.support_samples, dtype=float).reshape(len(self.support_samples), -1)
        labels = np.array(self.support_labels, dtype=int).reshape(-1)
        alphas = np.array(self.alphas, dtype=float).reshape(-1)
        if not (len(samples) == len(labels) == len(alphas)):
            raise InvalidInputError('support samples, labels and alphas differ in length')
        if not np.all(np.isin(labels, (NORMAL, FRAUDULENT))):
            raise InvalidInputError('support labels must be -1 or +1')
        if len(alphas) and not (np.all(np.isfinite(alphas)) and alphas.min() > 0 and alphas.max() <= self.config.c):
            raise InvalidInputError('support alphas must lie in (0, c=%g]' % self.config.c)
        for a in (samples, labels, alphas):
            a.setflags(write=False)
        object.__setattr__(self, 'support_samples', samples)
        object.__setattr__(self, 'support_labels', labels)
        object.__setattr__(self, 'alphas', alphas)
        object.__setattr__(self, 'bias', float(self.bias))

    @property
    def dimension(self):
        return self.support_samples.shape[1]

    @property
    def n_support(self):
        return len(self.alphas)

    @property
    def coefficients(self):
        """alpha_i * y_i for every support sample"""
        return self.alphas * self.support_labels

    def to_dict(self):
        return {
            'kernel': self.kernel.to_dict(),
            'dimension': int(self.dimension),
            'support_samples': self.support_samples.tolist(),
            'support_labels': self.support_labels.tolist(),
            'alphas': self.alphas.tolist(),
            'bias': self.bias,
            'train_config': self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        dim = d['dimension']
        samples = np.array(d['support_samples'], dtype=float).reshape(len(d['support_samples']), dim)
        return cls(kernel=Kernel.from_dict(d['kernel']),
                   support_samples=samples,
                   support_labels=d['support_labels'],
                   alphas=d['alphas'],
                   bias=d['bias'],
                   config=TrainConfig.from_dict(d['train_config']))


@dataclass(frozen=True, eq=False)
class DualSolution(object):
    alphas: np.ndarray
    objective: float
    bias: float


def as_sample(x):
    try:
        a = np.asarray(x, dtype=float)
    except (TypeError, ValueError):
        raise InvalidInputError('sample must be a vector of real numbers')
    if a.ndim != 1:
        raise InvalidInputError('sample must be one-dimensional, got shape %s' % (a.shape,))
    if not np.all(np.isfinite(a)):
        raise InvalidInputError('sample entries must be finite')
    return a


def as_samples(samples, dimension=None):
    rows = [as_sample(x) for x in samples]
    if not rows:
        return np.zeros((0, dimension or 0))
    dims = set(len(r) for r in rows)
    if len(dims) != 1:
        raise InvalidInputError('dimension mismatch: samples have dimensions %s' % sorted(dims))
    X = np.vstack(rows)
    if dimension is not None and X.shape[1] != dimension:
        raise InvalidInputError('dimension mismatch: expected %d, got %d' % (dimension, X.shape[1]))
    return X


def as_labels(labels):
    y = np.asarray(list(labels))
    if y.size and not np.all(np.isin(y, (NORMAL, FRAUDULENT))):
        raise InvalidInputError('labels must be -1 or +1')
    return y.astype(int)


def kernel_eval(kernel, a, b):
    a = as_sample(a)
    b = as_sample(b)
    if a.shape != b.shape:
        raise InvalidInputError('dimension mismatch: %d vs %d' % (len(a), len(b)))
    if kernel.variant == LINEAR:
        return float(np.dot(a, b))
    if kernel.variant == POLYNOMIAL:
        return float((np.dot(a, b) + kernel.offset) ** kernel.degree)
    d = a - b
    return math.exp(-kernel.gamma * float(np.dot(d, d)))


def kernel_matrix(kernel, X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if kernel.variant == LINEAR:
        return X.dot(Y.T)
    if kernel.variant == POLYNOMIAL:
        return (X.dot(Y.T) + kernel.offset) ** kernel.degree
    sq = ((X[:, None, :] - Y[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-kernel.gamma * sq)


def canonical_order(X, y):
    """lexicographic order over (features..., label)"""
    keys = [y] + [X[:, j] for j in reversed(range(X.shape[1]))]
    return np.lexsort(keys)


def bias_from_alphas(K, y, alpha, c, free_eps=0.0):
    """
    Averages the bias over free support vectors (0 < alpha < c). Without free
    ones the bias is the midpoint of the interval the KKT bounds leave open.
    """
    g = y - K.dot(alpha * y)
    free = (alpha > free_eps) & (alpha < c - free_eps)
    if free.any():
        return float(np.mean(g[free]))
    at_zero = alpha <= free_eps
    at_c = ~at_zero
    lower = (at_zero & (y > 0)) | (at_c & (y < 0))
    upper = (at_zero & (y < 0)) | (at_c & (y > 0))
    lb = float(np.max(g[lower])) if lower.any() else None
    ub = float(np.min(g[upper])) if upper.any() else None
    if lb is not None and ub is not None:
        return (lb + ub) / 2.0
    if lb is not None:
        return lb
    if ub is not None:
        return ub
    return 0.0


def kkt_residuals(f, y, alpha, c, bound_eps=0.0):
    r = y * f - 1.0
    at_zero = alpha <= bound_eps
    at_c = alpha >= c - bound_eps
    return np.where(at_zero, np.maximum(0.0, -r),
                    np.where(at_c, np.maximum(0.0, r), np.abs(r)))


def objective_of(K, y, alpha):
    coef = alpha * y
    return float(np.sum(alpha) - 0.5 * coef.dot(K).dot(coef))


class _Smo(object):
    """
    Platt's SMO: the outer loop alternates full sweeps with sweeps over the
    free multipliers; the second index comes from max |E1 - E2| first, then
    from seeded random starts over the free set and over everything.

    Whatever the heuristic leaves open is finished by ``polish``, which
    keeps stepping on the maximal violating pair (second order choice of
    the partner) until the gap between the two sides of the bias closes.
    """

    def __init__(self, K, y, config):
        self.K = K
        self.y = y.astype(float)
        self.m = len(y)
        self.c = float(config.c)
        # half the tolerance leaves room for the final bias averaging
        self.tol = config.kkt_tol / 2.0
        self.eps = config.value_eps
        self.alpha = np.zeros(self.m)
        self.b = 0.0
        self.errors = -self.y.copy()
        self.rng = np.random.default_rng(config.rng_seed)

    def refresh_errors(self):
        self.errors = self.K.dot(self.alpha * self.y) + self.b - self.y

    def snap(self, a):
        if a < self.eps:
            return 0.0
        if a > self.c - self.eps:
            return self.c
        return a

    def take_step(self, i1, i2, min_step=None, eta_floor=None):
        if i1 == i2:
            return False
        a1, a2 = self.alpha[i1], self.alpha[i2]
        y1, y2 = self.y[i1], self.y[i2]
        e1, e2 = self.errors[i1], self.errors[i2]
        c = self.c
        if y1 != y2:
            lo, hi = max(0.0, a2 - a1), min(c, c + a2 - a1)
        else:
            lo, hi = max(0.0, a1 + a2 - c), min(c, a1 + a2)
        if lo >= hi:
            return False
        k11, k12, k22 = self.K[i1, i1], self.K[i1, i2], self.K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta_floor is not None:
            eta = max(eta, eta_floor)
        elif eta <= 0:
            return False
        new2 = self.snap(min(max(a2 + y2 * (e1 - e2) / eta, lo), hi))
        if abs(new2 - a2) <= (self.eps if min_step is None else min_step):
            return False
        new1 = self.snap(min(max(a1 + y1 * y2 * (a2 - new2), 0.0), c))

        d1 = y1 * (new1 - a1)
        d2 = y2 * (new2 - a2)
        b1 = self.b - e1 - d1 * k11 - d2 * k12
        b2 = self.b - e2 - d1 * k12 - d2 * k22
        if 0 < new1 < c:
            b = b1
        elif 0 < new2 < c:
            b = b2
        else:
            b = (b1 + b2) / 2.0
        self.errors += d1 * self.K[i1] + d2 * self.K[i2] + (b - self.b)
        self.alpha[i1] = new1
        self.alpha[i2] = new2
        self.b = b
        return True

    def free_indices(self):
        return np.flatnonzero((self.alpha > 0) & (self.alpha < self.c))

    def examine(self, i2):
        r2 = self.errors[i2] * self.y[i2]
        a2 = self.alpha[i2]
        if not ((r2 < -self.tol and a2 < self.c) or (r2 > self.tol and a2 > 0)):
            return 0
        free = self.free_indices()
        if len(free) > 1:
            i1 = int(free[np.argmax(np.abs(self.errors[free] - self.errors[i2]))])
            if self.take_step(i1, i2):
                return 1
        if len(free):
            for i1 in np.roll(free, -int(self.rng.integers(len(free)))):
                if self.take_step(int(i1), i2):
                    return 1
        for i1 in np.roll(np.arange(self.m), -int(self.rng.integers(self.m))):
            if self.take_step(int(i1), i2):
                return 1
        return 0

    def run(self, max_passes):
        """returns the number of sweeps and whether the heuristic settled"""
        passes = 0
        changed = 0
        examine_all = True
        while changed > 0 or examine_all:
            if passes >= max_passes:
                return passes, False
            passes += 1
            if examine_all:
                self.refresh_errors()
                changed = sum(self.examine(i) for i in range(self.m))
            else:
                changed = sum(self.examine(int(i)) for i in self.free_indices())
            if examine_all:
                examine_all = False
            elif changed == 0:
                examine_all = True
        self.refresh_errors()
        return passes, True

    def violating_pair(self):
        """
        (i, j, gap): i has the largest error among multipliers free to move
        up, j is its second order partner among those free to move down
        """
        y, a, E = self.y, self.alpha, self.errors
        free = (a > 0) & (a < self.c)
        up = free | ((a == 0) & (y < 0)) | ((a == self.c) & (y > 0))
        low = free | ((a == 0) & (y > 0)) | ((a == self.c) & (y < 0))
        if not (up.any() and low.any()):
            return None, None, 0.0
        ups = np.flatnonzero(up)
        i = int(ups[np.argmax(E[ups])])
        gap = float(E[i] - E[low].min())
        cand = np.flatnonzero(low & (E < E[i]))
        if not len(cand):
            return i, None, gap
        eta = np.maximum(self.K[i, i] + self.K[cand, cand] - 2.0 * self.K[i, cand], ETA_FLOOR)
        j = int(cand[np.argmax((E[i] - E[cand]) ** 2 / eta)])
        return i, j, gap

    def polish(self, max_steps):
        """returns the number of pair steps taken and whether the gap closed"""
        self.refresh_errors()
        for step in range(max_steps):
            i, j, gap = self.violating_pair()
            if gap <= self.tol:
                # recheck on fresh errors, the running ones drift
                self.refresh_errors()
                i, j, gap = self.violating_pair()
                if gap <= self.tol:
                    return step, True
            if j is None or not self.take_step(i, j, min_step=0.0, eta_floor=ETA_FLOOR):
                self.refresh_errors()
                return step, False
        self.refresh_errors()
        return max_steps, self.violating_pair()[2] <= self.tol


def _training_set(samples, labels):
    X = as_samples(samples)
    y = as_labels(labels)
    if len(X) != len(y):
        raise InvalidInputError('%d samples but %d labels' % (len(X), len(y)))
    if len(X) < 2:
        raise TrainingError('degenerate labels: need at least 2 samples, got %d' % len(X))
    if not ((y == NORMAL).any() and (y == FRAUDULENT).any()):
        raise TrainingError('degenerate labels: training set holds only class %+d' % y[0])
    return X, y


def train_smo(samples, labels, kernel=None, config=None):
    X, y = _training_set(samples, labels)
    kernel = kernel or Kernel.rbf(1.0 / X.shape[1])
    config = config or TrainConfig()

    order = canonical_order(X, y)
    X, y = X[order], y[order]
    K = kernel_matrix(kernel, X, X)

    smo = _Smo(K, y, config)
    passes, _ = smo.run(config.max_passes)
    budget = config.max_passes * max(smo.m, POLISH_STEPS_PER_PASS)
    steps, _ = smo.polish(budget)

    alpha = smo.alpha
    bias = bias_from_alphas(K, y.astype(float), alpha, config.c)
    keep = alpha > 0
    model = SvmModel(kernel=kernel, support_samples=X[keep], support_labels=y[keep], alphas=alpha[keep],
                     bias=bias, config=config)

    f = K.dot(alpha * y) + bias
    violation = float(np.max(kkt_residuals(f, y, alpha, config.c)))
    log.debug('smo: %d sweeps, %d pair steps, %d support samples, kkt violation %.3g',
              passes, steps, model.n_support, violation)
    if violation > config.kkt_tol:
        why = 'max_passes=%d exhausted' % config.max_passes if steps >= budget else 'no further progress'
        raise ConvergenceError('smo did not converge (%s): kkt violation %.3g > %.3g'
                               % (why, violation, config.kkt_tol),
                               model=model, violation=violation, passes=passes + steps // smo.m)
    return model


def decision_values(model, samples):
    X = as_samples(samples, dimension=model.dimension)
    if not len(X):
        return np.zeros(0)
    if not model.n_support:
        return np.full(len(X), model.bias)
    return kernel_matrix(model.kernel, X, model.support_samples).dot(model.coefficients) + model.bias


def decision_value(model, x):
    x = as_sample(x)
    if len(x) != model.dimension:
        raise InvalidInputError('dimension mismatch: model expects %d, got %d' % (model.dimension, len(x)))
    return float(decision_values(model, x[None, :])[0])


def classify(model, x):
    # a tie on the hyperplane goes to the fraudulent class
    return FRAUDULENT if decision_value(model, x) >= 0 else NORMAL


def margin(model):
    coef = model.coefficients
    S = model.support_samples
    w2 = float(coef.dot(kernel_matrix(model.kernel, S, S)).dot(coef)) if model.n_support else 0.0
    if w2 <= model.config.value_eps:
        raise DegenerateModelError('|w|^2 = %.3g, margin undefined' % w2)
    return 1.0 / math.sqrt(w2)


def primal_weights(model):
    if model.kernel.variant != LINEAR:
        raise UnsupportedOperationError('primal weights exist only for the linear kernel, not %s' % model.kernel)
    if not model.n_support:
        return np.zeros(model.dimension)
    return model.coefficients.dot(model.support_samples)


def dual_objective(model):
    S = model.support_samples
    return objective_of(kernel_matrix(model.kernel, S, S), model.support_labels.astype(float), model.alphas)


def kkt_violation(model, samples, labels, config=None):
    config = config or model.config
    if not len(samples):
        return 0.0
    X = as_samples(samples, dimension=model.dimension)
    y = as_labels(labels)
    if len(X) != len(y):
        raise InvalidInputError('%d samples but %d labels' % (len(X), len(y)))
    lookup = {}
    for s, label, a in zip(model.support_samples, model.support_labels, model.alphas):
        lookup.setdefault((tuple(s.tolist()), int(label)), float(a))
    alpha = np.array([lookup.get((tuple(x.tolist()), int(label)), 0.0) for x, label in zip(X, y)])
    f = decision_values(model, X)
    return float(np.max(kkt_residuals(f, y, alpha, config.c, bound_eps=config.c * config.value_eps)))
