"""L1-penalised linear and logistic models.

Both fitters standardise the design internally (weighted mean and population
standard deviation), solve by cyclic coordinate descent with soft
thresholding on the Gram matrix, and report coefficients on the input scale.
The intercept is never penalised.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .data import Task, fold_ids
from .exceptions import DimensionMismatch, NonFinite, ValidationError

TOL = 1e-7
MAX_SWEEPS = 10_000
LOGIT_CLAMP = 10.0


class NoConvergence(UserWarning):
    """Coordinate descent hit the sweep cap; the best iterate is returned."""


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def _objective(G, c, lam, beta, q):
    obj = 0.0
    for j in range(beta.shape[0]):
        obj += 0.5 * beta[j] * q[j] - c[j] * beta[j] + lam * abs(beta[j])
    return obj


@njit(cache=True)
def _cd_gram(G, c, lam, beta, tol, max_sweeps, hist):
    """Minimise 0.5 b'Gb - c'b + lam |b|_1 in place.

    Columns with ``G[j, j] == 0`` (constant features) stay at zero. ``hist``
    receives the objective after each sweep when it is long enough. Returns
    ``(sweeps, converged)``.
    """
    p = beta.shape[0]
    q = G @ beta
    for sweep in range(max_sweeps):
        max_delta = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            old = beta[j]
            new = _soft(c[j] - q[j] + gjj * old, lam) / gjj
            if new != old:
                d = new - old
                beta[j] = new
                for k in range(p):
                    q[k] += d * G[k, j]
                if abs(d) > max_delta:
                    max_delta = abs(d)
        if sweep < hist.shape[0]:
            hist[sweep] = _objective(G, c, lam, beta, q)
        if max_delta < tol:
            return sweep + 1, True
    return max_sweeps, False


@njit(cache=True)
def _cd_path(G, c, lambdas, tol, max_sweeps):
    p = c.shape[0]
    L = lambdas.shape[0]
    betas = np.zeros((L, p))
    ok = np.ones(L, dtype=np.bool_)
    beta = np.zeros(p)
    hist = np.empty(0)
    for i in range(L):
        _, conv = _cd_gram(G, c, lambdas[i], beta, tol, max_sweeps, hist)
        ok[i] = conv
        betas[i] = beta
    return betas, ok


@njit(cache=True)
def _sigmoid(eta):
    out = np.empty(eta.shape[0])
    for i in range(eta.shape[0]):
        e = eta[i]
        if e >= 0:
            out[i] = 1.0 / (1.0 + np.exp(-e))
        else:
            z = np.exp(e)
            out[i] = z / (1.0 + z)
    return out


@njit(cache=True)
def _logistic_objective(X, y, w, alpha, beta, lam):
    eta = alpha + X @ beta
    loss = 0.0
    for i in range(eta.shape[0]):
        e = eta[i]
        # log(1 + exp(e)) - y e, computed stably
        if e > 0:
            sp = e + np.log1p(np.exp(-e))
        else:
            sp = np.log1p(np.exp(e))
        loss += w[i] * (sp - y[i] * e)
    return loss + lam * np.sum(np.abs(beta))


@njit(cache=True)
def _logistic_fit(X, y, w, lam, alpha, beta, tol, max_sweeps, max_irls):
    """Penalised IRLS on standardised ``X``; ``w`` sums to one. Updates in place."""
    n, p = X.shape
    hist = np.empty(0)
    obj = _logistic_objective(X, y, w, alpha, beta, lam)
    converged = False
    for _ in range(max_irls):
        eta = alpha + X @ beta
        prob = _sigmoid(eta)
        W = np.empty(n)
        z = np.empty(n)
        for i in range(n):
            v = prob[i] * (1.0 - prob[i])
            if v < 1e-5:
                v = 1e-5
            W[i] = w[i] * v
            z[i] = eta[i] + (y[i] - prob[i]) / v
        sw = W.sum()
        xm = (W @ X) / sw
        zm = (W @ z) / sw
        Xc = X - xm
        WXc = Xc * W.reshape(-1, 1)
        G = Xc.T @ WXc
        c = WXc.T @ (z - zm)
        nb = beta.copy()
        _cd_gram(G, c, lam, nb, tol, max_sweeps, hist)
        na = zm - xm @ nb
        # step halving keeps the penalised objective monotone
        step = 1.0
        cand_b = nb
        cand_a = na
        new_obj = _logistic_objective(X, y, w, cand_a, cand_b, lam)
        tries = 0
        while new_obj > obj + 1e-12 and tries < 30:
            step *= 0.5
            cand_b = beta + step * (nb - beta)
            cand_a = alpha + step * (na - alpha)
            new_obj = _logistic_objective(X, y, w, cand_a, cand_b, lam)
            tries += 1
        if new_obj > obj + 1e-12:
            converged = True
            break
        delta = abs(cand_a - alpha)
        for j in range(p):
            d = abs(cand_b[j] - beta[j])
            if d > delta:
                delta = d
        alpha = cand_a
        beta[:] = cand_b
        obj = new_obj
        if delta < tol:
            converged = True
            break
    return alpha, converged


@njit(cache=True)
def _logistic_path(X, y, w, lambdas, alpha0, tol, max_sweeps, max_irls):
    p = X.shape[1]
    L = lambdas.shape[0]
    alphas = np.empty(L)
    betas = np.zeros((L, p))
    ok = np.ones(L, dtype=np.bool_)
    beta = np.zeros(p)
    alpha = alpha0
    for i in range(L):
        alpha, conv = _logistic_fit(X, y, w, lambdas[i], alpha, beta, tol, max_sweeps, max_irls)
        alphas[i] = alpha
        betas[i] = beta
        ok[i] = conv
    return alphas, betas, ok


# ---------------------------------------------------------------------------
# model type


@dataclass(frozen=True)
class LinearModel:
    intercept: float
    coefficients: np.ndarray
    task: Task
    lam: float = 0.0
    column_names: tuple | None = None
    converged: bool = field(default=True, compare=False)

    @property
    def p(self) -> int:
        return self.coefficients.shape[0]

    def decision_function(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1) if x.size else x.reshape(0, self.p)
        if x.shape[1] != self.p:
            raise DimensionMismatch(f"model has {self.p} coefficients, input has {x.shape[1]} columns")
        return self.intercept + x @ self.coefficients

    def predict(self, x) -> np.ndarray:
        eta = self.decision_function(x)
        if self.task is Task.CLASSIFICATION:
            return _sigmoid(np.ascontiguousarray(eta, dtype=float))
        return eta

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.coefficients))

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "intercept": float(self.intercept),
            "coefficients": [float(v) for v in self.coefficients],
            "lambda": float(self.lam),
            "column_names": list(self.column_names) if self.column_names is not None else None,
        }

    @classmethod
    def from_dict(cls, d) -> "LinearModel":
        names = d.get("column_names")
        return cls(intercept=float(d["intercept"]),
                   coefficients=np.asarray(d["coefficients"], dtype=float),
                   task=Task.parse(d["task"]), lam=float(d.get("lambda", 0.0)),
                   column_names=tuple(names) if names is not None else None)


def predict_linear(model: LinearModel, x) -> np.ndarray:
    return model.predict(x)


def intercept_only(y, task, p: int, column_names=None, lam: float = np.inf) -> LinearModel:
    """Constant model: mean for regression, clamped logit of the class rate otherwise."""
    task = Task.parse(task)
    y = np.asarray(y, dtype=float)
    if task is Task.CLASSIFICATION:
        rate = float(y.mean()) if y.size else 0.5
        a = _clamped_logit(rate)
    else:
        a = float(y.mean()) if y.size else 0.0
    return LinearModel(a, np.zeros(p), task, lam if np.isfinite(lam) else 0.0, column_names)


def _clamped_logit(rate: float) -> float:
    if rate <= 0.0:
        return -LOGIT_CLAMP
    if rate >= 1.0:
        return LOGIT_CLAMP
    return float(np.clip(np.log(rate / (1.0 - rate)), -LOGIT_CLAMP, LOGIT_CLAMP))


# ---------------------------------------------------------------------------
# design preparation


def _check_xy(x, y):
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"x {x.shape} and y {y.shape} do not align")
    if x.shape[0] < 1:
        raise ValidationError("need at least one row")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise NonFinite("inputs contain NaN or infinite values")
    return x, y


class _Design:
    """Weighted standardisation of a design matrix."""

    def __init__(self, x, w):
        self.w = w
        self.mean = w @ x
        xc = x - self.mean
        var = w @ (xc * xc)
        scale = np.sqrt(var)
        tiny = 1e-10 * np.maximum(1.0, np.abs(self.mean))
        self.active = scale > tiny
        self.scale = np.where(self.active, scale, 1.0)
        self.z = np.where(self.active, xc / self.scale, 0.0)

    def unscale(self, beta_std):
        return np.where(self.active, beta_std / self.scale, 0.0)


def _weights(n, sample_weight):
    if sample_weight is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(sample_weight, dtype=float)
    if w.shape != (n,) or (w < 0).any() or not np.isfinite(w).all() or w.sum() <= 0:
        raise ValidationError("sample_weights must be a finite non-negative vector with positive sum")
    return w / w.sum()


def _lasso_moments(x, y, w):
    des = _Design(x, w)
    ym = float(w @ y)
    wz = des.z * w[:, None]
    G = des.z.T @ wz
    c = wz.T @ (y - ym)
    return des, ym, np.ascontiguousarray(G), np.ascontiguousarray(c)


def lambda_max(x, y, task=Task.REGRESSION, sample_weight=None) -> float:
    """Smallest penalty at which every coefficient is zero."""
    x, y = _check_xy(x, y)
    w = _weights(x.shape[0], sample_weight)
    des = _Design(x, w)
    ym = float(w @ y)
    return float(np.max(np.abs((des.z * w[:, None]).T @ (y - ym)), initial=0.0))


@dataclass(frozen=True)
class LambdaPath:
    values: np.ndarray
    selection: str = "cv"
    folds: int = 5

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1 or (v < 0).any() or (v.size > 1 and (np.diff(v) >= 0).any()):
            raise ValidationError("lambda path must be a non-empty strictly decreasing vector")
        object.__setattr__(self, "values", v)


def default_path(x, y, task=Task.REGRESSION, n_lambda: int = 20, ratio: float = 0.01,
                 sample_weight=None) -> LambdaPath:
    """Geometric path from ``lambda_max`` down to ``ratio * lambda_max``."""
    lmax = lambda_max(x, y, task, sample_weight)
    if lmax <= 0.0:
        return LambdaPath(np.array([0.0]))
    return LambdaPath(np.geomspace(lmax, lmax * ratio, n_lambda))


# ---------------------------------------------------------------------------
# public fitters


def fit_lasso(x, y, lam: float, sample_weights=None, *, tol: float = TOL,
              max_sweeps: int = MAX_SWEEPS, column_names=None, return_history: bool = False):
    """Weighted Lasso by cyclic coordinate descent.

    Minimises ``(1/2) sum_i w_i (y_i - a - x_i b)^2 + lam * |b|_1`` with weights
    normalised to sum to one (plain ``1/n`` when unweighted), on standardised
    columns. With ``return_history`` the per-sweep objective is also returned.
    """
    x, y = _check_xy(x, y)
    if lam < 0:
        raise ValidationError("lambda must be non-negative")
    w = _weights(x.shape[0], sample_weights)
    des, ym, G, c = _lasso_moments(x, y, w)
    beta = np.zeros(x.shape[1])
    hist = np.empty(max_sweeps if return_history else 0)
    sweeps, conv = _cd_gram(G, c, float(lam), beta, tol, max_sweeps, hist)
    if not conv:
        warnings.warn(f"lasso did not converge in {max_sweeps} sweeps", NoConvergence, stacklevel=2)
    coef = des.unscale(beta)
    model = LinearModel(ym - float(des.mean @ coef), coef, Task.REGRESSION, float(lam),
                        column_names, conv)
    if return_history:
        return model, hist[:min(sweeps, max_sweeps)].copy()
    return model


def logistic_loss_grad(intercept, coefficients, x, y):
    """Mean negative Bernoulli log-likelihood and its gradient ``(d_intercept, d_coef)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    eta = intercept + x @ np.asarray(coefficients, dtype=float)
    loss = float(np.mean(np.logaddexp(0.0, eta) - y * eta))
    r = _sigmoid(np.ascontiguousarray(eta)) - y
    return loss, float(r.mean()), x.T @ r / x.shape[0]


def fit_logistic_l1(x, y, lam: float, *, tol: float = TOL, max_sweeps: int = MAX_SWEEPS,
                    max_irls: int = 100, column_names=None, sample_weights=None) -> LinearModel:
    """L1-penalised logistic regression by penalised IRLS.

    A single-class ``y`` gives the intercept-only model with the logit of the
    class rate clamped to +/-10.
    """
    x, y = _check_xy(x, y)
    if lam < 0:
        raise ValidationError("lambda must be non-negative")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValidationError("logistic targets must be 0/1")
    p = x.shape[1]
    w = _weights(x.shape[0], sample_weights)
    rate = float(w @ y)
    if rate <= 0.0 or rate >= 1.0:
        return intercept_only(y, Task.CLASSIFICATION, p, column_names, lam)
    des = _Design(x, w)
    beta = np.zeros(p)
    alpha, conv = _logistic_fit(des.z, y, w, float(lam), _clamped_logit(rate), beta,
                                tol, max_sweeps, max_irls)
    if not conv:
        warnings.warn("logistic fit did not converge", NoConvergence, stacklevel=2)
    coef = des.unscale(beta)
    return LinearModel(float(alpha - des.mean @ coef), coef, Task.CLASSIFICATION, float(lam),
                       column_names, conv)


def _path_models(x, y, task, lambdas, w):
    """Intercepts and raw-scale coefficients along ``lambdas`` (warm started)."""
    if task is Task.CLASSIFICATION:
        rate = float(w @ y)
        if rate <= 0.0 or rate >= 1.0:
            a = _clamped_logit(rate)
            return np.full(lambdas.size, a), np.zeros((lambdas.size, x.shape[1]))
        des = _Design(x, w)
        alphas, betas, _ = _logistic_path(des.z, y, w, lambdas, _clamped_logit(rate),
                                          TOL, MAX_SWEEPS, 100)
        coefs = np.where(des.active, betas / des.scale, 0.0)
        return alphas - coefs @ des.mean, coefs
    des, ym, G, c = _lasso_moments(x, y, w)
    betas, _ = _cd_path(G, c, lambdas, TOL, MAX_SWEEPS)
    coefs = np.where(des.active, betas / des.scale, 0.0)
    return ym - coefs @ des.mean, coefs


def _heldout_loss(task, y, eta):
    """Summed held-out loss per path point; ``eta`` is (n, L)."""
    if task is Task.CLASSIFICATION:
        # log-loss from the linear predictor, numerically stable
        return np.sum(np.logaddexp(0.0, eta) - y[:, None] * eta, axis=0)
    r = y[:, None] - eta
    return np.sum(r * r, axis=0)


def cv_path_error(x, y, task, path: LambdaPath, folds: int = 5, seed: int = 0):
    """Mean held-out loss at each path value (squared error or log-loss)."""
    x, y = _check_xy(x, y)
    task = Task.parse(task)
    lambdas = np.ascontiguousarray(path.values)
    n = x.shape[0]
    ids = fold_ids(n, folds, seed, y if task is Task.CLASSIFICATION else None)
    total = np.zeros(lambdas.size)
    for f in range(folds):
        te = ids == f
        tr = ~te
        xtr, ytr = x[tr], y[tr]
        a, b = _path_models(xtr, ytr, task, lambdas, np.full(xtr.shape[0], 1.0 / xtr.shape[0]))
        eta = x[te] @ b.T + a
        total += _heldout_loss(task, y[te], eta)
    return total / n


def _argmin_prefer_first(err):
    best = np.min(err)
    tol = 1e-12 * max(1.0, abs(best))
    return int(np.flatnonzero(err <= best + tol)[0])


def select_lambda(x, y, task, path: LambdaPath, folds: int = 5, seed: int = 0) -> float:
    """Path value with the lowest CV loss; ties go to the larger penalty."""
    if path.values.size == 1:
        return float(path.values[0])
    err = cv_path_error(x, y, task, path, folds, seed)
    return float(path.values[_argmin_prefer_first(err)])


def fit_cv(x, y, task, *, n_lambda: int = 20, ratio: float = 0.01, folds: int = 5,
           seed: int = 0, column_names=None) -> LinearModel:
    """Fit with the penalty chosen by ``folds``-fold CV over the default path.

    Sites with fewer rows than folds use leave-one-out; fewer than two rows,
    or single-class targets, give the intercept-only model.
    """
    task = Task.parse(task)
    x, y = _check_xy(x, y)
    n, p = x.shape
    if n < 2:
        return intercept_only(y, task, p, column_names)
    if task is Task.CLASSIFICATION and np.unique(y).size < 2:
        return intercept_only(y, task, p, column_names)
    path = default_path(x, y, task, n_lambda, ratio)
    lambdas = np.ascontiguousarray(path.values)
    if lambdas.size == 1:
        return intercept_only(y, task, p, column_names, lambdas[0])
    k = min(folds, n)
    if task is Task.CLASSIFICATION:
        k = min(k, int(np.bincount(y.astype(np.intp)).min()))
    if k < 2:
        lam_idx = 0
    else:
        lam_idx = _argmin_prefer_first(cv_path_error(x, y, task, path, k, seed))
    a, b = _path_models(x, y, task, lambdas[: lam_idx + 1], np.full(n, 1.0 / n))
    return LinearModel(float(a[-1]), b[-1].copy(), task, float(lambdas[lam_idx]), column_names)


def fit_fixed(x, y, task, lam: float, column_names=None) -> LinearModel:
    task = Task.parse(task)
    if task is Task.CLASSIFICATION:
        return fit_logistic_l1(x, y, lam, column_names=column_names)
    return fit_lasso(x, y, lam, column_names=column_names)
