"""Epsilon-insensitive support vector regression solved in the dual.

The dual is written over ``2l`` variables ``a = [alpha, alpha*]``::

    min 0.5 a'Qa + p'a   s.t.  s'a = 0,  0 <= a <= C

with signs ``s = [+1]*l + [-1]*l``, ``p = [eps - y, eps + y]`` and
``Q_ij = s_i s_j K(x_i, x_j)``. Pairs are optimized analytically (SMO) with
second-order working-set selection until the maximal KKT violation
``m(a) - M(a)`` drops below ``tol``.
"""
from __future__ import annotations

import logging

import numpy as np

from ..errors import InvalidHyperparameterError
from .base import Regressor, check_xy

log = logging.getLogger(__name__)

TAU = 1e-12
SVR_DEFAULTS = {
    "C": 1.0, "kernel": "rbf", "epsilon": 0.1, "sigma2": None,
    "tol": 1e-3, "max_iter": None, "scale_target": True,
}
_PRECOMPUTE_LIMIT = 4000


def rbf_kernel(A, B, sigma2):
    sq = (A * A).sum(1)[:, None] - 2.0 * A @ B.T + (B * B).sum(1)[None, :]
    return np.exp(-np.maximum(sq, 0.0) / (2.0 * sigma2))


def linear_kernel(A, B):
    return A @ B.T


class _KernelRows:
    def __init__(self, X, kernel):
        self.X = X
        self.kernel = kernel
        self.full = kernel(X, X) if len(X) <= _PRECOMPUTE_LIMIT else None
        self.cache = {}

    def row(self, i):
        if self.full is not None:
            return self.full[i]
        r = self.cache.get(i)
        if r is None:
            if len(self.cache) > 256:
                self.cache.clear()
            r = self.cache[i] = self.kernel(self.X[i : i + 1], self.X)[0]
        return r

    def diag(self):
        if self.full is not None:
            return np.diag(self.full).copy()
        return np.array([self.kernel(self.X[i : i + 1], self.X[i : i + 1])[0, 0]
                         for i in range(len(self.X))])


def solve_svr_dual(K, y, C, epsilon, tol=1e-3, max_iter=None):
    """SMO on the ``2l``-variable dual. ``K`` is a :class:`_KernelRows`.

    Returns ``(alpha, grad, rho, n_iter)`` where the regression function is
    ``sum_i (alpha_i - alpha*_i) K(x_i, x) - rho``.
    """
    l = len(y)
    s = np.r_[np.ones(l), -np.ones(l)]
    p = np.r_[epsilon - y, epsilon + y]
    idx = np.r_[np.arange(l), np.arange(l)]
    a = np.zeros(2 * l)
    G = p.copy()
    kd = K.diag()
    QD = kd[idx]
    if max_iter is None:
        max_iter = max(10_000_000, 100 * l)
    it = 0
    while it < max_iter:
        up = ((s > 0) & (a < C)) | ((s < 0) & (a > 0))
        low = ((s > 0) & (a > 0)) | ((s < 0) & (a < C))
        minus_sG = -s * G
        cand = np.where(up, minus_sG, -np.inf)
        i = int(np.argmax(cand))
        Gmax = cand[i]
        Gmax2 = np.max(np.where(low, -minus_sG, -np.inf))
        if Gmax + Gmax2 < tol or not np.isfinite(Gmax):
            break
        Ki = K.row(idx[i])[idx]
        grad_diff = Gmax + s * G  # = Gmax - (-s_j G_j)
        ok = low & (grad_diff > 0)
        if not ok.any():
            break
        quad = QD[i] + QD - 2.0 * Ki
        quad = np.where(quad > 0, quad, TAU)
        obj = np.where(ok, -(grad_diff * grad_diff) / quad, np.inf)
        j = int(np.argmin(obj))
        it += 1

        Qi = s[i] * s * Ki
        Kj = K.row(idx[j])[idx]
        Qj = s[j] * s * Kj
        ai_old, aj_old = a[i], a[j]
        if s[i] != s[j]:
            q = QD[i] + QD[j] + 2.0 * Qi[j]
            q = q if q > 0 else TAU
            delta = (-G[i] - G[j]) / q
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = -diff
            if diff > 0:  # C_i == C_j
                if a[i] > C:
                    a[i] = C
                    a[j] = C - diff
            elif a[j] > C:
                a[j] = C
                a[i] = C + diff
        else:
            q = QD[i] + QD[j] - 2.0 * Qi[j]
            q = q if q > 0 else TAU
            delta = (G[i] - G[j]) / q
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = total - C
            elif a[j] < 0:
                a[j] = 0.0
                a[i] = total
            if total > C:
                if a[j] > C:
                    a[j] = C
                    a[i] = total - C
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = total
        G += Qi * (a[i] - ai_old) + Qj * (a[j] - aj_old)
    else:
        log.warning("SVR solver hit max_iter=%d before reaching tol=%g", max_iter, tol)
    return a, G, _rho(a, G, s, C), it


def _rho(a, G, s, C):
    yG = s * G
    at_upper = a >= C
    at_lower = a <= 0
    free = ~at_upper & ~at_lower
    if free.any():
        return float(yG[free].mean())
    ub_mask = (at_upper & (s < 0)) | (at_lower & (s > 0))
    lb_mask = (at_upper & (s > 0)) | (at_lower & (s < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2)


def kkt_violations(a, G, rho, C):
    """Per-variable KKT violation of the dual solution given the offset ``rho``."""
    l = len(a) // 2
    s = np.r_[np.ones(l), -np.ones(l)]
    yG = s * G
    at_upper = a >= C
    at_lower = a <= 0
    free = ~at_upper & ~at_lower
    need_ge = (at_lower & (s > 0)) | (at_upper & (s < 0))  # s*G >= rho
    need_le = (at_lower & (s < 0)) | (at_upper & (s > 0))  # s*G <= rho
    v = np.zeros(len(a))
    v[free] = np.abs(yG[free] - rho)
    v[need_ge] = np.maximum(0.0, rho - yG[need_ge])
    v[need_le] = np.maximum(0.0, yG[need_le] - rho)
    return v


class SvrRegressor(Regressor):
    family = "svr"

    def __init__(self, support, coef, rho, kernel, y_min, y_span, hyperparams, n_features,
                 diagnostics=None):
        super().__init__(hyperparams, n_features)
        self.support = support
        self.coef = coef
        self.rho = float(rho)
        self.kernel_params = kernel
        self.y_min = float(y_min)
        self.y_span = float(y_span)
        self.diagnostics = diagnostics or {}

    def _kernel(self, A, B):
        name, sigma2 = self.kernel_params
        return rbf_kernel(A, B, sigma2) if name == "rbf" else linear_kernel(A, B)

    def _predict(self, X):
        if len(self.coef):
            f = self._kernel(X, self.support) @ self.coef - self.rho
        else:
            f = np.full(len(X), -self.rho)
        return self.y_min + self.y_span * f

    @property
    def n_support(self):
        return len(self.coef)

    def kkt_residuals(self):
        d = self.diagnostics
        return kkt_violations(d["alpha"], d["grad"], self.rho, self.hyperparams["C"])


def fit_svr(X, y, hp=None, seed=None):
    """Fit epsilon-SVR with a linear or RBF kernel.

    RBF uses ``exp(-||a-b||^2 / (2 sigma2))`` with ``sigma2`` defaulting to the
    feature count. With ``scale_target`` the target is min-max scaled to
    [0, 1] for the fit, so ``epsilon`` is in scaled units.
    """
    X, y = check_xy(X, y)
    hp = {**SVR_DEFAULTS, **(hp or {})}
    C = float(hp["C"])
    if not C > 0:
        raise InvalidHyperparameterError("C must be positive")
    if hp["epsilon"] < 0:
        raise InvalidHyperparameterError("epsilon must be nonnegative")
    kernel = hp["kernel"]
    if kernel not in ("rbf", "linear"):
        raise InvalidHyperparameterError(f"unsupported kernel {kernel!r}")
    p = X.shape[1]
    sigma2 = float(hp["sigma2"]) if hp["sigma2"] is not None else float(max(p, 1))
    if sigma2 <= 0:
        raise InvalidHyperparameterError("sigma2 must be positive")
    if hp["scale_target"]:
        y_min = float(y.min())
        y_span = float(y.max() - y.min()) or 1.0
    else:
        y_min, y_span = 0.0, 1.0
    ys = (y - y_min) / y_span
    if kernel == "rbf":
        kfun = lambda A, B: rbf_kernel(A, B, sigma2)  # noqa: E731
    else:
        kfun = linear_kernel
    K = _KernelRows(X, kfun)
    a, G, rho, n_iter = solve_svr_dual(K, ys, C, float(hp["epsilon"]), float(hp["tol"]),
                                       hp["max_iter"])
    l = len(y)
    coef = a[:l] - a[l:]
    sv = np.flatnonzero(coef != 0)
    return SvrRegressor(
        X[sv].copy(), coef[sv].copy(), rho, (kernel, sigma2), y_min, y_span, hp, p,
        diagnostics={"alpha": a, "grad": G, "n_iter": n_iter},
    )
