"""Regression trees and the tree ensembles built on them.

A single growth routine serves every tree family. It works on per-sample
first- and second-order loss derivatives (``grad``, ``hess``) and scores a
split by ``G_L^2/(H_L+lam) + G_R^2/(H_R+lam)``; leaves predict
``-G/(H+lam)``. With ``grad = -y``, ``hess = 1`` and ``lam = 0`` the score is
the usual variance (SSE) reduction and leaves predict the sample mean, which
is the CART case. Boosting feeds the residual gradients of the squared loss.
"""
from __future__ import annotations

import numpy as np

from ..errors import InvalidHyperparameterError
from .base import Regressor, check_xy

_REL_GAIN_TOL = 1e-12


class Tree:
    """Array-backed binary tree. ``feature == -1`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, value, n_samples, impurity):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)
        self.impurity = np.asarray(impurity, dtype=float)

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def n_leaves(self):
        return int((self.feature < 0).sum())

    @property
    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X):
        """Leaf index reached by every row."""
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while len(active):
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X):
        return self.value[self.apply(X)]

    def state(self):
        return {k: getattr(self, k) for k in
                ("feature", "threshold", "left", "right", "value", "n_samples", "impurity")}


def grow_tree(X, grad, hess, *, reg_lambda=0.0, gamma=0.0, max_depth=None,
              min_samples_split=2, max_features=None, rng=None, order=None):
    """Greedy depth-first growth on presorted feature orders.

    ``order`` may pass ``presort(X)`` when the same ``X`` is reused across
    trees. ``max_features`` draws that many candidate features at every node.
    A split is kept only if ``0.5 * (score - G^2/(H+lam)) - gamma`` is
    positive (beyond float noise). Node impurity is recorded as
    ``sum(g^2) - G^2/H``, the node SSE when ``grad = -y`` and ``hess = 1``.
    """
    n, p = X.shape
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    unit_hess = bool(np.all(hess == 1.0))
    lam = float(reg_lambda)
    max_depth = np.inf if max_depth is None else max_depth
    if max_features is None or max_features >= p:
        max_features = p

    nodes = {k: [] for k in ("feature", "threshold", "left", "right", "value", "n_samples", "impurity")}

    def new_node(ids):
        g = grad[ids]
        G = g.sum()
        H = float(len(ids)) if unit_hess else hess[ids].sum()
        nodes["feature"].append(-1)
        nodes["threshold"].append(0.0)
        nodes["left"].append(-1)
        nodes["right"].append(-1)
        nodes["value"].append(-G / (H + lam) if H + lam > 0 else 0.0)
        nodes["n_samples"].append(len(ids))
        nodes["impurity"].append(max(float((g * g).sum() - G * G / H), 0.0) if H > 0 else 0.0)
        return len(nodes["feature"]) - 1

    if p == 0:
        new_node(np.arange(n))
        return Tree(**nodes)

    if order is None:
        order = presort(X)
    XT = np.ascontiguousarray(X.T).ravel()
    root = new_node(order[0])
    stack = [(root, order, 0)]
    while stack:
        node, node_order, depth = stack.pop()
        m = node_order.shape[1]
        if m < min_samples_split or depth >= max_depth or m < 2:
            continue
        ids = node_order[0]
        g_node = grad[ids]
        if np.ptp(g_node) == 0.0:
            continue
        if max_features < p:
            feats = np.sort(rng.choice(p, size=max_features, replace=False))
            o = node_order[feats]
        else:
            feats = np.arange(p)
            o = node_order
        xs = XT.take(o + (feats * n)[:, None])
        GL = np.cumsum(grad.take(o), axis=1)[:, :-1]
        G = g_node.sum()
        if unit_hess:
            HL = np.arange(1.0, m)
            H = float(m)
        else:
            HL = np.cumsum(hess.take(o), axis=1)[:, :-1]
            H = hess[ids].sum()
        GR = G - GL
        HR = H - HL
        with np.errstate(divide="ignore", invalid="ignore"):
            score = GL * GL / (HL + lam) + GR * GR / (HR + lam)
        score[xs[:, 1:] <= xs[:, :-1]] = -np.inf
        flat = int(np.argmax(score))  # lowest feature, then lowest position, on ties
        j, pos = divmod(flat, m - 1)
        best = score[j, pos]
        if not np.isfinite(best):
            continue
        gain = 0.5 * (best - G * G / (H + lam)) - gamma
        node_imp = float((g_node * g_node).sum() - G * G / H)
        if gain <= _REL_GAIN_TOL * max(node_imp, np.finfo(float).tiny):
            continue
        lo, hi = xs[j, pos], xs[j, pos + 1]
        thr = lo + (hi - lo) / 2.0
        if not lo <= thr < hi:
            thr = lo
        go_left = np.zeros(n, dtype=bool)
        go_left[o[j, : pos + 1]] = True
        mask = go_left.take(node_order)
        n_left = pos + 1
        left_order = node_order[mask].reshape(p, n_left)
        right_order = node_order[~mask].reshape(p, m - n_left)
        nodes["feature"][node] = int(feats[j])
        nodes["threshold"][node] = thr
        lc = new_node(left_order[0])
        rc = new_node(right_order[0])
        nodes["left"][node] = lc
        nodes["right"][node] = rc
        # push right first so the left subtree is expanded first
        stack.append((rc, right_order, depth + 1))
        stack.append((lc, left_order, depth + 1))
    return Tree(**nodes)


def presort(X):
    """Feature-major sample orders, shape ``(p, n)``."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def prune_cost_complexity(tree, alpha):
    """Smallest subtree minimizing ``SSE + alpha * leaves`` (weakest-link optimum)."""
    if alpha <= 0 or tree.n_nodes == 1:
        return tree
    feature = tree.feature.copy()
    cost = np.zeros(tree.n_nodes)
    # children are always created after their parent
    for i in range(tree.n_nodes - 1, -1, -1):
        leaf_cost = tree.impurity[i] + alpha
        if feature[i] < 0:
            cost[i] = leaf_cost
            continue
        sub = cost[tree.left[i]] + cost[tree.right[i]]
        if leaf_cost <= sub:
            feature[i] = -1
            cost[i] = leaf_cost
        else:
            cost[i] = sub
    return _compact(tree, feature)


def _compact(tree, feature):
    keep, stack = [], [0]
    while stack:
        i = stack.pop()
        keep.append(i)
        if feature[i] >= 0:
            stack.append(tree.right[i])
            stack.append(tree.left[i])
    keep = sorted(keep)
    remap = {old: new for new, old in enumerate(keep)}
    left = [remap[tree.left[i]] if feature[i] >= 0 else -1 for i in keep]
    right = [remap[tree.right[i]] if feature[i] >= 0 else -1 for i in keep]
    thr = [tree.threshold[i] if feature[i] >= 0 else 0.0 for i in keep]
    return Tree(feature[keep], thr, left, right, tree.value[keep], tree.n_samples[keep],
                tree.impurity[keep])


def _resolve_max_features(value, p):
    if value is None:
        return None
    if isinstance(value, float) and 0 < value <= 1:
        return max(1, int(round(value * p)))
    value = int(value)
    if value < 1:
        raise InvalidHyperparameterError("max_features must be at least 1")
    return min(value, p)


def _check_positive_int(hp, name, minimum=1):
    v = hp.get(name)
    if v is not None and int(v) < minimum:
        raise InvalidHyperparameterError(f"{name} must be >= {minimum}")


# ---------------------------------------------------------------------------
# CART
# ---------------------------------------------------------------------------

CART_DEFAULTS = {"max_features": None, "min_samples_split": 2, "ccp_alpha": 0.0, "max_depth": None}


class CartRegressor(Regressor):
    family = "cart"

    def __init__(self, tree, hyperparams, n_features, seed):
        super().__init__(hyperparams, n_features, seed)
        self.tree = tree

    def _predict(self, X):
        return self.tree.predict(X)


def fit_cart(X, y, hp=None, seed=0):
    """Variance-reduction regression tree with optional cost-complexity pruning.

    ``ccp_alpha`` is relative: a split survives pruning only if it lowers
    the training SSE by at least ``ccp_alpha`` times the root SSE per added
    leaf. ``max_features`` draws that many candidate features per node.
    """
    X, y = check_xy(X, y)
    hp = {**CART_DEFAULTS, **(hp or {})}
    _check_positive_int(hp, "min_samples_split")
    _check_positive_int(hp, "max_depth")
    if hp["ccp_alpha"] < 0:
        raise InvalidHyperparameterError("ccp_alpha must be nonnegative")
    rng = np.random.default_rng(seed)
    tree = grow_tree(
        X, -y, np.ones_like(y),
        max_depth=hp["max_depth"],
        min_samples_split=int(hp["min_samples_split"]),
        max_features=_resolve_max_features(hp["max_features"], X.shape[1]),
        rng=rng,
    )
    if hp["ccp_alpha"] > 0:
        tree = prune_cost_complexity(tree, hp["ccp_alpha"] * tree.impurity[0])
    return CartRegressor(tree, hp, X.shape[1], seed)


# ---------------------------------------------------------------------------
# random forest
# ---------------------------------------------------------------------------

FOREST_DEFAULTS = {
    "n_trees": 100, "max_features": "third", "min_samples_split": 2,
    "max_depth": None, "bootstrap": True,
}


class RandomForestRegressor(Regressor):
    family = "random_forest"

    def __init__(self, trees, hyperparams, n_features, seed):
        super().__init__(hyperparams, n_features, seed)
        self.trees = trees

    def _predict(self, X):
        out = np.zeros(len(X))
        for t in self.trees:
            out += t.predict(X)
        return out / len(self.trees)


def fit_random_forest(X, y, hp=None, seed=0):
    """Bagged CARTs with per-node feature sampling; predictions are averaged.

    ``max_features="third"`` (default) uses ``ceil(p / 3)`` features per node.
    """
    X, y = check_xy(X, y)
    hp = {**FOREST_DEFAULTS, **(hp or {})}
    _check_positive_int(hp, "n_trees")
    _check_positive_int(hp, "min_samples_split")
    n, p = X.shape
    mf = hp["max_features"]
    mf = int(np.ceil(p / 3)) if mf == "third" else _resolve_max_features(mf, p)
    children = np.random.SeedSequence(seed).spawn(int(hp["n_trees"]))
    order = None if hp["bootstrap"] else presort(X)
    trees = []
    for child in children:
        rng = np.random.default_rng(child)
        if hp["bootstrap"]:
            sample = rng.integers(0, n, size=n)
            Xs, ys, o = X[sample], y[sample], None
        else:
            Xs, ys, o = X, y, order
        trees.append(grow_tree(
            Xs, -ys, np.ones_like(ys),
            max_depth=hp["max_depth"],
            min_samples_split=int(hp["min_samples_split"]),
            max_features=mf, rng=rng, order=o,
        ))
    return RandomForestRegressor(trees, hp, p, seed)


# ---------------------------------------------------------------------------
# gradient boosting (GBDT and the second-order regularized variant)
# ---------------------------------------------------------------------------

GBDT_DEFAULTS = {
    "n_trees": 100, "learning_rate": 0.1, "max_depth": 3,
    "max_features": None, "min_samples_split": 2,
}
XGB_DEFAULTS = {**GBDT_DEFAULTS, "max_depth": 6, "reg_lambda": 1.0, "gamma": 0.0}


class BoostedTreesRegressor(Regressor):
    """``prediction = init + learning_rate * sum(tree outputs)``."""

    def __init__(self, family, init, trees, hyperparams, n_features, seed, train_mse=()):
        super().__init__(hyperparams, n_features, seed)
        self.family = family
        self.init = float(init)
        self.trees = trees
        self.train_mse = tuple(train_mse)

    def _predict(self, X):
        out = np.zeros(len(X))
        for t in self.trees:
            out += t.predict(X)
        return self.init + self.hyperparams["learning_rate"] * out

    def staged_predict(self, X):
        X = np.asarray(X, dtype=float)
        acc = np.zeros(len(X))
        lr = self.hyperparams["learning_rate"]
        yield self.init + acc
        for t in self.trees:
            acc = acc + t.predict(X)
            yield self.init + lr * acc


def _boost(family, X, y, hp, seed, reg_lambda, gamma):
    n, p = X.shape
    _check_positive_int(hp, "min_samples_split")
    _check_positive_int(hp, "max_depth")
    if int(hp["n_trees"]) < 0:
        raise InvalidHyperparameterError("n_trees must be nonnegative")
    lr = float(hp["learning_rate"])
    if lr <= 0:
        raise InvalidHyperparameterError("learning_rate must be positive")
    if reg_lambda < 0 or gamma < 0:
        raise InvalidHyperparameterError("reg_lambda and gamma must be nonnegative")
    rng = np.random.default_rng(seed)
    order = presort(X)
    mf = _resolve_max_features(hp["max_features"], p)
    init = float(y.mean())
    F = np.full(n, init)
    acc = np.zeros(n)
    hess = np.ones(n)
    trees = []
    mse = [float(np.mean((y - F) ** 2))]
    for _ in range(int(hp["n_trees"])):
        grad = F - y  # squared-loss gradient; hessian is 1
        tree = grow_tree(
            X, grad, hess, reg_lambda=reg_lambda, gamma=gamma,
            max_depth=hp["max_depth"], min_samples_split=int(hp["min_samples_split"]),
            max_features=mf, rng=rng, order=order,
        )
        trees.append(tree)
        acc += tree.predict(X)
        F = init + lr * acc
        mse.append(float(np.mean((y - F) ** 2)))
    return BoostedTreesRegressor(family, init, trees, hp, p, seed, mse)


def fit_gbdt(X, y, hp=None, seed=0):
    """Squared-loss gradient boosting: each tree fits the current residuals.

    Starts from ``mean(y)`` and adds ``learning_rate`` times each
    depth-limited tree; leaves hold residual means.
    """
    X, y = check_xy(X, y)
    hp = {**GBDT_DEFAULTS, **(hp or {})}
    return _boost("gbdt", X, y, hp, seed, reg_lambda=0.0, gamma=0.0)


def fit_xgb(X, y, hp=None, seed=0):
    """Second-order boosting with L2 leaf penalty ``reg_lambda`` and split cost ``gamma``.

    Leaf weight ``-G/(H + lambda)``; a split is kept only if
    ``0.5 * [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)] - gamma > 0``.
    For squared loss ``g = prediction - y`` and ``h = 1``.
    """
    X, y = check_xy(X, y)
    hp = {**XGB_DEFAULTS, **(hp or {})}
    return _boost("xgb", X, y, hp, seed, float(hp["reg_lambda"]), float(hp["gamma"]))
