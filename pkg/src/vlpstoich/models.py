"""The three L2-regularized linear classifiers.

Ridge is solved in closed form via the normal equations (dual form when
features outnumber samples). Logistic and squared-hinge SVM are minimized
with a deterministic quasi-Newton solver (L-BFGS) over an explicit
objective/gradient pair; when features outnumber samples they are solved in
the span of the training rows, which is exact for L2 penalties.

Targets are +-1 with 180-mer as +1. The intercept is unregularized for all
three models; ties at score 0 predict the 60-mer class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.linalg
import scipy.special

from .dataset import StoichiometryClass
from .encoding import FeatureLayout, FeatureMatrix
from .errors import LayoutMismatch, NotPositiveDefinite
from .linalg import solve_spd

DEFAULT_TOLERANCE = 1e-6
DEFAULT_MAX_ITERATIONS = 5000


class ModelKind(Enum):
    RIDGE = "ridge"
    LOGISTIC = "logistic"
    LINEAR_SVM = "svm"

    @classmethod
    def from_name(cls, name: str) -> "ModelKind":
        for k in cls:
            if k.value == name:
                return k
        raise ValueError(f"unknown model kind {name!r}")


@dataclass(frozen=True)
class Hyperparams:
    """regularization is alpha for ridge, C for logistic / SVM."""

    regularization: float
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        if self.regularization <= 0:
            raise ValueError("regularization must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass(frozen=True)
class LinearModel:
    kind: ModelKind
    weights: np.ndarray
    intercept: float
    layout: FeatureLayout
    hyperparams: Hyperparams
    converged: bool = True

    def __post_init__(self):
        if len(self.weights) != self.layout.n_features:
            raise LayoutMismatch("weight length does not match layout")
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.intercept):
            raise ValueError("model parameters must be finite")


@dataclass(frozen=True)
class PositionalScore:
    """Per-position influence values; length equals layout.positions."""

    scores: np.ndarray
    source: str


# ---------------------------------------------------------------- objectives

def logistic_objective(w, b, X, y, C):
    """L2-penalized logistic loss and its gradient.

    J = sum_i log(1 + exp(-y_i (w.x_i + b))) + (1/(2C)) ||w||^2
    """
    w = np.asarray(w, dtype=float)
    margins = y * (X @ w + b)
    value = np.logaddexp(0.0, -margins).sum() + (w @ w) / (2.0 * C)
    g = -y * scipy.special.expit(-margins)
    grad_w = X.T @ g + w / C
    grad_b = g.sum()
    return value, grad_w, grad_b


def squared_hinge_objective(w, b, X, y, C):
    """Squared-hinge SVM objective and gradient.

    J = 0.5 ||w||^2 + C sum_i max(0, 1 - y_i (w.x_i + b))^2
    """
    w = np.asarray(w, dtype=float)
    margins = y * (X @ w + b)
    slack = np.maximum(0.0, 1.0 - margins)
    value = 0.5 * (w @ w) + C * (slack @ slack)
    g = -2.0 * C * slack * y
    grad_w = w + X.T @ g
    grad_b = g.sum()
    return value, grad_w, grad_b


# ------------------------------------------------------------------- fitting

def _check_targets(y):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("targets must be +-1")
    return y


def fit_ridge(fm: FeatureMatrix, alpha: float, gram: np.ndarray | None = None) -> LinearModel:
    """Closed-form ridge on column-centered features, intercept unregularized.

    Solves (Xc' Xc + alpha I) w = Xc' y; uses the dual (Gram) form when the
    feature count exceeds the sample count. gram, if given, must be the raw
    X X' of fm.values.
    """
    hp = Hyperparams(regularization=alpha)
    X = fm.values
    y = _check_targets(fm.row_labels)
    n, d = X.shape
    mu = X.mean(axis=0)
    ybar = y.mean()
    yc = y - ybar
    if d <= n:
        Xc = X - mu
        w = solve_spd(Xc.T @ Xc + alpha * np.eye(d), Xc.T @ yc)
    else:
        Kc = _centered_gram(X, mu, gram)
        beta = solve_spd(Kc + alpha * np.eye(n), yc)
        w = (X - mu).T @ beta
    b = ybar - mu @ w
    return LinearModel(
        kind=ModelKind.RIDGE,
        weights=w,
        intercept=float(b),
        layout=fm.layout,
        hyperparams=hp,
    )


def ridge_dual_coefficients(Kc: np.ndarray, yc: np.ndarray, alpha: float) -> np.ndarray:
    """Dual ridge coefficients: solve (Kc + alpha I) beta = yc.

    Kc is the centered Gram Xc Xc'; the primal solution is w = Xc' beta.
    """
    return solve_spd(Kc + alpha * np.eye(len(yc)), yc)


def _centered_gram(X, mu, gram):
    n = X.shape[0]
    if gram is None:
        Xc = X - mu
        return Xc @ Xc.T
    u = X @ mu
    return gram - u[:, None] - u[None, :] + mu @ mu


def _curvatures(kind: ModelKind, margins: np.ndarray, C: float) -> np.ndarray:
    """Per-sample second derivative of the loss w.r.t. the margin."""
    if kind is ModelKind.LOGISTIC:
        p = scipy.special.expit(margins)
        return p * (1.0 - p)
    return 2.0 * C * (margins < 1.0)


def _newton_minimize(X, y, C, kind, z0, max_iterations, tolerance):
    """Damped Newton for the margin objectives over z = (w, b).

    Both losses have explicit margin curvatures, so the Hessian is
    A' diag(c) A (A = [X, 1]) plus the penalty block; each step is one
    dense SPD solve. The intercept is unpenalized, hence the tiny damping
    that keeps the factorization valid when no sample carries curvature.

    The stopping tolerance is relative to the gradient magnitude at the
    zero starting point, so convergence behaves the same regardless of
    feature scaling (one-hot rows vs integer codes differ by orders of
    magnitude).
    """
    objective = (
        logistic_objective if kind is ModelKind.LOGISTIC else squared_hinge_objective
    )
    n, d = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    pen = np.zeros(d + 1)
    pen[:d] = 1.0 / C if kind is ModelKind.LOGISTIC else 1.0

    z = np.asarray(z0, dtype=float).copy()
    value, gw, gb = objective(z[:d], z[d], X, y, C)
    g = np.append(gw, gb)
    _, gw0, gb0 = objective(np.zeros(d), 0.0, X, y, C)
    gtol = tolerance * max(1.0, float(np.max(np.abs(np.append(gw0, gb0)))))

    for _ in range(max_iterations):
        if np.max(np.abs(g)) <= gtol:
            return z, True
        margins = y * (A @ z)
        curv = _curvatures(kind, margins, C)
        H = (A.T * curv) @ A
        H[np.diag_indices_from(H)] += pen + 1e-12 * max(1.0, float(np.trace(H)))
        try:
            step = -scipy.linalg.cho_solve(scipy.linalg.cho_factor(H), g)
        except scipy.linalg.LinAlgError:
            step = -g
        # Backtracking Armijo line search along the Newton direction.
        slope = float(g @ step)
        if slope >= 0.0:
            step, slope = -g, -float(g @ g)
        t = 1.0
        for _ in range(60):
            z_new = z + t * step
            value_new, gw, gb = objective(z_new[:d], z_new[d], X, y, C)
            if value_new <= value + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            return z, False
        z, value, g = z_new, value_new, np.append(gw, gb)
    return z, bool(np.max(np.abs(g)) <= gtol)


def gram_cholesky(K: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of K with minimal jitter for rank deficiency.

    Whitening through K = R R' turns a Gram-space fit into an ordinary
    primal fit on the n x n matrix R: with gamma = R' beta the penalty
    beta' K beta equals ||gamma||^2 and conditioning improves from cond(K)
    to sqrt(cond(K)). The jitter perturbs solutions at the ~1e-10 relative
    level.
    """
    n = K.shape[0]
    scale = max(float(np.mean(np.diag(K))), 1.0)
    for jitter in (1e-10, 1e-8, 1e-6):
        try:
            return np.linalg.cholesky(K + jitter * scale * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite("Gram matrix could not be factorized")


def dual_margin_fit(
    K: np.ndarray,
    y: np.ndarray,
    C: float,
    kind: ModelKind,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    tolerance: float = DEFAULT_TOLERANCE,
    cholesky: np.ndarray | None = None,
    z0: np.ndarray | None = None,
):
    """Fit logistic or squared-hinge SVM in the span of the training rows.

    K is the raw Gram matrix X X'. Returns (beta, b, converged, z) with
    w = X' beta; exact for L2 penalties, and each solver iteration costs
    O(n^2) regardless of the feature count. A precomputed Cholesky factor
    of (jittered) K and a warm-start point z = (gamma, b) may be supplied
    to speed up repeated fits on the same rows.
    """
    y = _check_targets(y)
    n = len(y)
    if kind not in (ModelKind.LOGISTIC, ModelKind.LINEAR_SVM):
        raise ValueError("dual_margin_fit handles logistic and SVM only")

    R = gram_cholesky(K) if cholesky is None else cholesky
    start = np.zeros(n + 1) if z0 is None else np.asarray(z0, dtype=float)
    z, ok = _newton_minimize(R, y, C, kind, start, max_iterations, tolerance)
    gamma, b = z[:-1], z[-1]
    beta = scipy.linalg.solve_triangular(R, gamma, trans="T", lower=True)
    return beta, float(b), ok, z


def _fit_margin_model(fm, C, kind, max_iterations, tolerance, gram):
    hp = Hyperparams(
        regularization=C, max_iterations=max_iterations, tolerance=tolerance
    )
    X = fm.values
    y = _check_targets(fm.row_labels)
    n, d = X.shape

    if d <= n:
        z, ok = _newton_minimize(X, y, C, kind, np.zeros(d + 1), max_iterations, tolerance)
        w, b = z[:-1], z[-1]
    else:
        K = X @ X.T if gram is None else gram
        beta, b, ok, _ = dual_margin_fit(K, y, C, kind, max_iterations, tolerance)
        w = X.T @ beta

    return LinearModel(
        kind=kind,
        weights=np.asarray(w, dtype=float),
        intercept=float(b),
        layout=fm.layout,
        hyperparams=hp,
        converged=ok,
    )


def fit_logistic(
    fm: FeatureMatrix,
    C: float,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    tolerance: float = DEFAULT_TOLERANCE,
    gram: np.ndarray | None = None,
) -> LinearModel:
    return _fit_margin_model(
        fm, C, ModelKind.LOGISTIC, max_iterations, tolerance, gram
    )


def fit_linear_svm(
    fm: FeatureMatrix,
    C: float,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    tolerance: float = DEFAULT_TOLERANCE,
    gram: np.ndarray | None = None,
) -> LinearModel:
    return _fit_margin_model(
        fm, C, ModelKind.LINEAR_SVM, max_iterations, tolerance, gram
    )


def fit_model(kind: ModelKind, fm: FeatureMatrix, regularization: float, gram=None) -> LinearModel:
    if kind is ModelKind.RIDGE:
        return fit_ridge(fm, regularization, gram=gram)
    if kind is ModelKind.LOGISTIC:
        return fit_logistic(fm, regularization, gram=gram)
    return fit_linear_svm(fm, regularization, gram=gram)


# ---------------------------------------------------------------- prediction

def _check_layout(model: LinearModel, fm: FeatureMatrix):
    if model.layout != fm.layout:
        raise LayoutMismatch(
            f"model layout {model.layout} does not match matrix layout {fm.layout}"
        )


def decision_scores(model: LinearModel, fm: FeatureMatrix) -> np.ndarray:
    _check_layout(model, fm)
    return fm.values @ model.weights + model.intercept


def predict(model: LinearModel, fm: FeatureMatrix) -> list[StoichiometryClass]:
    scores = decision_scores(model, fm)
    return [
        StoichiometryClass.ONE_EIGHTY if s > 0 else StoichiometryClass.SIXTY
        for s in scores
    ]


def positional_weights(model: LinearModel) -> PositionalScore:
    """Sum of absolute weights over the channels of each position."""
    blocks = np.abs(model.weights).reshape(
        model.layout.positions, model.layout.channels
    )
    return PositionalScore(scores=blocks.sum(axis=1), source="weights")


# ------------------------------------------------------------- serialization

def model_to_json(model: LinearModel) -> str:
    return json.dumps(
        {
            "kind": model.kind.value,
            "hyperparams": {
                "regularization": model.hyperparams.regularization,
                "max_iterations": model.hyperparams.max_iterations,
                "tolerance": model.hyperparams.tolerance,
            },
            "layout": model.layout.to_json(),
            "intercept": model.intercept,
            "weights": model.weights.tolist(),
            "converged": model.converged,
        },
        indent=2,
    )


def model_from_json(text: str) -> LinearModel:
    d = json.loads(text)
    return LinearModel(
        kind=ModelKind.from_name(d["kind"]),
        weights=np.array(d["weights"], dtype=float),
        intercept=float(d["intercept"]),
        layout=FeatureLayout.from_json(d["layout"]),
        hyperparams=Hyperparams(**d["hyperparams"]),
        converged=bool(d.get("converged", True)),
    )
