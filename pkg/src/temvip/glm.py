"""Penalized generalized linear models fit by coordinate descent.

Linear models minimize

    (1/2n) * sum_i w_i (y_i - b0 - x_i' beta)^2
        + lam * (alpha * ||beta||_1 + (1 - alpha)/2 * ||beta||_2^2)

with an unpenalized intercept; logistic models minimize the analogous
penalized negative Bernoulli log-likelihood via iteratively reweighted least
squares with the same coordinate-descent inner solver. ``alpha = 1`` is the
LASSO, ``alpha = 0`` ridge, anything between an elastic net, and ``lam = 0``
an unpenalized fit.

This module also provides the one-dimensional offset logistic regressions
used by the targeting steps: maximum likelihood slopes of an outcome on a
single constructed covariate with a fixed offset, solved by damped Newton
iterations and vectorized across many covariates at once.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .exceptions import NoConvergenceWarning, OneClassOnly, SeparationWarning, TiltDiverged

# linear predictors beyond this magnitude are treated as numerically separated
_ETA_CLIP = 30.0


@dataclass(frozen=True)
class LearnerSpec:
    """One penalized-regression configuration.

    ``lam`` and ``alpha`` follow the objective above. ``interactions``
    requests treatment-by-covariate columns when the design is built by the
    nuisance fitters (it has no effect inside this module). An
    ``intercept_only`` spec ignores all covariate columns.
    """

    family: str  # "linear" or "logistic"
    lam: float = 0.0
    alpha: float = 1.0
    interactions: bool = False
    intercept_only: bool = False
    fit_intercept: bool = True
    max_iter: int = 200
    tol: float = 1e-9
    name: str = ""

    def __post_init__(self):
        if self.family not in ("linear", "logistic"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.lam < 0:
            raise ValueError("penalty weight must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("l1 fraction must lie in [0, 1]")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.intercept_only:
            return f"{self.family}:intercept-only"
        if self.lam == 0:
            pen = "unpenalized"
        elif self.alpha == 1:
            pen = f"lasso(lam={self.lam:.4g})"
        elif self.alpha == 0:
            pen = f"ridge(lam={self.lam:.4g})"
        else:
            pen = f"enet(lam={self.lam:.4g},alpha={self.alpha:.3g})"
        return f"{self.family}:{pen}{'+AxW' if self.interactions else ''}"

    @classmethod
    def lasso(cls, family: str, lam: float, **kw) -> "LearnerSpec":
        return cls(family=family, lam=lam, alpha=1.0, **kw)

    @classmethod
    def ridge(cls, family: str, lam: float, **kw) -> "LearnerSpec":
        return cls(family=family, lam=lam, alpha=0.0, **kw)

    @classmethod
    def unpenalized(cls, family: str, **kw) -> "LearnerSpec":
        return cls(family=family, lam=0.0, **kw)

    @classmethod
    def intercept(cls, family: str, **kw) -> "LearnerSpec":
        return cls(family=family, lam=0.0, intercept_only=True, **kw)


@dataclass
class GlmFit:
    spec: LearnerSpec
    intercept: float
    coef: np.ndarray
    converged: bool
    n_iter: int
    separation: bool = False

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        if self.coef.size == 0:
            return np.full(X.shape[0], self.intercept)
        return self.intercept + X @ self.coef

    def predict(self, X: np.ndarray) -> np.ndarray:
        eta = self.linear_predictor(X)
        if self.spec.family == "logistic":
            return expit(np.clip(eta, -_ETA_CLIP, _ETA_CLIP))
        return eta


def soft_threshold(z: float, thresh: float) -> float:
    if z > thresh:
        return z - thresh
    if z < -thresh:
        return z + thresh
    return 0.0


def _coordinate_descent(X, y, w, lam, alpha, max_iter, tol, beta, b0, fit_intercept=True):
    """Cyclic coordinate descent with soft-thresholding.

    Full passes over every column are replaced by a batched optimality
    screen: one gradient computation finds the columns that are active or
    violate the L1 stationarity condition, and only those are swept. The
    screen is re-run until no new column enters, so the solution matches a
    plain cyclic scan. Mutates ``beta``; returns (beta, b0, converged, sweeps).
    """
    n = y.shape[0]
    q = X.shape[1]
    w_over_n = w / n
    w_sum = w.sum()
    xsq = np.array([X[:, j] @ (w_over_n * X[:, j]) for j in range(q)])
    denom = xsq + lam * (1.0 - alpha)
    lam_l1 = lam * alpha
    r = y - b0 - (X @ beta if beta.any() else 0.0)
    # maintain the weighted residual alongside r so each coordinate update
    # needs one dot product instead of an elementwise product plus a dot
    wr = w_over_n * r

    def sweep(cols):
        nonlocal b0, r, wr
        max_delta = 0.0
        if fit_intercept:
            shift = (w * r).sum() / w_sum
            if shift != 0.0:
                b0 += shift
                r -= shift
                wr -= shift * w_over_n
                max_delta = abs(shift)
        for j in cols:
            if denom[j] <= 0.0:
                continue
            xj = X[:, j]
            old = beta[j]
            z = xj @ wr + xsq[j] * old
            new = soft_threshold(z, lam_l1) / denom[j]
            if new != old:
                beta[j] = new
                delta = new - old
                r -= delta * xj
                wr -= delta * (w_over_n * xj)
                max_delta = max(max_delta, abs(delta))
        return max_delta

    def candidate_columns():
        grad = X.T @ wr
        mask = beta != 0.0
        np.logical_or(mask, np.abs(grad) > lam_l1 * (1.0 + 1e-12) + 1e-15, out=mask)
        return np.nonzero(mask)[0]

    sweeps = 0
    converged = False
    while sweeps < max_iter:
        cols = candidate_columns()
        inner_done = False
        while sweeps < max_iter:
            sweeps += 1
            if sweep(cols) < tol:
                inner_done = True
                break
        if not inner_done:
            break
        # global optimality check: a column outside the working set that now
        # violates stationarity re-enters; otherwise we are done
        remaining = candidate_columns()
        if np.isin(remaining, cols).all():
            converged = True
            break
    return beta, b0, converged, sweeps


def fit_linear_penalized(
    X: np.ndarray,
    y: np.ndarray,
    spec: LearnerSpec,
    sample_weight: Optional[np.ndarray] = None,
    warm: Optional[GlmFit] = None,
) -> GlmFit:
    """Fit a penalized linear regression.

    Convergence means the largest coefficient change in a full sweep fell
    below ``spec.tol``; otherwise the last iterate is returned with
    ``converged=False`` and a :class:`NoConvergenceWarning`.
    """
    if spec.family != "linear":
        raise ValueError(f"spec family is {spec.family!r}, expected 'linear'")
    X = np.asfortranarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.intercept_only:
        X = X[:, :0]
    w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    beta = np.zeros(X.shape[1]) if warm is None else warm.coef.copy()
    if warm is not None:
        b0 = warm.intercept
    else:
        b0 = float((w * y).sum() / w.sum()) if spec.fit_intercept else 0.0
    beta, b0, converged, sweeps = _coordinate_descent(
        X, y, w, spec.lam, spec.alpha, spec.max_iter, spec.tol, beta, b0,
        fit_intercept=spec.fit_intercept,
    )
    if not converged:
        warnings.warn(
            f"linear fit ({spec.label}) did not converge in {spec.max_iter} sweeps",
            NoConvergenceWarning,
        )
    return GlmFit(spec=spec, intercept=b0, coef=beta, converged=converged, n_iter=sweeps)


def fit_logistic_penalized(
    X: np.ndarray,
    y: np.ndarray,
    spec: LearnerSpec,
    warm: Optional[GlmFit] = None,
) -> GlmFit:
    """Fit a penalized logistic regression by IRLS with coordinate-descent inner solves.

    Raises :class:`OneClassOnly` when the response is constant. Emits a
    :class:`SeparationWarning` when the fitted linear predictor exceeds 30
    in magnitude for some row; predictions clip there.
    """
    if spec.family != "logistic":
        raise ValueError(f"spec family is {spec.family!r}, expected 'logistic'")
    X = np.asfortranarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    ybar = y.mean()
    if ybar <= 0.0 or ybar >= 1.0:
        raise OneClassOnly(f"response has a single class (mean {ybar})")
    if spec.intercept_only:
        X = X[:, :0]

    beta = np.zeros(X.shape[1]) if warm is None else warm.coef.copy()
    if warm is not None:
        b0 = warm.intercept
    else:
        b0 = float(np.log(ybar / (1.0 - ybar))) if spec.fit_intercept else 0.0
    eta = b0 + (X @ beta if beta.size else np.zeros(y.shape[0]))

    converged = False
    separation = False
    total_inner = 0
    for outer in range(1, spec.max_iter + 1):
        p = expit(eta)
        # the tiny floor keeps near-Newton steps alive under quasi-separation;
        # weighted products w*z stay bounded by the raw residuals
        wgt = np.maximum(p * (1.0 - p), 1e-14)
        z = eta + (y - p) / wgt
        beta_prev = beta.copy()
        b0_prev = b0
        beta, b0, _, inner = _coordinate_descent(
            X, z, wgt, spec.lam, spec.alpha, max_iter=min(spec.max_iter, 50),
            tol=spec.tol, beta=beta, b0=b0, fit_intercept=spec.fit_intercept,
        )
        total_inner += inner
        eta = b0 + (X @ beta if beta.size else np.zeros(y.shape[0]))
        if np.max(np.abs(eta)) > _ETA_CLIP:
            separation = True
            converged = True
            break
        delta = abs(b0 - b0_prev)
        if beta.size:
            delta = max(delta, float(np.max(np.abs(beta - beta_prev))))
        if delta < spec.tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"logistic fit ({spec.label}) did not converge in {spec.max_iter} IRLS rounds",
            NoConvergenceWarning,
        )
    if separation:
        warnings.warn(
            f"logistic fit ({spec.label}) reached |linear predictor| > {_ETA_CLIP}; "
            "predictions are clipped there",
            SeparationWarning,
        )
    return GlmFit(
        spec=spec, intercept=b0, coef=beta, converged=converged,
        n_iter=total_inner, separation=separation,
    )


def fit_glm(X, y, spec: LearnerSpec, warm: Optional[GlmFit] = None) -> GlmFit:
    if spec.family == "linear":
        return fit_linear_penalized(X, y, spec, warm=warm)
    return fit_logistic_penalized(X, y, spec, warm=warm)


def lasso_lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest L1 penalty that zeroes every non-intercept coefficient."""
    n = y.shape[0]
    resid = y - y.mean()
    return float(np.max(np.abs(X.T @ resid)) / n)


def fit_offset_logistic_slopes(
    H: np.ndarray,
    y: np.ndarray,
    offset_logit: np.ndarray,
    max_iter: int = 50,
    tol: float = 1e-12,
) -> np.ndarray:
    """Per-column MLE slopes of ``y ~ offset + eps * H[:, j]`` (logit link).

    ``y`` may be fractional in [0, 1] (quasi-Bernoulli). ``offset_logit`` is
    either one shared column or an (n, p) matrix of per-column offsets.
    Solved by damped Newton iterations, vectorized over columns. Raises
    :class:`TiltDiverged` if any slope fails to converge to a finite value.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim == 1:
        H = H[:, None]
    y = np.asarray(y, dtype=float)
    offset_logit = np.asarray(offset_logit, dtype=float)
    if offset_logit.ndim == 1:
        offset_logit = offset_logit[:, None]
    eps = np.zeros(H.shape[1])
    scale = np.maximum(np.abs(H).sum(axis=0), np.finfo(float).tiny)
    for _ in range(max_iter):
        p = expit(offset_logit + H * eps)
        score = (H * (y[:, None] - p)).sum(axis=0)
        info = (H * H * p * (1.0 - p)).sum(axis=0)
        step = score / np.where(info > 1e-300, info, np.inf)
        np.clip(step, -4.0, 4.0, out=step)
        eps += step
        if np.max(np.abs(step)) < tol and np.max(np.abs(score) / scale) < 1e-12:
            break
    else:
        p = expit(offset_logit + H * eps)
        score = (H * (y[:, None] - p)).sum(axis=0)
        if not (np.isfinite(eps).all() and np.max(np.abs(score) / scale) < 1e-8):
            raise TiltDiverged("offset logistic fluctuation fit failed to converge")
    if not np.isfinite(eps).all():
        raise TiltDiverged("offset logistic fluctuation produced non-finite coefficients")
    return eps
