"""scikit-learn style wrappers for the data-facing parts of the toolkit."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .certify import fit_decay
from .gainop import GainSpec, analyze
from .rules import BlockDims
from .seqspace import SetSpec, set_dist_flat


class ExponentialDecayRegressor(RegressorMixin, BaseEstimator):
    """Fit ``v(t) = M v(t_0) exp(-a (t - t_0))`` on positive samples.

    ``X`` holds the sample times in its single column and ``y`` the values.
    ``coef_`` holds ``(M, a)`` and ``scale_`` the first sample ``v(t_0)``.
    """

    def __init__(self, window=None):
        self.window = window

    def fit(self, X, y):
        X = check_array(X, ensure_min_samples=2)
        if X.shape[1] != 1:
            raise ValueError("X must hold the sample times in one column")
        y = np.asarray(y, dtype=float).ravel()
        t = X[:, 0]
        order = np.argsort(t, kind="stable")
        t, y = t[order], y[order]
        M, a, res = fit_decay(t, y, self.window)
        self.t0_ = float(t[0])
        self.scale_ = float(y[0])
        self.M_, self.a_ = M, a
        self.coef_ = np.array([M, a])
        self.residual_ = res
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return self.M_ * self.scale_ * np.exp(-self.a_ * (X[:, 0] - self.t0_))


class SetDistanceTransformer(TransformerMixin, BaseEstimator):
    """Rows of flat truncated states to their distance ``|x|_A`` from a product set."""

    def __init__(self, sets: SetSpec | None = None, dims=1, p: float = 2.0):
        self.sets = sets
        self.dims = dims
        self.p = p

    def fit(self, X, y=None):
        X = check_array(X)
        dims = BlockDims.coerce(self.dims)
        N, tot = 0, 0
        while tot < X.shape[1]:
            tot += dims[N]
            N += 1
        if tot != X.shape[1]:
            raise ValueError("feature count does not split into whole blocks")
        self.dims_ = dims
        self.N_ = N
        self.sets_ = self.sets if self.sets is not None else SetSpec.origin()
        self.sets_.validate(dims, N)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "N_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return set_dist_flat(X, self.dims_, self.N_, self.sets_, self.p)[:, None]


class SmallGainCertifier(BaseEstimator):
    """Runs the certification pipeline on a gain description passed to ``fit``.

    After fitting, ``status_`` is certified, refuted or inconclusive and
    ``certificate_`` holds the composite Lyapunov data when one was found.
    """

    def __init__(self, N_schedule=(8, 16, 32, 64, 128), rho=None, tol: float = 1e-6):
        self.N_schedule = N_schedule
        self.rho = rho
        self.tol = tol

    def fit(self, X: GainSpec, y=None):
        if not isinstance(X, GainSpec):
            raise TypeError("SmallGainCertifier.fit expects a GainSpec")
        an = analyze(X, tuple(self.N_schedule), self.rho, self.tol)
        self.analysis_ = an
        self.status_ = an.status
        self.certificate_ = an.certificate
        self.bracket_ = (an.spectral.lower, an.upper)
        return self

    def envelope(self, t, x0_dist, u_norm: float = 0.0):
        """``M exp(-a t) |x0|_A + gamma(|u|)`` from the fitted certificate."""
        check_is_fitted(self, "status_")
        c = self.certificate_
        if c is None:
            raise ValueError(f"no certificate available (status {self.status_})")
        g = c.gamma(u_norm) if u_norm > 0 else 0.0
        return c.M * np.exp(-c.a * np.asarray(t, dtype=float)) * x0_dist + g
