"""Primal-dual solver for simplex- and l1-constrained shape recovery.

Both problems minimise ``||M z - y||`` with ``M = A Psi``; they differ only in
the constraint set: the K-simplex ``{sum(z) = K, 0 <= z <= 1}`` (``"cosharp"``)
or the l1 ball ``{||z||_1 <= K}`` (``"ssc"``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, validate_data

from .exceptions import DimensionMismatch, NonFiniteIterate
from .geometry import SparseProjector, operator_norm
from .prox import _project_ksimplex, project_l1_ball, prox_conj_misfit

MODES = ("cosharp", "ssc")

# densify A @ Psi above this fill ratio; dense matvecs are faster there
_DENSE_FILL = 0.1


@dataclass(frozen=True)
class SolverConfig:
    """Step sizes, stopping rule and constraint for :func:`solve`.

    ``gamma`` is the primal step, ``tau`` the dual step. Convergence needs
    ``gamma * tau * ||A Psi||^2 <= 1``; this is checked when ``opnorm`` is
    given.
    """

    gamma: float
    tau: float
    K: float
    max_iter: int
    tol: float = 1e-6
    mode: str = "cosharp"
    opnorm: float | None = None
    z0: np.ndarray | None = field(default=None, compare=False)
    u0: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.gamma > 0 and self.tau > 0):
            raise ValueError("step sizes must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.K > 0:
            raise ValueError("K must be positive")
        if self.opnorm is not None and self.gamma * self.tau * self.opnorm ** 2 > 1 + 1e-12:
            raise ValueError(
                f"step sizes violate gamma*tau*||A Psi||^2 <= 1 "
                f"({self.gamma * self.tau * self.opnorm ** 2:.4g})")


def default_config(p: int, opnorm: float, K: float = 1, mode: str = "cosharp",
                   max_iter: int | None = None, tol: float = 1e-6) -> SolverConfig:
    """``gamma = 1.2/||A Psi||``, ``tau = 0.8/||A Psi||``, ``T = 4 p^2``, ``eps = 1e-6``.

    The start point is the simplex barycentre ``(K/p) 1`` with a zero dual.
    """
    if not opnorm > 0:
        raise ValueError("operator norm must be positive")
    sigma = 1.0 / opnorm
    T = 4 * p * p if max_iter is None else max_iter
    return SolverConfig(gamma=1.2 * sigma, tau=0.8 * sigma, K=K, max_iter=T, tol=tol,
                        mode=mode, opnorm=opnorm, z0=np.full(p, K / p), u0=None)


@dataclass(eq=False)
class SolverResult:
    z: np.ndarray
    n_iter: int
    residual: float
    trace: np.ndarray
    termination: str  # "tolerance" or "max_iters"
    mode: str = "cosharp"


def sensing_matrix(A, Psi):
    """``A Psi`` as a sparse matrix, or dense when it is well filled."""
    A = A.matrix if isinstance(A, SparseProjector) else A
    Psi = getattr(Psi, "matrix", Psi)
    M = A @ Psi
    if sp.issparse(M):
        if M.nnz > _DENSE_FILL * M.shape[0] * M.shape[1]:
            return M.toarray()
        return M.tocsr()
    return np.asarray(M, dtype=float)


def solve_operator(M, y, config: SolverConfig, callback=None) -> SolverResult:
    """Run the primal-dual iteration on an explicit sensing matrix ``M``.

    Each step is ::

        z+ = P_C(z - gamma M^T u)
        u+ = prox_{tau f*}(u - tau M (z - 2 z+))

    stopping once ``||M z - y|| <= tol`` (then ``z+`` is returned) or after
    ``max_iter`` steps. ``callback(t, z, u)``, if given, sees every new
    iterate pair; it must not modify them.
    """
    y = np.asarray(y, dtype=float)
    m, p = M.shape
    if y.shape != (m,):
        raise DimensionMismatch(f"measurements have shape {y.shape}, operator has {m} rows")
    gamma, tau, K = config.gamma, config.tau, config.K
    if config.mode == "cosharp":
        mu = [None]

        def project(v):
            # warm-start the threshold search from the previous iterate's root
            out, mu[0] = _project_ksimplex(v, K, mu[0])
            return out
    else:
        def project(v):
            return project_l1_ball(v, K)

    z = np.full(p, K / p) if config.z0 is None else np.asarray(config.z0, dtype=float).copy()
    u = np.zeros(m) if config.u0 is None else np.asarray(config.u0, dtype=float).copy()
    if z.shape != (p,) or u.shape != (m,):
        raise DimensionMismatch("initial iterates do not match the operator shape")
    MT = M.T.tocsr() if sp.issparse(M) else M.T
    Mz = M @ z
    trace = []
    termination = "max_iters"
    for _ in range(config.max_iter):
        res = float(np.linalg.norm(Mz - y))
        trace.append(res)
        z_next = project(z - gamma * (MT @ u))
        Mz_next = M @ z_next
        u = prox_conj_misfit(u - tau * (Mz - 2.0 * Mz_next), tau, y)
        if not (np.isfinite(z_next).all() and np.isfinite(u).all()):
            raise NonFiniteIterate(f"non-finite iterate after {len(trace)} iterations", trace)
        if callback is not None:
            callback(len(trace), z_next, u)
        z, Mz = z_next, Mz_next
        if res <= config.tol:
            termination = "tolerance"
            break
    return SolverResult(z=z, n_iter=len(trace), residual=float(np.linalg.norm(Mz - y)),
                        trace=np.asarray(trace), termination=termination, mode=config.mode)


def solve(A, Psi, y, config: SolverConfig, callback=None) -> SolverResult:
    """Recover dictionary coefficients from measurements ``y ~ A Psi z``.

    ``A`` is a :class:`~cosharp.geometry.SparseProjector` (or any matrix) and
    ``Psi`` a :class:`~cosharp.shapes.Dictionary` (or matrix).
    """
    A_mat = A.matrix if isinstance(A, SparseProjector) else A
    Psi_mat = getattr(Psi, "matrix", Psi)
    if A_mat.shape[1] != Psi_mat.shape[0]:
        raise DimensionMismatch(f"A has {A_mat.shape[1]} columns but Psi has {Psi_mat.shape[0]} rows")
    return solve_operator(sensing_matrix(A_mat, Psi_mat), y, config, callback)


class ShapeCoefficientRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper: ``X`` is the sensing matrix ``A Psi`` (rays x atoms).

    Parameters
    ----------
    n_shapes : float, default=1
        Shape budget ``K``.
    constraint : {"cosharp", "ssc"}, default="cosharp"
        K-simplex or l1-ball constraint.
    max_iter : int or None, default=None
        Iteration cap; ``None`` uses ``4 p^2``.
    tol : float, default=1e-6
        Residual tolerance for early stopping.
    step_ratio : tuple of float, default=(1.2, 0.8)
        Primal and dual steps as multiples of ``1 / ||X||``.
    random_state : int, default=0
        Seed of the power-iteration start vector.

    Attributes
    ----------
    coef_ : ndarray of shape (p,)
    opnorm_ : float
    n_iter_ : int
    residual_trace_ : ndarray
    termination_ : str
    """

    def __init__(self, n_shapes=1, constraint="cosharp", max_iter=None, tol=1e-6,
                 step_ratio=(1.2, 0.8), random_state=0):
        self.n_shapes = n_shapes
        self.constraint = constraint
        self.max_iter = max_iter
        self.tol = tol
        self.step_ratio = step_ratio
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, accept_sparse="csr", y_numeric=True)
        self.n_features_in_ = X.shape[1]
        p = X.shape[1]
        self.opnorm_ = operator_norm(X, seed=self.random_state)
        sigma = 1.0 / self.opnorm_
        T = 4 * p * p if self.max_iter is None else self.max_iter
        cfg = SolverConfig(gamma=self.step_ratio[0] * sigma, tau=self.step_ratio[1] * sigma,
                           K=self.n_shapes, max_iter=T, tol=self.tol, mode=self.constraint,
                           opnorm=self.opnorm_)
        res = solve_operator(X, y, cfg)
        self.coef_ = res.z
        self.n_iter_ = res.n_iter
        self.residual_ = res.residual
        self.residual_trace_ = res.trace
        self.termination_ = res.termination
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, accept_sparse="csr", reset=False)
        return np.asarray(X @ self.coef_).ravel()
