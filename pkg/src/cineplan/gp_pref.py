"""Gaussian-process preference learning over 4-DoF camera poses.

Latent pose utility carries a zero-mean GP prior whose covariance factorizes
into a yaw kernel (squared exponential on the chordal angle distance, which
is positive definite on the circle) and a squared-exponential translation
kernel. Pairwise choices enter through a Bradley-Terry logistic likelihood;
the posterior is approximated by a Laplace fit at the penalized mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConvergenceError, InvalidArgumentError, NumericalError
from .geom import Pose4, wrap_angle


@dataclass(frozen=True)
class KernelParams:
    sigma_f: float = 1.0
    ell_rot: float = 0.5
    ell_trans: float = 0.75
    eps: float = 1e-4

    def __post_init__(self):
        for name in ("sigma_f", "ell_rot", "ell_trans", "eps"):
            if getattr(self, name) <= 0:
                raise InvalidArgumentError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class PreferenceObservation:
    """s = +1 means pose i preferred over pose j."""

    i: int
    j: int
    s: int

    def __post_init__(self):
        if self.i == self.j:
            raise InvalidArgumentError("comparison needs two distinct poses")
        if self.s not in (+1, -1):
            raise InvalidArgumentError(f"s must be +1 or -1, got {self.s}")


def _pose_features(poses: list[Pose4]) -> tuple[np.ndarray, np.ndarray]:
    P = np.stack([pose.p for pose in poses]) if poses else np.zeros((0, 3))
    th = np.array([pose.theta for pose in poses])
    return P, th


def kernel_eval(a: Pose4, b: Pose4, params: KernelParams, same_index: bool = False) -> float:
    """Factorized yaw x translation covariance between two poses.

    The yaw factor uses the chordal distance 2*sin(|dtheta|/2); eps is added
    only when a and b are the same training index.
    """
    dth = wrap_angle(a.theta - b.theta)
    c = 2.0 * math.sin(abs(dth) / 2.0)
    k_rot = math.exp(-(c**2) / (2.0 * params.ell_rot**2))
    d2 = float(np.sum((a.p - b.p) ** 2))
    k_trans = math.exp(-d2 / (2.0 * params.ell_trans**2))
    val = params.sigma_f**2 * k_rot * k_trans
    if same_index:
        val += params.eps
    return val


def kernel_matrix(xs: list[Pose4], ys: list[Pose4], params: KernelParams) -> np.ndarray:
    """Cross-covariance matrix, no jitter term (distinct index sets)."""
    Px, thx = _pose_features(xs)
    Py, thy = _pose_features(ys)
    dth = thx[:, None] - thy[None, :]
    chord = 2.0 * np.sin(np.abs(np.arctan2(np.sin(dth), np.cos(dth))) / 2.0)
    k_rot = np.exp(-(chord**2) / (2.0 * params.ell_rot**2))
    d2 = np.sum((Px[:, None, :] - Py[None, :, :]) ** 2, axis=-1)
    k_trans = np.exp(-d2 / (2.0 * params.ell_trans**2))
    return params.sigma_f**2 * k_rot * k_trans


def gram_matrix(xs: list[Pose4], params: KernelParams) -> np.ndarray:
    """Training Gram matrix including the eps-per-index jitter."""
    K = kernel_matrix(xs, xs, params)
    return K + params.eps * np.eye(len(xs))


def bt_likelihood(s: int, f_i: float, f_j: float) -> float:
    """Bradley-Terry probability of observing choice s for utilities (f_i, f_j)."""
    if s not in (+1, -1):
        raise InvalidArgumentError(f"s must be +1 or -1, got {s}")
    z = s * (f_i - f_j)
    # numerically stable logistic
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def _loglik_grad_hess(f: np.ndarray, obs: list[PreferenceObservation]):
    """Log-likelihood, gradient, and negative Hessian W of the BT likelihood."""
    n = len(f)
    ll = 0.0
    grad = np.zeros(n)
    W = np.zeros((n, n))
    for o in obs:
        z = o.s * (f[o.i] - f[o.j])
        # log sigma(z), stable
        ll += -np.logaddexp(0.0, -z)
        sig = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
        g = o.s * (1.0 - sig)
        grad[o.i] += g
        grad[o.j] -= g
        w = sig * (1.0 - sig)
        W[o.i, o.i] += w
        W[o.j, o.j] += w
        W[o.i, o.j] -= w
        W[o.j, o.i] -= w
    return ll, grad, W


@dataclass(frozen=True)
class GPState:
    X: tuple
    obs: tuple
    params: KernelParams
    f_hat: np.ndarray
    W: np.ndarray
    K: np.ndarray
    K_chol: tuple = field(repr=False, default=None)
    A_chol: tuple = field(repr=False, default=None)  # factorization of K^-1 + W


def laplace_fit(
    X: list[Pose4],
    obs: list[PreferenceObservation],
    params: KernelParams,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> GPState:
    """Newton iteration to the penalized likelihood mode.

    Maximizes log p(obs | f) - 0.5 f^T K^-1 f; caches the mode, the
    likelihood curvature W, and the factorizations prediction needs.
    """
    n = len(X)
    for o in obs:
        if not (0 <= o.i < n and 0 <= o.j < n):
            raise InvalidArgumentError(f"observation ({o.i},{o.j}) addresses a missing pose")
    if n == 0:
        return GPState(
            X=(), obs=(), params=params, f_hat=np.zeros(0), W=np.zeros((0, 0)), K=np.zeros((0, 0))
        )
    K = gram_matrix(X, params)
    try:
        K_chol = cho_factor(K, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"kernel matrix factorization failed: {exc}") from exc

    f = np.zeros(n)
    if obs:
        K_inv = cho_solve(K_chol, np.eye(n))
        converged = False
        grad_norm = math.inf
        for _ in range(max_iter):
            _, grad_ll, W = _loglik_grad_hess(f, obs)
            grad = grad_ll - cho_solve(K_chol, f)
            grad_norm = float(np.linalg.norm(grad))
            if grad_norm <= tol:
                converged = True
                break
            H = W + K_inv
            try:
                step = np.linalg.solve(H, grad)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"Newton system solve failed: {exc}") from exc
            # backtracking keeps the objective from overshooting on saturated pairs
            obj0 = _penalized_obj(f, obs, K_chol)
            t = 1.0
            while t > 1e-6:
                f_new = f + t * step
                if _penalized_obj(f_new, obs, K_chol) >= obj0:
                    break
                t *= 0.5
            f = f + t * step
        else:
            converged = False
        if not converged:
            # final check: the loop may have hit max_iter right at tolerance
            _, grad_ll, W = _loglik_grad_hess(f, obs)
            grad_norm = float(np.linalg.norm(grad_ll - cho_solve(K_chol, f)))
            if grad_norm > tol:
                raise ConvergenceError(
                    f"Laplace Newton did not converge (grad norm {grad_norm:.3e})", grad_norm
                )
    _, _, W = _loglik_grad_hess(f, obs)
    A = cho_solve(K_chol, np.eye(n)) + W
    try:
        A_chol = cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"posterior curvature factorization failed: {exc}") from exc
    return GPState(
        X=tuple(X), obs=tuple(obs), params=params, f_hat=f, W=W, K=K, K_chol=K_chol, A_chol=A_chol
    )


def _penalized_obj(f: np.ndarray, obs, K_chol) -> float:
    ll, _, _ = _loglik_grad_hess(f, obs)
    return ll - 0.5 * float(f @ cho_solve(K_chol, f))


def prior_state(params: KernelParams) -> GPState:
    """GP with no training data; predictions fall back to the prior."""
    return laplace_fit([], [], params)


def posterior_predict(state: GPState, Q: list[Pose4]) -> tuple[np.ndarray, np.ndarray]:
    """Laplace-approximated predictive mean and covariance at query poses."""
    params = state.params
    Kqq = gram_matrix(Q, params)
    if len(state.X) == 0:
        return np.zeros(len(Q)), Kqq
    Kq = kernel_matrix(Q, list(state.X), params)  # (m, n)
    alpha = cho_solve(state.K_chol, state.f_hat)
    mean = Kq @ alpha
    # (K + W^-1)^-1 = K^-1 - K^-1 (K^-1 + W)^-1 K^-1, valid for singular W
    V = cho_solve(state.K_chol, Kq.T)  # K^-1 k_*
    correction = V.T @ cho_solve(state.A_chol, V)
    cov = Kqq - Kq @ V + correction
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def posterior_sample(state: GPState, Q: list[Pose4], rng: np.random.Generator) -> np.ndarray:
    """One joint draw from the predictive Gaussian at the query poses.

    Uses an eigendecomposition with clipped eigenvalues so degenerate
    covariances collapse exactly to the mean.
    """
    mean, cov = posterior_predict(state, Q)
    w, V = np.linalg.eigh(cov)
    w = np.clip(w, 0.0, None)
    L = V * np.sqrt(w)
    z = rng.standard_normal(len(Q))
    return mean + L @ z
