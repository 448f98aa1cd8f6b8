"""Cumulant generating function catalog.

Every distribution used by the expansions is exposed through one of two
interfaces:

* :class:`ScalarCgfModel` -- a bivariate pair ``(X, Y)`` described by the
  marginal CGF ``K_Y`` (derivatives to order 4) and the tilted-mean kernel
  ``K_gamma(eta) = d/dgamma K_{X,Y}(gamma, eta) | gamma=0`` (derivatives to
  order 2), plus ``E[X]`` and the convergence interval of ``K_Y``.
* :class:`VectorCgfModel2` -- the same data for a trivariate ``(X, Y1, Y2)``
  with partial-derivative tensors of ``K_Y`` to total order 4.

Concrete models: bivariate normal, proper generalized hyperbolic portfolio
components and their joint (component, portfolio-sum) pairs, delta-gamma
quadratic portfolio losses, a two-asset lognormal model under an exponential
tilt, and a two-asset variance-gamma exchange model under the same kind of
tilt.

All models are immutable after construction and every evaluation is pure, so
instances can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import kv as _scipy_kv

from . import fd
from .errors import DomainError

__all__ = [
    "Interval",
    "Domain2",
    "ScalarCgfModel",
    "VectorCgfModel2",
    "PghParams",
    "DeltaGammaPortfolio",
    "bessel_k",
    "make_bivariate_normal",
    "make_pgh_component",
    "make_pgh_portfolio_joint",
    "build_delta_gamma",
    "make_delta_gamma_cgf",
    "make_gbm_q_model",
    "make_vg_exchange_model",
    "reflect_y",
    "with_x_equal_y",
]

# Open-domain evaluation keeps a strict interior margin: expansions blow up on
# the boundary, so landing exactly there is treated as an error.
_INTERIOR_MARGIN = 1e-12


@dataclass(frozen=True)
class Interval:
    """Open interval (lo, hi) with a strict-interior safety margin."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval ({self.lo}, {self.hi})")

    def _margin(self, bound: float) -> float:
        return _INTERIOR_MARGIN * max(1.0, abs(bound)) if math.isfinite(bound) else 0.0

    def contains(self, eta: float) -> bool:
        lo_ok = eta > self.lo + self._margin(self.lo) if math.isfinite(self.lo) else True
        hi_ok = eta < self.hi - self._margin(self.hi) if math.isfinite(self.hi) else True
        return lo_ok and hi_ok and math.isfinite(eta)

    def require(self, eta: float) -> None:
        if not self.contains(eta):
            raise DomainError(f"eta={eta!r} outside open domain ({self.lo}, {self.hi})")

    def boundary_distance(self, eta: float) -> float:
        """Distance from eta to the nearest finite boundary (inf if none)."""
        d = math.inf
        if math.isfinite(self.lo):
            d = min(d, eta - self.lo)
        if math.isfinite(self.hi):
            d = min(d, self.hi - eta)
        return d

    def intersect(self, other: "Interval") -> "Interval":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        if not lo < hi:
            raise ValueError("domain intersection is empty")
        return Interval(lo, hi)


@dataclass(frozen=True)
class Domain2:
    """Open convex region in the plane: bounding box plus membership test."""

    box1: Interval
    box2: Interval
    member: Callable[[float, float], bool] | None = None

    def contains(self, eta1: float, eta2: float) -> bool:
        if not (self.box1.contains(eta1) and self.box2.contains(eta2)):
            return False
        return self.member(eta1, eta2) if self.member is not None else True

    def require(self, eta1: float, eta2: float) -> None:
        if not self.contains(eta1, eta2):
            raise DomainError(f"({eta1!r}, {eta2!r}) outside the 2-d CGF domain")


class ScalarCgfModel:
    """Joint CGF data for a bivariate (X, Y).

    ``ky``/``ky_deriv`` describe the marginal CGF of Y (orders 1..4) and
    ``kgamma``/``kgamma_deriv`` the tilted-mean kernel and its first two eta
    derivatives.  Evaluations outside ``domain`` raise :class:`DomainError`.
    """

    def __init__(self, ky, ky_deriv, kgamma, kgamma_deriv, mean_x, domain: Interval):
        self._ky = ky
        self._ky_deriv = ky_deriv
        self._kgamma = kgamma
        self._kgamma_deriv = kgamma_deriv
        self.mean_x = float(mean_x)
        self.domain = domain

    def ky(self, eta: float) -> float:
        self.domain.require(eta)
        return self._ky(eta)

    def ky_deriv(self, eta: float, r: int) -> float:
        if r not in (1, 2, 3, 4):
            raise ValueError("ky_deriv order must be 1..4")
        self.domain.require(eta)
        return self._ky_deriv(eta, r)

    def kgamma(self, eta: float) -> float:
        self.domain.require(eta)
        return self._kgamma(eta)

    def kgamma_deriv(self, eta: float, r: int) -> float:
        if r not in (1, 2):
            raise ValueError("kgamma_deriv order must be 1 or 2")
        self.domain.require(eta)
        return self._kgamma_deriv(eta, r)


class VectorCgfModel2:
    """Joint CGF data for a trivariate (X, Y1, Y2).

    Partial derivatives are addressed by the multi-index ``(r1, r2)`` giving
    the number of derivatives in each eta component.
    """

    def __init__(self, ky, ky_partial, kgamma, kgamma_partial, mean_x, domain: Domain2):
        self._ky = ky
        self._ky_partial = ky_partial
        self._kgamma = kgamma
        self._kgamma_partial = kgamma_partial
        self.mean_x = float(mean_x)
        self.domain = domain

    def ky(self, eta1: float, eta2: float) -> float:
        self.domain.require(eta1, eta2)
        return self._ky(eta1, eta2)

    def ky_partial(self, eta1: float, eta2: float, idx: tuple[int, int]) -> float:
        r1, r2 = idx
        if r1 < 0 or r2 < 0 or not 1 <= r1 + r2 <= 4:
            raise ValueError(f"bad multi-index {idx!r}")
        self.domain.require(eta1, eta2)
        return self._ky_partial(eta1, eta2, (r1, r2))

    def kgamma(self, eta1: float, eta2: float) -> float:
        self.domain.require(eta1, eta2)
        return self._kgamma(eta1, eta2)

    def kgamma_partial(self, eta1: float, eta2: float, idx: tuple[int, int]) -> float:
        r1, r2 = idx
        if r1 < 0 or r2 < 0 or not 1 <= r1 + r2 <= 2:
            raise ValueError(f"bad multi-index {idx!r}")
        self.domain.require(eta1, eta2)
        return self._kgamma_partial(eta1, eta2, (r1, r2))

    def ky_hessian(self, eta1: float, eta2: float) -> np.ndarray:
        k11 = self.ky_partial(eta1, eta2, (2, 0))
        k12 = self.ky_partial(eta1, eta2, (1, 1))
        k22 = self.ky_partial(eta1, eta2, (0, 2))
        return np.array([[k11, k12], [k12, k22]])

    def ky_gradient(self, eta1: float, eta2: float) -> np.ndarray:
        return np.array(
            [self.ky_partial(eta1, eta2, (1, 0)), self.ky_partial(eta1, eta2, (0, 1))]
        )


def _fd_table(f, domain: Interval, orders: Sequence[int]):
    """Map derivative order -> FD evaluator on f, respecting the open domain."""

    def make(order):
        def d(eta):
            return fd.derivative(
                f, eta, order, max_offset=0.9 * domain.boundary_distance(eta)
            )

        return d

    return {r: make(r) for r in orders}


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------


def _half_integer_bessel_k(n: int, x: float) -> float:
    # K_{n+1/2}(x) = sqrt(pi/(2x)) e^{-x} sum_k (n+k)!/(k!(n-k)!) (2x)^{-k}
    acc = 0.0
    for k in range(n + 1):
        acc += (
            math.factorial(n + k)
            / (math.factorial(k) * math.factorial(n - k))
            * (2.0 * x) ** (-k)
        )
    return math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) * acc


def bessel_k(lam: float, x: float) -> float:
    """Modified Bessel function of the third kind ``B_lam(x)`` for x > 0.

    Half-integer orders (the NIG case) use the closed-form finite sum; all
    other orders are delegated to scipy's ``kv``.  Symmetric in the order:
    ``B_{-lam} = B_lam``.
    """
    if not x > 0.0:
        raise DomainError(f"bessel_k requires x > 0, got {x!r}")
    lam = abs(lam)
    two_lam = 2.0 * lam
    if abs(two_lam - round(two_lam)) < 1e-12 and round(two_lam) % 2 == 1:
        return _half_integer_bessel_k(int(round(lam - 0.5)), x)
    return float(_scipy_kv(lam, x))


# ---------------------------------------------------------------------------
# Bivariate normal
# ---------------------------------------------------------------------------


def make_bivariate_normal(mu1, mu2, sigma1, sigma2, rho) -> ScalarCgfModel:
    """(X, Y) bivariate normal: K_Y quadratic, K_gamma affine.

    ``K_Y(eta) = mu2*eta + sigma2^2 eta^2/2`` and
    ``K_gamma(eta) = mu1 + rho*sigma1*sigma2*eta``; the domain is the whole
    line.  ``|rho| = 1`` is allowed (degenerate X = linear in Y).
    """
    if sigma1 <= 0 or sigma2 <= 0:
        raise ValueError("standard deviations must be positive")
    if abs(rho) > 1.0:
        raise ValueError("|rho| must be <= 1")
    v2 = sigma2 * sigma2
    cov = rho * sigma1 * sigma2

    def ky(eta):
        return mu2 * eta + 0.5 * v2 * eta * eta

    def ky_deriv(eta, r):
        if r == 1:
            return mu2 + v2 * eta
        if r == 2:
            return v2
        return 0.0

    def kgamma(eta):
        return mu1 + cov * eta

    def kgamma_deriv(eta, r):
        return cov if r == 1 else 0.0

    return ScalarCgfModel(ky, ky_deriv, kgamma, kgamma_deriv, mu1, Interval(-math.inf, math.inf))


# ---------------------------------------------------------------------------
# Proper generalized hyperbolic portfolios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PghParams:
    """Parameters of a proper generalized hyperbolic distribution.

    The proper range excludes variance-gamma-type limits: alpha > 0,
    |beta| < alpha, delta > 0.
    """

    lam: float
    alpha: float
    beta: float
    delta: float
    mu: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not abs(self.beta) < self.alpha:
            raise ValueError("|beta| must be < alpha")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def gamma_bar(self) -> float:
        return math.sqrt(self.alpha**2 - self.beta**2)

    @property
    def mean(self) -> float:
        """E[L]; reduces to mu + delta*beta/sqrt(alpha^2-beta^2) for NIG."""
        return _pgh_component_kprime(self, 1.0, 0.0)


def _pgh_q(p: PghParams, u: float, eta: float) -> float:
    arg = 1.0 - (2.0 * u * p.beta * eta + (u * eta) ** 2) / (p.alpha**2 - p.beta**2)
    if arg <= 0.0:
        raise DomainError(f"eta={eta!r} outside the pGH component domain")
    return math.sqrt(arg)


def _pgh_component_cgf(p: PghParams, u: float, eta: float) -> float:
    q = _pgh_q(p, u, eta)
    vs = p.delta * p.gamma_bar
    return (
        u * p.mu * eta
        + math.log(bessel_k(p.lam, vs * q))
        - math.log(bessel_k(p.lam, vs))
        - p.lam * math.log(q)
    )


def _pgh_component_kprime(p: PghParams, u: float, eta: float) -> float:
    q = _pgh_q(p, u, eta)
    vs = p.delta * p.gamma_bar
    ratio = (bessel_k(p.lam - 1.0, vs * q) + bessel_k(p.lam + 1.0, vs * q)) / bessel_k(
        p.lam, vs * q
    )
    return u * p.mu + (u * p.beta + u * u * eta) / (q * (p.alpha**2 - p.beta**2)) * (
        0.5 * vs * ratio + p.lam / q
    )


def _pgh_domain(p: PghParams, u: float) -> Interval:
    return Interval((-p.alpha - p.beta) / u, (p.alpha - p.beta) / u)


def make_pgh_component(params: PghParams, u: float) -> ScalarCgfModel:
    """Model for the pair (L, uL) with L proper generalized hyperbolic.

    ``K_Y`` is the CGF of the scaled loss uL; the tilted-mean kernel is
    ``K'_{uL}(eta)/u``.  Only the CGF and its first derivative have closed
    forms; orders 2..4 use the finite-difference fallback on the analytic
    first derivative.
    """
    if not u > 0:
        raise ValueError("weight u must be positive")
    domain = _pgh_domain(params, u)

    def ky(eta):
        return _pgh_component_cgf(params, u, eta)

    def kprime(eta):
        return _pgh_component_kprime(params, u, eta)

    def kgamma(eta):
        return kprime(eta) / u

    fd_ky = _fd_table(kprime, domain, (1, 2, 3))
    fd_kg = _fd_table(kgamma, domain, (1, 2))

    def ky_deriv(eta, r):
        if r == 1:
            return kprime(eta)
        return fd_ky[r - 1](eta)

    def kgamma_deriv(eta, r):
        return fd_kg[r](eta)

    return ScalarCgfModel(ky, ky_deriv, kgamma, kgamma_deriv, kgamma(0.0), domain)


def make_pgh_portfolio_joint(
    components: Sequence[tuple[PghParams, float]], i: int
) -> ScalarCgfModel:
    """Model for (L_i, L) with L = sum_j u_j L_j of independent pGH losses.

    ``K_Y = sum_j K_{u_j L_j}`` on the intersection of the component domains
    and ``K_gamma = K'_{u_i L_i}/u_i``.
    """
    if not 0 <= i < len(components):
        raise ValueError(f"component index {i} out of range")
    if not components:
        raise ValueError("portfolio must have at least one component")
    for _, u in components:
        if not u > 0:
            raise ValueError("weights must be positive")
    domain = _pgh_domain(*components[0])
    for comp in components[1:]:
        domain = domain.intersect(_pgh_domain(*comp))

    p_i, u_i = components[i]

    def ky(eta):
        return sum(_pgh_component_cgf(p, u, eta) for p, u in components)

    def kprime(eta):
        return sum(_pgh_component_kprime(p, u, eta) for p, u in components)

    def kgamma(eta):
        return _pgh_component_kprime(p_i, u_i, eta) / u_i

    fd_ky = _fd_table(kprime, domain, (1, 2, 3))
    fd_kg = _fd_table(kgamma, domain, (1, 2))

    def ky_deriv(eta, r):
        if r == 1:
            return kprime(eta)
        return fd_ky[r - 1](eta)

    def kgamma_deriv(eta, r):
        return fd_kg[r](eta)

    return ScalarCgfModel(ky, ky_deriv, kgamma, kgamma_deriv, kgamma(0.0), domain)


# ---------------------------------------------------------------------------
# Delta-gamma portfolios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeltaGammaPortfolio:
    """Quadratic loss Y = f0 + a'X + X'BX with X ~ N(mu, Sigma), diagonalized.

    After centering and rotating, Y = c + d'Z + Z' diag(lambda) Z in
    independent standard normals Z, with H the lower Cholesky factor of Sigma
    and H'BH = P diag(lambda) P'.
    """

    f0: float
    a_vec: np.ndarray
    b_mat: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    c: float
    d_vec: np.ndarray
    lambda_vec: np.ndarray
    p_mat: np.ndarray
    h_mat: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.a_vec)


def build_delta_gamma(f0, a_vec, b_mat, mu, sigma) -> DeltaGammaPortfolio:
    """Decompose a quadratic portfolio loss into independent-normal form.

    Eigenvalues are sorted descending and each eigenvector's first nonzero
    component is made positive, so the decomposition (and hence d) is
    deterministic across platforms.
    """
    a_vec = np.asarray(a_vec, dtype=float)
    b_mat = np.asarray(b_mat, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    m = len(a_vec)
    if b_mat.shape != (m, m) or sigma.shape != (m, m) or mu.shape != (m,):
        raise ValueError("inconsistent dimensions")
    if not np.allclose(b_mat, b_mat.T, atol=1e-12):
        raise ValueError("b_mat must be symmetric")
    try:
        h_mat = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("sigma must be symmetric positive definite") from exc

    hbh = h_mat.T @ b_mat @ h_mat
    hbh = 0.5 * (hbh + hbh.T)
    eigvals, eigvecs = np.linalg.eigh(hbh)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    for j in range(m):
        col = eigvecs[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0:
            eigvecs[:, j] = -col

    c = float(f0 + a_vec @ mu + mu @ b_mat @ mu)
    d_vec = eigvecs.T @ h_mat.T @ (a_vec + 2.0 * b_mat @ mu)

    if np.max(np.abs(hbh - eigvecs @ np.diag(eigvals) @ eigvecs.T)) > 1e-10:
        raise ValueError("eigendecomposition failed its reconstruction check")
    if np.max(np.abs(eigvecs.T @ eigvecs - np.eye(m))) > 1e-10:
        raise ValueError("eigenvectors failed the orthonormality check")

    return DeltaGammaPortfolio(
        f0=float(f0), a_vec=a_vec, b_mat=b_mat, mu=mu, sigma=sigma,
        c=c, d_vec=d_vec, lambda_vec=eigvals, p_mat=eigvecs, h_mat=h_mat,
    )


def delta_gamma_domain(dg: DeltaGammaPortfolio) -> Interval:
    """Open interval on which 1 - 2*lambda_k*eta > 0 for every k."""
    lam = dg.lambda_vec
    hi = math.inf
    lo = -math.inf
    pos = lam[lam > 0]
    neg = lam[lam < 0]
    if pos.size:
        hi = float(1.0 / (2.0 * pos.max()))
    if neg.size:
        lo = float(1.0 / (2.0 * neg.min()))
    return Interval(lo, hi)


def dg_sensitivity_loadings(dg: DeltaGammaPortfolio, i: int) -> np.ndarray:
    """Column i of 2 P'H'B: the Z-loadings of dY/dmu_i."""
    return 2.0 * (dg.p_mat.T @ dg.h_mat.T @ dg.b_mat)[:, i]


def make_delta_gamma_cgf(dg: DeltaGammaPortfolio, i: int) -> ScalarCgfModel:
    """Model for (dY/dmu_i, Y) of a delta-gamma portfolio; fully analytic.

    With s_k = 1 - 2*lambda_k*eta:

    ``K_Y    = c eta - sum log(s_k)/2 + sum d_k^2 eta^2 / (2 s_k)``
    ``K_gamma = a_i + sum(2 b_ik mu_k + e_k d_k eta / s_k)``

    where e is the i-th column of 2 P'H'B.  Derivatives of all required
    orders follow by direct differentiation.
    """
    if not 0 <= i < dg.dim:
        raise ValueError(f"factor index {i} out of range")
    lam = dg.lambda_vec
    d = dg.d_vec
    e = dg_sensitivity_loadings(dg, i)
    c = dg.c
    const = float(dg.a_vec[i] + 2.0 * dg.b_mat[i] @ dg.mu)
    domain = delta_gamma_domain(dg)

    def s(eta):
        return 1.0 - 2.0 * lam * eta

    def ky(eta):
        sk = s(eta)
        return float(c * eta - 0.5 * np.sum(np.log(sk)) + 0.5 * eta * eta * np.sum(d * d / sk))

    def ky_deriv(eta, r):
        sk = s(eta)
        if r == 1:
            return float(c + np.sum(lam / sk + d * d * eta * (1.0 - lam * eta) / sk**2))
        if r == 2:
            return float(np.sum(2.0 * lam**2 / sk**2 + d * d / sk**3))
        if r == 3:
            return float(np.sum(8.0 * lam**3 / sk**3 + 6.0 * lam * d * d / sk**4))
        return float(np.sum(48.0 * lam**4 / sk**4 + 48.0 * lam**2 * d * d / sk**5))

    def kgamma(eta):
        return float(const + np.sum(e * d * eta / s(eta)))

    def kgamma_deriv(eta, r):
        sk = s(eta)
        if r == 1:
            return float(np.sum(e * d / sk**2))
        return float(np.sum(4.0 * lam * e * d / sk**3))

    return ScalarCgfModel(ky, ky_deriv, kgamma, kgamma_deriv, const, domain)


# ---------------------------------------------------------------------------
# Two-asset lognormal model under the vega tilt
# ---------------------------------------------------------------------------


def make_gbm_q_model(
    s1, s2, r, r1, r2, sigma1, sigma2, rho, T, K, H
) -> tuple[VectorCgfModel2, float, float]:
    """Tilted model for (X, Y1, Y2) = (W1(T), W1(T), W2(T)) under exp(sigma1*X).

    Returns the model together with the log-moneyness thresholds (k, h).  The
    base CGF is ``Kb(x, y) = T(x^2/2 + rho x y + y^2/2)``; under the tilt,
    ``K_Y(e1, e2) = Kb(sigma1+e1, e2) - Kb(sigma1, 0)`` and
    ``K_gamma(e1, e2) = T(sigma1 + e1 + rho e2)``.
    """
    if T <= 0 or sigma1 <= 0 or sigma2 <= 0:
        raise ValueError("T and volatilities must be positive")
    if abs(rho) >= 1.0:
        raise ValueError("|rho| must be < 1")
    if s1 <= 0 or s2 <= 0 or K <= 0 or H <= 0:
        raise ValueError("prices and thresholds must be positive")

    def ky(e1, e2):
        u = sigma1 + e1
        return T * (0.5 * u * u - 0.5 * sigma1 * sigma1 + rho * u * e2 + 0.5 * e2 * e2)

    def ky_partial(e1, e2, idx):
        if idx == (1, 0):
            return T * (sigma1 + e1 + rho * e2)
        if idx == (0, 1):
            return T * (rho * (sigma1 + e1) + e2)
        if idx == (2, 0) or idx == (0, 2):
            return T
        if idx == (1, 1):
            return rho * T
        return 0.0

    def kgamma(e1, e2):
        return T * (sigma1 + e1 + rho * e2)

    def kgamma_partial(e1, e2, idx):
        if idx == (1, 0):
            return T
        if idx == (0, 1):
            return rho * T
        return 0.0

    whole_line = Interval(-math.inf, math.inf)
    model = VectorCgfModel2(
        ky, ky_partial, kgamma, kgamma_partial, T * sigma1, Domain2(whole_line, whole_line)
    )
    k = (math.log(K / s1) - (r1 - 0.5 * sigma1**2) * T) / sigma1
    h = (math.log(H / s2) - (r2 - 0.5 * sigma2**2) * T) / sigma2
    return model, k, h


# ---------------------------------------------------------------------------
# Variance-gamma exchange model under the vega tilt
# ---------------------------------------------------------------------------


def _vg_u(theta, kappa, v, x):
    return 1.0 - theta * v * x - 0.5 * kappa * v * x * x


def _vg_u_roots(theta, kappa, v) -> tuple[float, float]:
    # roots of kappa*v*x^2/2 + theta*v*x - 1 = 0; one negative, one positive
    disc = math.sqrt(theta * theta + 2.0 * kappa / v)
    return (-theta - disc) / kappa, (-theta + disc) / kappa


def _vg_cgf_derivs(theta, kappa, v, T, x, r):
    """r-th derivative of -(T/v) log(1 - theta v x - kappa v x^2/2)."""
    u = _vg_u(theta, kappa, v, x)
    if u <= 0.0:
        raise DomainError("argument outside the variance-gamma MGF domain")
    w = theta + kappa * x
    if r == 0:
        return -(T / v) * math.log(u)
    if r == 1:
        return T * w / u
    if r == 2:
        return T * (kappa * u + v * w * w) / u**2
    if r == 3:
        return T * (3.0 * kappa * v * w / u**2 + 2.0 * v * v * w**3 / u**3)
    return T * (3.0 * kappa**2 * v / u**2 + 12.0 * kappa * v * v * w * w / u**3
                + 6.0 * v**3 * w**4 / u**4)


def make_vg_exchange_model(
    theta1, theta2, kappa1, kappa2, v1, v2, sigma2, T, sigma1
) -> ScalarCgfModel:
    """Tilted model for (X, Y) = (X1(T), sigma1 X1(T) - sigma2 X2(T)).

    The Xi are independent variance-gamma processes with per-asset CGF
    ``Ki(x) = -(T/vi) log(1 - theta_i v_i x - kappa_i v_i x^2/2)`` and the
    tilt is exp(sigma1*X1(T)).  Then

    ``K_Y(eta)    = K1((1+eta) sigma1) + K2(-eta sigma2) - K1(sigma1)``
    ``K_gamma(eta) = K1'((1+eta) sigma1)``

    on the intersection of the two quadratic positivity regions.  All
    derivatives are analytic.
    """
    for name, val in (("kappa1", kappa1), ("kappa2", kappa2), ("v1", v1),
                      ("v2", v2), ("sigma2", sigma2), ("T", T)):
        if not val > 0:
            raise ValueError(f"{name} must be positive")
    if _vg_u(theta1, kappa1, v1, sigma1) <= 0.0:
        raise ValueError("sigma1 lies outside the MGF existence region")

    x1_lo, x1_hi = _vg_u_roots(theta1, kappa1, v1)
    x2_lo, x2_hi = _vg_u_roots(theta2, kappa2, v2)
    # (1+eta)*sigma1 in (x1_lo, x1_hi) and -eta*sigma2 in (x2_lo, x2_hi)
    dom1 = Interval(x1_lo / sigma1 - 1.0, x1_hi / sigma1 - 1.0)
    dom2 = Interval(-x2_hi / sigma2, -x2_lo / sigma2)
    domain = dom1.intersect(dom2)

    k1_at_tilt = _vg_cgf_derivs(theta1, kappa1, v1, T, sigma1, 0)

    def ky(eta):
        return (
            _vg_cgf_derivs(theta1, kappa1, v1, T, (1.0 + eta) * sigma1, 0)
            + _vg_cgf_derivs(theta2, kappa2, v2, T, -eta * sigma2, 0)
            - k1_at_tilt
        )

    def ky_deriv(eta, r):
        return (
            sigma1**r * _vg_cgf_derivs(theta1, kappa1, v1, T, (1.0 + eta) * sigma1, r)
            + (-sigma2) ** r * _vg_cgf_derivs(theta2, kappa2, v2, T, -eta * sigma2, r)
        )

    def kgamma(eta):
        return _vg_cgf_derivs(theta1, kappa1, v1, T, (1.0 + eta) * sigma1, 1)

    def kgamma_deriv(eta, r):
        return sigma1**r * _vg_cgf_derivs(theta1, kappa1, v1, T, (1.0 + eta) * sigma1, r + 1)

    return ScalarCgfModel(ky, ky_deriv, kgamma, kgamma_deriv, kgamma(0.0), domain)


# ---------------------------------------------------------------------------
# Generic model transforms
# ---------------------------------------------------------------------------


def reflect_y(model: ScalarCgfModel) -> ScalarCgfModel:
    """Model for (X, -Y): lower-tail questions become upper-tail ones."""
    dom = Interval(-model.domain.hi, -model.domain.lo)
    return ScalarCgfModel(
        ky=lambda eta: model.ky(-eta),
        ky_deriv=lambda eta, r: (-1.0) ** r * model.ky_deriv(-eta, r),
        kgamma=lambda eta: model.kgamma(-eta),
        kgamma_deriv=lambda eta, r: (-1.0) ** r * model.kgamma_deriv(-eta, r),
        mean_x=model.mean_x,
        domain=dom,
    )


def with_x_equal_y(model: ScalarCgfModel) -> ScalarCgfModel:
    """Model for the degenerate pair (Y, Y): K_gamma becomes K_Y'."""
    return ScalarCgfModel(
        ky=model.ky,
        ky_deriv=model.ky_deriv,
        kgamma=lambda eta: model.ky_deriv(eta, 1),
        kgamma_deriv=lambda eta, r: model.ky_deriv(eta, r + 1),
        mean_x=model.ky_deriv(0.0, 1),
        domain=model.domain,
    )
