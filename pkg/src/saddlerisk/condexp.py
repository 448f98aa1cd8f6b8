"""Saddlepoint expansions for conditional expectations of i.i.d. sample means.

For a bivariate pair (X, Y) with tilted-mean kernel ``K_gamma``, the module
provides expansions of ``E[Xbar | Ybar = a]`` and ``E[Xbar | Ybar >= a]``
(including the zero-saddlepoint branch and the lower-tail variant), and their
two-dimensional extensions ``E[Xbar | Ybar = a]`` for a 2-vector Y and the
tail-weighted mean ``E[Xbar 1{Ybar >= a}]`` built from a sequential change of
variable in the inversion integral.

Notation used throughout: ``w = omega_hat``, ``z = z_hat``, ``rho3``/``rho4``
standardized cumulants at the saddlepoint, ``D = rho4/8 - 5 rho3^2/24``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .cgf import ScalarCgfModel, VectorCgfModel2, reflect_y
from .classical import (
    binorm_cdf_bar,
    cumulant_tensors_2d,
    lugannani_rice,
    norm_pdf,
    norm_sf,
)
from .errors import BranchError, DegenerateGeometryError, UnsupportedCaseError
from .saddle import Saddlepoint1, Saddlepoint2, inner_min_eta2, solve_saddle_1d, solve_saddle_2d

_SQRT_TWO_PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Diagnostics:
    eta_hat: object
    omega_hat: object
    z_hat: Optional[float]
    rho3: Optional[float]
    rho4: Optional[float]


@dataclass(frozen=True)
class CondExpResult:
    """Expansion output split into its leading term and decaying correction."""

    value: float
    leading: float
    correction: float
    branch: str  # "regular" | "eta_zero"
    diagnostics: Diagnostics


def _diag1(sp: Saddlepoint1) -> Diagnostics:
    return Diagnostics(sp.eta_hat, sp.omega_hat, sp.z_hat, sp.rho3, sp.rho4)


# ---------------------------------------------------------------------------
# d = 1
# ---------------------------------------------------------------------------


def cond_exp_eq_1d(
    model: ScalarCgfModel, a: float, n: int, mode: str = "simple"
) -> CondExpResult:
    """E[Xbar | Ybar = a] to relative order 1/n.

    ``simple`` divides out the density expansion analytically:

        K_gamma(eta) + [rho3 Kg'/(2 sqrt(K'')) - Kg''/(2 K'')] / (n + D)

    ``ratio`` keeps numerator and density brackets separate before dividing
    (their common exponential prefactor cancels exactly and is never formed).
    """
    if mode not in ("simple", "ratio"):
        raise ValueError(f"unknown mode {mode!r}")
    sp = solve_saddle_1d(model, a)
    kg = model.kgamma(sp.eta_hat)
    kg1 = model.kgamma_deriv(sp.eta_hat, 1)
    kg2 = model.kgamma_deriv(sp.eta_hat, 2)
    dd = sp.rho4 / 8.0 - 5.0 * sp.rho3**2 / 24.0
    num = sp.rho3 * kg1 / (2.0 * math.sqrt(sp.ky_pp)) - kg2 / (2.0 * sp.ky_pp)
    if mode == "simple":
        value = kg + num / (n + dd)
    else:
        value = (kg + (dd * kg + num) / n) / (1.0 + dd / n)
    return CondExpResult(value, kg, value - kg, "regular", _diag1(sp))


def _geq_regular_pieces(model, sp: Saddlepoint1, n: int):
    """phi-prefactor and the two bracket levels of the upper-tail expansion."""
    kg = model.kgamma(sp.eta_hat)
    kg1 = model.kgamma_deriv(sp.eta_hat, 1)
    kg2 = model.kgamma_deriv(sp.eta_hat, 2)
    z = sp.z_hat
    kpp = sp.ky_pp
    dd = sp.rho4 / 8.0 - 5.0 * sp.rho3**2 / 24.0
    dk = kg - model.mean_x
    lead = dk / z
    corr = (
        dk / z * (dd - sp.rho3 / (2.0 * z) - 1.0 / (z * z))
        + (sp.rho3 / 2.0 + 1.0 / z) * kg1 / (z * math.sqrt(kpp))
        - kg2 / (2.0 * z * kpp)
    )
    phi_n = norm_pdf(math.sqrt(n) * sp.omega_hat) / math.sqrt(n)
    return phi_n, lead, corr


def cond_exp_geq_1d(
    model: ScalarCgfModel,
    a: float,
    n: int,
    tail_prob: float | None = None,
) -> CondExpResult:
    """E[Xbar | Ybar >= a] to relative order 1/n.

    The tail probability in the denominator comes from the order-1
    Lugannani-Rice expansion by default; pass ``tail_prob`` to substitute an
    externally estimated probability (e.g. an exact value or a Monte Carlo
    one).  At the mean crossing the zero-saddlepoint branch is used, whose
    leading tail probability is 1/2 unless supplied.
    """
    sp = solve_saddle_1d(model, a)
    mu = model.mean_x
    if sp.is_near_zero():
        p = 0.5 if tail_prob is None else tail_prob
        if not 0.0 < p <= 1.0:
            raise ValueError("tail probability must be in (0, 1]")
        kg1_0 = model.kgamma_deriv(0.0, 1)
        corr = kg1_0 / (math.sqrt(2.0 * math.pi * n * model.ky_deriv(0.0, 2)) * p)
        return CondExpResult(mu + corr, mu, corr, "eta_zero", _diag1(sp))
    p = lugannani_rice(sp, a, n, order=1) if tail_prob is None else tail_prob
    if not 0.0 < p <= 1.0:
        raise ValueError("tail probability must be in (0, 1]")
    phi_n, lead, corr = _geq_regular_pieces(model, sp, n)
    leading = mu + phi_n / p * lead
    correction = phi_n / p * corr / n
    return CondExpResult(leading + correction, leading, correction, "regular", _diag1(sp))


def tail_weighted_mean_1d(model: ScalarCgfModel, a: float, n: int) -> float:
    """E[Xbar 1{Ybar >= a}]: the upper-tail expansion with its own
    Lugannani-Rice tail folded in.

    Reduces to the Temme-style tail mean when X = Y.  Regular branch only.
    """
    sp = solve_saddle_1d(model, a)
    if sp.is_near_zero():
        raise BranchError("tail-weighted mean requires a saddlepoint away from zero")
    mu = model.mean_x
    kg = model.kgamma(sp.eta_hat)
    kg1 = model.kgamma_deriv(sp.eta_hat, 1)
    kg2 = model.kgamma_deriv(sp.eta_hat, 2)
    w, z, kpp = sp.omega_hat, sp.z_hat, sp.ky_pp
    dd = sp.rho4 / 8.0 - 5.0 * sp.rho3**2 / 24.0
    rw = math.sqrt(n) * w
    bracket = kg / z - mu / w
    bracket += (
        kg / z * (dd - sp.rho3 / (2.0 * z) - 1.0 / (z * z))
        + mu / w**3
        + (sp.rho3 / 2.0 + 1.0 / z) * kg1 / (z * math.sqrt(kpp))
        - kg2 / (2.0 * z * kpp)
    ) / n
    return mu * norm_sf(rw) + norm_pdf(rw) / math.sqrt(n) * bracket


def cond_exp_lower_1d(model: ScalarCgfModel, a: float, n: int) -> CondExpResult:
    """E[Xbar | Ybar <= a], computed on the reflected pair (X, -Y).

    Algebraically identical to (E[X] - upper-tail integral)/P[Ybar <= a];
    the reflection path is the one returned.
    """
    refl = reflect_y(model)
    sp = solve_saddle_1d(refl, -a)
    if sp.is_near_zero():
        res = cond_exp_geq_1d(refl, -a, n)
        return res
    p = lugannani_rice(sp, -a, n, order=1)
    phi_n, lead, corr = _geq_regular_pieces(refl, sp, n)
    mu = model.mean_x
    leading = mu + phi_n / p * lead
    correction = phi_n / p * corr / n
    return CondExpResult(leading + correction, leading, correction, "regular", _diag1(sp))


# ---------------------------------------------------------------------------
# d = 2: conditional expectation given equality
# ---------------------------------------------------------------------------


class OmegaMap2:
    """Sequential change of variable for a 2-d model at target a.

    omega1 depends on eta1 alone through the partially minimized exponent;
    omega2 measures the remaining drop at fixed eta1.  Provides the forward
    maps, their numeric inverse, and the eta2 = 0 ridge ``tilde_omega2``.
    """

    def __init__(self, model: VectorCgfModel2, a, sp: Saddlepoint2):
        self.model = model
        self.a = np.asarray(a, dtype=float)
        self.sp = sp
        self._ell_hat = sp.ky_val - float(sp.eta_hat @ self.a)

    def inner(self, eta1: float) -> float:
        return inner_min_eta2(self.model, eta1, self.a[1])

    def _ell(self, eta1: float) -> float:
        t2 = self.inner(eta1)
        return self.model.ky(eta1, t2) - eta1 * self.a[0] - t2 * self.a[1]

    def omega1(self, eta1: float) -> float:
        drop = self._ell(eta1) - self._ell_hat
        return self.sp.omega_hat[0] + math.copysign(
            math.sqrt(max(2.0 * drop, 0.0)), eta1 - self.sp.eta_hat[0]
        )

    def omega2(self, eta1: float, eta2: float) -> float:
        t2 = self.inner(eta1)
        drop = (self.model.ky(eta1, eta2) - eta2 * self.a[1]) - (
            self.model.ky(eta1, t2) - t2 * self.a[1]
        )
        return self.sp.omega_hat[1] + math.copysign(
            math.sqrt(max(2.0 * drop, 0.0)), eta2 - t2
        )

    def _invert(self, f, target, x0, scale) -> float:
        g = lambda x: f(x) - target
        g0 = g(x0)
        if g0 == 0.0:
            return x0
        step = max(1e-8, 0.7 * abs(target - f(x0)) * scale)
        lo, hi = (x0, x0 + step) if g0 < 0 else (x0 - step, x0)
        probe = hi if g0 < 0 else lo
        for _ in range(80):
            if (g(probe) > 0.0) != (g0 > 0.0):
                break
            step *= 1.7
            probe = x0 + step if g0 < 0 else x0 - step
        else:
            raise DegenerateGeometryError("omega inversion failed to bracket")
        lo, hi = (x0, probe) if g0 < 0 else (probe, x0)
        return brentq(g, lo, hi, xtol=1e-14, rtol=8.9e-16)

    def eta_of_omega(self, w1: float, w2: float) -> tuple[float, float]:
        h11 = self.model.ky_partial(*self.sp.eta_hat, (2, 0))
        e1 = self._invert(self.omega1, w1, float(self.sp.eta_hat[0]), 1.0 / math.sqrt(h11))
        h22 = self.model.ky_partial(*self.sp.eta_hat, (0, 2))
        e2 = self._invert(
            lambda x: self.omega2(e1, x), w2, self.inner(e1), 1.0 / math.sqrt(h22)
        )
        return e1, e2

    def tilde_omega2(self, w1: float) -> float:
        h11 = self.model.ky_partial(*self.sp.eta_hat, (2, 0))
        e1 = self._invert(self.omega1, w1, float(self.sp.eta_hat[0]), 1.0 / math.sqrt(h11))
        return self.omega2(e1, 0.0)


def _beta_coefficients(model: VectorCgfModel2, a, sp: Saddlepoint2):
    """(beta, beta_i, beta_ij) of the 2-d density-ratio correction.

    beta and beta_ij have exact tensor forms (beta/2 is the 2-d density
    correction, beta_ij = -[K''^{-1}]_ij); beta_i is assembled by finite
    differences of the sequential eta(omega) map, whose second derivatives
    carry the third-cumulant information.
    """
    tens = cumulant_tensors_2d(model, float(sp.eta_hat[0]), float(sp.eta_hat[1]))
    beta = (tens.varrho4 - tens.varrho13) / 4.0 - tens.varrho23 / 6.0
    beta_ij = -tens.k2_inv

    amap = OmegaMap2(model, a, sp)
    w_hat = np.array(sp.omega_hat, dtype=float)
    delta = 1e-2

    def eta_at(w):
        return np.array(amap.eta_of_omega(w[0], w[1]))

    def log_det_a(w):
        e1, e2 = amap.eta_of_omega(w[0], w[1])
        h = 1e-4
        dw1 = (amap.omega1(e1 + h) - amap.omega1(e1 - h)) / (2.0 * h)
        dw2 = (amap.omega2(e1, e2 + h) - amap.omega2(e1, e2 - h)) / (2.0 * h)
        return -math.log(dw1 * dw2)

    beta_i = np.zeros(2)
    for k in range(2):
        ek = np.zeros(2)
        ek[k] = delta
        ep = eta_at(w_hat + ek)
        em = eta_at(w_hat - ek)
        d1 = (ep - em) / (2.0 * delta)
        d2 = (ep - 2.0 * sp.eta_hat + em) / (delta * delta)
        dlog = (log_det_a(w_hat + ek) - log_det_a(w_hat - ek)) / (2.0 * delta)
        beta_i += -(d2 + 2.0 * d1 * dlog)
    return beta, beta_i, beta_ij


def cond_exp_eq_2d(model: VectorCgfModel2, a, n: int, order: int = 0) -> CondExpResult:
    """E[Xbar | Ybar = a] for a 2-vector Y.

    Order 0 is ``K_gamma(eta_hat)`` (the density prefactors cancel); order 1
    adds the correction

        [sum_i dK_gamma/deta_i beta_i + sum_ij d2K_gamma beta_ij] / (2n + beta).
    """
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    a = np.asarray(a, dtype=float)
    sp = solve_saddle_2d(model, a)
    e1, e2 = float(sp.eta_hat[0]), float(sp.eta_hat[1])
    kg = model.kgamma(e1, e2)
    diag = Diagnostics(sp.eta_hat.copy(), sp.omega_hat.copy(), None, None, None)
    if order == 0:
        return CondExpResult(kg, kg, 0.0, "regular", diag)
    beta, beta_i, beta_ij = _beta_coefficients(model, a, sp)
    grad = np.array([model.kgamma_partial(e1, e2, (1, 0)), model.kgamma_partial(e1, e2, (0, 1))])
    hess = np.array(
        [
            [model.kgamma_partial(e1, e2, (2, 0)), model.kgamma_partial(e1, e2, (1, 1))],
            [model.kgamma_partial(e1, e2, (1, 1)), model.kgamma_partial(e1, e2, (0, 2))],
        ]
    )
    corr = (float(grad @ beta_i) + float(np.sum(hess * beta_ij))) / (2.0 * n + beta)
    return CondExpResult(kg + corr, kg, corr, "regular", diag)


# ---------------------------------------------------------------------------
# d = 2: tail-weighted mean
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Thm42Aux:
    """Auxiliary quantities of the 2-d tail expansion at a solved saddlepoint.

    ``check_omega2`` is the eta2 = 0 ridge value of omega2 at omega1_hat, the
    primes are its derivatives there, (b0, b1) give the linearized ridge
    slope, and (x_hat, y_hat, rho_hat, t_hat) are the sqrt(n)-scaled
    bivariate-normal arguments.  ``g_check`` is the exponent correction and
    (k1_val, k2_val) the two pole-residue factors.
    """

    check_omega2: float
    check_omega2_p: float
    check_omega2_pp: float
    deta1_domega1: float
    d2eta1_domega1sq: float
    tilde_eta2_p: float
    tilde_eta2_pp: float
    b0: float
    b1: float
    x_hat: float
    y_hat: float
    rho_hat: float
    t_hat: float
    g_check: float
    k1_val: float
    k2_val: float


def compute_thm42_aux(model: VectorCgfModel2, sp: Saddlepoint2, n: int = 1) -> Thm42Aux:
    """Assemble every auxiliary variable of the 2-d tail expansion.

    Requires both saddlepoint components strictly positive; other sign
    patterns are outside the supported regime.
    """
    e1, e2 = float(sp.eta_hat[0]), float(sp.eta_hat[1])
    if e1 <= 0.0 or e2 <= 0.0:
        raise UnsupportedCaseError(
            "2-d tail expansion requires both saddlepoint components positive"
        )
    a1, a2 = float(sp.a[0]), float(sp.a[1])
    w1, w2 = float(sp.omega_hat[0]), float(sp.omega_hat[1])
    t20 = sp.tilde_eta2_of_0

    k11 = model.ky_partial(e1, e2, (2, 0))
    k12 = model.ky_partial(e1, e2, (1, 1))
    k22 = model.ky_partial(e1, e2, (0, 2))
    k111 = model.ky_partial(e1, e2, (3, 0))
    k112 = model.ky_partial(e1, e2, (2, 1))
    k122 = model.ky_partial(e1, e2, (1, 2))
    k222 = model.ky_partial(e1, e2, (0, 3))

    t2p = -k12 / k22
    t2pp = -(k112 + 2.0 * k122 * t2p + k222 * t2p * t2p) / k22
    ell_pp = k11 + k12 * t2p
    de1 = 1.0 / math.sqrt(ell_pp)
    d2e1 = -(k111 + 2.0 * k112 * t2p + k122 * t2p * t2p + k12 * t2pp) * de1 * de1 / (3.0 * ell_pp)

    # ridge value: omega2 at (eta1_hat, eta2 = 0)
    drop = model.ky(e1, 0.0) - (sp.ky_val - e2 * a2)
    cw2 = w2 + math.copysign(math.sqrt(max(2.0 * drop, 0.0)), -e2)
    if abs(cw2 - w2) < 1e-12 * max(1.0, abs(w2)):
        raise DegenerateGeometryError("ridge and saddle omega2 coincide")
    k1_slice = model.ky_partial(e1, 0.0, (1, 0))
    cw2_p = (k1_slice - a1) * de1 / (cw2 - w2)
    k11_slice = model.ky_partial(e1, 0.0, (2, 0))
    cw2_pp = (
        (k11_slice - k11 - k12 * t2p) * de1 * de1
        + (k1_slice - a1) * d2e1
        - cw2_p * cw2_p
    ) / (cw2 - w2)

    b0 = cw2_p - 0.5 * cw2_pp * w1
    b1 = 0.5 * cw2_pp
    rn = math.sqrt(n)
    s0 = math.sqrt(1.0 + b0 * b0)
    x_hat = rn * (w1 + b0 * w2) / s0
    y_hat = rn * w2
    rho_hat = b0 / s0
    t_hat = rn * s0 * w1
    g_check = (cw2 - cw2_p * w1) * (0.5 * cw2 - 0.5 * cw2_p * w1 - w2)

    kg00 = model.kgamma(0.0, 0.0)
    kg10 = model.kgamma(e1, 0.0)
    kg02 = model.kgamma(0.0, t20)
    k1_val = (kg10 - kg00) / w1 + kg10 * (1.0 / (e1 * math.sqrt(ell_pp)) - 1.0 / w1)
    k2_val = (kg02 - kg00) / w2

    return Thm42Aux(
        check_omega2=cw2, check_omega2_p=cw2_p, check_omega2_pp=cw2_pp,
        deta1_domega1=de1, d2eta1_domega1sq=d2e1,
        tilde_eta2_p=t2p, tilde_eta2_pp=t2pp,
        b0=b0, b1=b1, x_hat=x_hat, y_hat=y_hat, rho_hat=rho_hat, t_hat=t_hat,
        g_check=g_check, k1_val=k1_val, k2_val=k2_val,
    )


def tail_weighted_mean_2d(model: VectorCgfModel2, a, n: int) -> float:
    """E[Xbar 1{Ybar1 >= a1, Ybar2 >= a2}] to absolute order 1/n.

    Exact for jointly Gaussian (X, Y1, Y2).  Requires both saddlepoint
    components strictly positive and the model finite at (eta1_hat, 0),
    (0, tilde_eta2(0)) and the origin.
    """
    a = np.asarray(a, dtype=float)
    sp = solve_saddle_2d(model, a)
    aux = compute_thm42_aux(model, sp, n)
    sp.aux = aux

    mu = model.mean_x
    w1, w2 = float(sp.omega_hat[0]), float(sp.omega_hat[1])
    t20 = sp.tilde_eta2_of_0
    rn = math.sqrt(n)
    if abs(w1) < 1e-10 or abs(w2) < 1e-10 or abs(t20) < 1e-10:
        raise UnsupportedCaseError("a component of the target sits at a mean crossing")

    xh, yh, rh, th = aux.x_hat, aux.y_hat, aux.rho_hat, aux.t_hat
    s1m = math.sqrt(1.0 - rh * rh)
    cond_arg = (yh - rh * xh) / s1m

    lead = mu * binorm_cdf_bar(xh, yh, rh)

    ridge_term = (
        mu
        * aux.b1
        / (1.0 + aux.b0**2)
        * norm_pdf(xh)
        * (
            s1m * (xh - th) * norm_pdf(cond_arg)
            - (rh + xh * yh - rh * xh * xh - yh * th + rh * xh * th) * norm_sf(cond_arg)
        )
    )

    k22_slice = model.ky_partial(0.0, t20, (0, 2))
    lem_term = (
        model.kgamma(0.0, t20)
        * (1.0 / (t20 * math.sqrt(k22_slice)) - 1.0 / w2)
        * norm_pdf(rn * w2)
        * norm_sf(rn * w1)
    )

    s2 = math.sqrt(1.0 + aux.check_omega2_p**2)
    c1 = ((1.0 + aux.check_omega2_p**2) * w1 + aux.check_omega2_p * (w2 - aux.check_omega2)) / s2
    c2 = aux.check_omega2_p * w1 + w2 - aux.check_omega2
    # fold exp(n g_check) into the normal densities to keep the exponents tame
    k1_term = (
        aux.k1_val / s2
        * math.exp(n * aux.g_check - 0.5 * n * c1 * c1) / _SQRT_TWO_PI
        * norm_sf(rn * (w2 - aux.check_omega2) / s2)
    )
    k2_term = (
        aux.k2_val
        * math.exp(n * aux.g_check - 0.5 * n * c2 * c2) / _SQRT_TWO_PI
        * norm_sf(rn * w1)
    )

    return lead + (ridge_term + lem_term + k1_term + k2_term) / rn


def cond_exp_geq_2d(model: VectorCgfModel2, a, n: int, tail_prob: float) -> float:
    """E[Xbar | Ybar >= a] (componentwise) with a caller-supplied joint tail
    probability in the denominator."""
    if not 0.0 < tail_prob <= 1.0:
        raise ValueError("tail probability must be in (0, 1]")
    return tail_weighted_mean_2d(model, a, n) / tail_prob
