"""Classical saddlepoint expansions the new conditional-expectation formulas
compose with: the density expansion, the Lugannani-Rice tail, two tail-weighted
mean variants, the 2-d density expansion, and an upper-orthant bivariate
normal CDF.

All formulas are assembled from a solved :class:`~saddlerisk.saddle.Saddlepoint1`
(or 2-d equivalent); the exponential factor ``exp(n(K - eta*a))`` is always
evaluated through ``omega_hat`` as a normal density to avoid overflow at
large n.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .cgf import VectorCgfModel2
from .errors import BranchError, NumericalError
from .saddle import Saddlepoint1, Saddlepoint2

logger = logging.getLogger(__name__)

_SQRT_TWO_PI = math.sqrt(2.0 * math.pi)


def norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / _SQRT_TWO_PI


def norm_cdf(x: float) -> float:
    return float(ndtr(x))


def norm_sf(x: float) -> float:
    return float(ndtr(-x))


def _require_regular(sp: Saddlepoint1) -> None:
    if sp.is_near_zero():
        raise BranchError(
            "saddlepoint too close to zero for the regular tail expansion; "
            "use the zero-saddlepoint branch"
        )


def _clamp_prob(p: float, what: str) -> float:
    if p < 0.0 or p > 1.0:
        logger.debug("%s value %.3e clamped to [0, 1]", what, p)
        return min(1.0, max(0.0, p))
    return p


# ---------------------------------------------------------------------------
# Density and tail expansions, d = 1
# ---------------------------------------------------------------------------


def daniels_pdf(sp: Saddlepoint1, a: float, n: int, order: int = 1) -> float:
    """Density expansion for the mean of n i.i.d. copies of Y at a.

    ``sqrt(n/(2 pi K'')) exp(n(K - eta*a)) [1 + (rho4/8 - 5 rho3^2/24)/n]``
    truncated at ``order`` (0 drops the 1/n bracket).
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    value = math.sqrt(n / sp.ky_pp) * norm_pdf(math.sqrt(n) * sp.omega_hat)
    if order >= 1:
        value *= 1.0 + (sp.rho4 / 8.0 - 5.0 * sp.rho3**2 / 24.0) / n
    return value


def lugannani_rice(sp: Saddlepoint1, a: float, n: int, order: int = 1) -> float:
    """Upper-tail probability P[mean of n copies of Y >= a].

    Requires the saddlepoint to be away from zero; raises
    :class:`BranchError` otherwise.  The result is clamped to [0, 1] after
    assembly (the 1/n bracket can push far-tail values slightly outside).
    """
    _require_regular(sp)
    w, z = sp.omega_hat, sp.z_hat
    rw = math.sqrt(n) * w
    bracket = 1.0 / z - 1.0 / w
    if order >= 1:
        bracket += (
            1.0 / w**3
            - 1.0 / z**3
            - sp.rho3 / (2.0 * z * z)
            + (sp.rho4 / 8.0 - 5.0 * sp.rho3**2 / 24.0) / z
        ) / n
    p = norm_sf(rw) + norm_pdf(rw) / math.sqrt(n) * bracket
    return _clamp_prob(p, "lugannani_rice")


def tail_mean_temme(sp: Saddlepoint1, a: float, n: int, mu: float) -> float:
    """E[Ybar 1{Ybar >= a}] via the Temme-style expansion.

    ``mu`` is E[Y].  Exact for Gaussian Y.
    """
    _require_regular(sp)
    w, z = sp.omega_hat, sp.z_hat
    rw = math.sqrt(n) * w
    bracket = a / z - mu / w
    bracket += (
        mu / w**3
        - a / z**3
        - a * sp.rho3 / (2.0 * z * z)
        + (a / z) * (sp.rho4 / 8.0 - 5.0 * sp.rho3**2 / 24.0)
        + 1.0 / (sp.eta_hat * z)
    ) / n
    return mu * norm_sf(rw) + norm_pdf(rw) / math.sqrt(n) * bracket


def tail_mean_butler(sp: Saddlepoint1, a: float, n: int, mu: float) -> float:
    """E[Ybar 1{Ybar >= a}] via the truncated-MGF expansion (alternative 1/n bracket)."""
    _require_regular(sp)
    w, z = sp.omega_hat, sp.z_hat
    rw = math.sqrt(n) * w
    bracket = a / z - mu / w + ((mu - a) / w**3 + 1.0 / (sp.eta_hat * z)) / n
    return mu * norm_sf(rw) + norm_pdf(rw) / math.sqrt(n) * bracket


# ---------------------------------------------------------------------------
# 2-d density expansion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CumulantTensors2:
    """Order 2..4 derivative tensors of K_Y at a 2-d saddlepoint, plus the
    invariant skewness/kurtosis scalars of the tilted distribution."""

    k2: np.ndarray
    k3: np.ndarray
    k4: np.ndarray
    k2_inv: np.ndarray
    varrho4: float
    varrho13: float
    varrho23: float


def cumulant_tensors_2d(model: VectorCgfModel2, eta1: float, eta2: float) -> CumulantTensors2:
    k2 = model.ky_hessian(eta1, eta2)
    k3 = np.empty((2, 2, 2))
    k4 = np.empty((2, 2, 2, 2))
    for idx in np.ndindex(2, 2, 2):
        r1 = idx.count(0)
        k3[idx] = model.ky_partial(eta1, eta2, (r1, 3 - r1))
    for idx in np.ndindex(2, 2, 2, 2):
        r1 = idx.count(0)
        k4[idx] = model.ky_partial(eta1, eta2, (r1, 4 - r1))
    k2_inv = np.linalg.inv(k2)
    varrho4 = float(np.einsum("ijpl,ij,pl", k4, k2_inv, k2_inv))
    varrho13 = float(np.einsum("ijp,lmo,ij,pl,mo", k3, k3, k2_inv, k2_inv, k2_inv))
    varrho23 = float(np.einsum("ijp,lmo,il,jm,po", k3, k3, k2_inv, k2_inv, k2_inv))
    return CumulantTensors2(k2, k3, k4, k2_inv, varrho4, varrho13, varrho23)


def mv_pdf_spa_2d(
    model: VectorCgfModel2, sp: Saddlepoint2, a, n: int, order: int = 1
) -> float:
    """Density expansion for the mean of n i.i.d. copies of a 2-vector Y at a.

    ``(n/(2 pi)) det(K'')^{-1/2} exp(n(K - eta.a)) [1 + corr/n]`` with
    ``corr = (varrho4 - varrho13)/8 - varrho23/12``.
    """
    a = np.asarray(a, dtype=float)
    e1, e2 = float(sp.eta_hat[0]), float(sp.eta_hat[1])
    tens = cumulant_tensors_2d(model, e1, e2)
    det = float(np.linalg.det(tens.k2))
    if det <= 0.0:
        raise NumericalError("singular Hessian in the 2-d density expansion")
    expo = n * (sp.ky_val - float(sp.eta_hat @ a))
    value = (n / (2.0 * math.pi)) * math.exp(expo) / math.sqrt(det)
    if order >= 1:
        value *= 1.0 + ((tens.varrho4 - tens.varrho13) / 8.0 - tens.varrho23 / 12.0) / n
    return value


# ---------------------------------------------------------------------------
# Bivariate normal upper orthant
# ---------------------------------------------------------------------------

_GL_6 = (
    np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904]),
    np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970]),
)
_GL_12 = (
    np.array([
        0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
        0.2031674267230659, 0.2334925365383547, 0.2491470458134029,
    ]),
    np.array([
        0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
        0.5873179542866171, 0.3678314989981802, 0.1252334085114692,
    ]),
)
_GL_20 = (
    np.array([
        0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
        0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
        0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
        0.1527533871307259,
    ]),
    np.array([
        0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
        0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
        0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
        0.07652652113349733,
    ]),
)


def binorm_cdf_bar(x: float, y: float, rho: float) -> float:
    """Upper-orthant probability P[Z1 > x, Z2 > y] of a standard bivariate
    normal pair with correlation rho.

    Drezner-Wesolowsky single-integral reduction with fixed Gauss-Legendre
    rules whose order grows with |rho| (Genz's double-precision scheme);
    absolute accuracy is well below 1e-10.  ``rho`` is clamped to
    ``|rho| <= 1 - 1e-12``.
    """
    rho = max(-1.0 + 1e-12, min(1.0 - 1e-12, rho))
    if math.isinf(x) or math.isinf(y):
        if x == math.inf or y == math.inf:
            return 0.0
        if x == -math.inf:
            return 1.0 if y == -math.inf else norm_sf(y)
        return norm_sf(x)
    if rho == 0.0:
        return norm_sf(x) * norm_sf(y)

    if abs(rho) < 0.3:
        w_half, x_half = _GL_6
    elif abs(rho) < 0.75:
        w_half, x_half = _GL_12
    else:
        w_half, x_half = _GL_20
    w = np.concatenate([w_half, w_half])
    xg = np.concatenate([1.0 - x_half, 1.0 + x_half])

    tp = 2.0 * math.pi
    h, k = x, y
    hk = h * k
    if abs(rho) < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(rho) / 2.0
        sn = np.sin(asr * xg)
        bvn = float(np.exp((sn * hk - hs) / (1.0 - sn * sn)) @ w)
        bvn = bvn * asr / tp + norm_sf(h) * norm_sf(k)
        return _clamp_prob(bvn, "binorm_cdf_bar")

    # |rho| >= 0.925: asymptotic expansion plus quadrature correction
    if rho < 0.0:
        k = -k
        hk = -hk
    bvn = 0.0
    a_s = (1.0 - rho) * (1.0 + rho)
    a = math.sqrt(a_s)
    bs = (h - k) ** 2
    asr = -(bs / a_s + hk) / 2.0
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 80.0
    if asr > -100.0:
        bvn = a * math.exp(asr) * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s)
    if hk > -100.0:
        b = math.sqrt(bs)
        sp = _SQRT_TWO_PI * norm_cdf(-b / a)
        bvn -= math.exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
    a = a / 2.0
    xs = (a * xg) ** 2
    asr_v = -(bs / xs + hk) / 2.0
    keep = asr_v > -100.0
    xs = xs[keep]
    sp_v = 1.0 + c * xs * (1.0 + 5.0 * d * xs)
    rs = np.sqrt(1.0 - xs)
    ep = np.exp(-(hk / 2.0) * xs / (1.0 + rs) ** 2) / rs
    bvn = float(a * ((np.exp(asr_v[keep]) * (sp_v - ep)) @ w[keep]) - bvn) / tp
    if rho > 0.0:
        bvn += norm_sf(max(h, k))
    elif h >= k:
        bvn = -bvn
    else:
        if h < 0.0:
            l = norm_cdf(k) - norm_cdf(h)
        else:
            l = norm_sf(h) - norm_sf(k)
        bvn = l - bvn
    return _clamp_prob(bvn, "binorm_cdf_bar")
