"""Saddlepoint solvers for the 1-d equation K_Y'(eta) = a, the 2-d system,
and the partially-minimized inner root.

The 1-d solver is a safeguarded Newton iteration: a sign-changing bracket is
grown from the origin toward the domain boundaries, Newton steps are accepted
only while they stay inside the bracket, and bisection takes over otherwise.
Strict convexity of K_Y makes the root unique whenever it exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, TYPE_CHECKING

import numpy as np

from .cgf import ScalarCgfModel, VectorCgfModel2
from .errors import NoSaddlepointError, NumericalError

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .condexp import Thm42Aux

_MAX_ITER = 200


@dataclass
class Saddlepoint1:
    """Solved 1-d saddlepoint with the quantities every expansion needs.

    ``omega_hat = sign(eta_hat) sqrt(2(eta_hat*a - K_Y(eta_hat)))``,
    ``z_hat = eta_hat sqrt(K_Y''(eta_hat))`` and ``rho_r`` are the
    standardized cumulants ``K_Y^(r)/K_Y''^(r/2)`` at the saddlepoint.
    """

    eta_hat: float
    a: float
    omega_hat: float
    z_hat: float
    rho3: float
    rho4: float
    ky_pp: float
    iterations: int = 0

    def is_near_zero(self) -> bool:
        """Whether the zero-saddlepoint branch must be used.

        Below this threshold the cancellation in omega_hat and z_hat destroys
        the relative accuracy of the regular tail formulas.
        """
        return abs(self.eta_hat) <= 1e-8 * max(1.0, abs(self.a) / math.sqrt(self.ky_pp))


@dataclass
class Saddlepoint2:
    """Solved 2-d saddlepoint with the tail-expansion change-of-variable data.

    ``omega_hat`` follows the sequential construction: the second component is
    the marginal saddlepoint variable of Y2 at a2, the first measures the
    remaining exponent drop along the partially-minimized profile.  ``aux`` is
    filled lazily by the 2-d tail expansion (it only exists for eta_hat > 0).
    """

    eta_hat: np.ndarray
    a: np.ndarray
    omega_hat: np.ndarray
    tilde_eta2_of_0: float
    ky_val: float
    aux: Optional["Thm42Aux"] = field(default=None, repr=False)
    iterations: int = 0


def _grow_bracket(g, domain, start=0.0):
    """Expand from ``start`` until the increasing function g changes sign.

    Steps double while unbounded and halve the remaining gap once a finite
    domain boundary is in the way; failure to find a sign change before the
    boundary means the target is unattainable.
    """
    g0 = g(start)
    if g0 == 0.0:
        return start, start
    direction = 1.0 if g0 < 0.0 else -1.0
    bound = domain.hi if direction > 0 else domain.lo
    inner, cur = start, start
    step = 0.5 * max(1.0, abs(start))
    for _ in range(_MAX_ITER):
        if math.isfinite(bound):
            gap = bound - cur
            cur = cur + direction * min(step, 0.5 * abs(gap))
            if abs(bound - cur) < 1e-11 * max(1.0, abs(bound)):
                break
        else:
            cur = cur + direction * step
        gc = g(cur)
        if gc == 0.0:
            return cur, cur
        if (gc > 0.0) != (g0 > 0.0):
            return (inner, cur) if direction > 0 else (cur, inner)
        inner = cur
        step *= 2.0
    side = "above" if direction > 0 else "below"
    raise NoSaddlepointError(f"target lies {side} the attainable range of K_Y'")


def _newton_bracketed(g, gprime, lo, hi, x0, tol):
    """Safeguarded Newton on increasing g with bracket [lo, hi]."""
    x = x0
    gx = g(x)
    for it in range(1, _MAX_ITER + 1):
        if abs(gx) <= tol:
            return x, it
        if gx > 0.0:
            hi = x
        else:
            lo = x
        gp = gprime(x)
        step_ok = gp > 0.0 and math.isfinite(gp)
        if step_ok:
            x_new = x - gx / gp
            step_ok = lo < x_new < hi
        if not step_ok:
            x_new = 0.5 * (lo + hi)
        x = x_new
        gx = g(x)
    if abs(gx) <= tol:
        return x, _MAX_ITER
    raise NumericalError(f"saddlepoint iteration did not converge (residual {gx:.3e})")


def _finish_1d(model: ScalarCgfModel, eta: float, a: float, iterations: int) -> Saddlepoint1:
    kpp = model.ky_deriv(eta, 2)
    k3 = model.ky_deriv(eta, 3)
    k4 = model.ky_deriv(eta, 4)
    if kpp <= 0.0:
        raise NumericalError("K_Y'' is not positive at the saddlepoint")
    if abs(eta) < 1e-4:
        # eta*a - K(eta) suffers catastrophic cancellation near zero; use the
        # Taylor remainder of K(0) = 0 expanded about eta instead.
        rem = 0.5 * eta * eta * (kpp - k3 * eta / 3.0 + k4 * eta * eta / 12.0)
    else:
        rem = eta * a - model.ky(eta)
    omega = math.copysign(math.sqrt(max(2.0 * rem, 0.0)), eta)
    z = eta * math.sqrt(kpp)
    return Saddlepoint1(
        eta_hat=eta, a=a, omega_hat=omega, z_hat=z,
        rho3=k3 / kpp**1.5, rho4=k4 / (kpp * kpp), ky_pp=kpp,
        iterations=iterations,
    )


def solve_saddle_1d(model: ScalarCgfModel, a: float, x0: float | None = None) -> Saddlepoint1:
    """Solve K_Y'(eta) = a for the unique root inside the CGF domain.

    ``x0`` seeds the iteration (re-solving from a previous solution converges
    immediately).  Raises :class:`NoSaddlepointError` when ``a`` is outside
    the attainable range of K_Y' and :class:`NumericalError` on
    non-convergence.
    """
    tol = 1e-12 * max(1.0, abs(a))

    def g(eta):
        return model.ky_deriv(eta, 1) - a

    def gp(eta):
        return model.ky_deriv(eta, 2)

    if x0 is not None and model.domain.contains(x0) and abs(g(x0)) <= tol:
        return _finish_1d(model, x0, a, 1)
    lo, hi = _grow_bracket(g, model.domain)
    if lo == hi:
        return _finish_1d(model, lo, a, 1)
    start = x0 if x0 is not None and lo < x0 < hi else 0.5 * (lo + hi)
    eta, iters = _newton_bracketed(g, gp, lo, hi, start, tol)
    return _finish_1d(model, eta, a, iters)


def inner_min_eta2(model: VectorCgfModel2, eta1: float, a2: float) -> float:
    """Minimizer over eta2 of K_Y(eta1, .) - eta2*a2, i.e. the root of
    dK_Y/deta2(eta1, eta2) = a2 on the domain slice at eta1."""
    from .cgf import Interval  # local import to keep module deps one-way

    box2 = model.domain.box2

    def g(eta2):
        return model.ky_partial(eta1, eta2, (0, 1)) - a2

    def gp(eta2):
        return model.ky_partial(eta1, eta2, (0, 2))

    slice_domain = Interval(box2.lo, box2.hi)
    if not model.domain.contains(eta1, 0.0):
        raise NoSaddlepointError(f"eta1={eta1!r} leaves an empty domain slice")
    lo, hi = _grow_bracket(g, slice_domain)
    if lo == hi:
        return lo
    tol = 1e-12 * max(1.0, abs(a2))
    eta2, _ = _newton_bracketed(g, gp, lo, hi, 0.5 * (lo + hi), tol)
    return eta2


def _omega_pair(model: VectorCgfModel2, eta_hat: np.ndarray, a: np.ndarray) -> tuple[float, float, float]:
    """(omega1_hat, omega2_hat, tilde_eta2(0)) from the sequential displays."""
    e1, e2 = float(eta_hat[0]), float(eta_hat[1])
    a1, a2 = float(a[0]), float(a[1])
    t20 = inner_min_eta2(model, 0.0, a2)
    # marginal exponent drop of Y2 at a2
    ell0 = model.ky(0.0, t20) - t20 * a2
    ell_hat = model.ky(e1, e2) - e1 * a1 - e2 * a2
    w2 = math.copysign(math.sqrt(max(-2.0 * ell0, 0.0)), t20)
    w1 = math.copysign(math.sqrt(max(2.0 * (ell0 - ell_hat), 0.0)), e1)
    return w1, w2, t20


def solve_saddle_2d(model: VectorCgfModel2, a) -> Saddlepoint2:
    """Solve the 2-d system grad K_Y(eta) = a by damped Newton steps.

    Steps are halved until they stay inside the domain (and do not increase
    the residual); if Newton stalls, one coordinate-alternation sweep with
    :func:`inner_min_eta2` restarts it.
    """
    a = np.asarray(a, dtype=float)
    eta = np.zeros(2)
    tol = 1e-12 * np.maximum(1.0, np.abs(a))

    def residual(e):
        return model.ky_gradient(e[0], e[1]) - a

    res = residual(eta)
    iters = 0
    stalls = 0
    while iters < _MAX_ITER:
        if np.all(np.abs(res) <= tol):
            break
        iters += 1
        hess = model.ky_hessian(eta[0], eta[1])
        try:
            step = np.linalg.solve(hess, -res)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular Hessian in the 2-d saddle solve") from exc
        scale = 1.0
        accepted = False
        for _ in range(60):
            cand = eta + scale * step
            if model.domain.contains(cand[0], cand[1]):
                cand_res = residual(cand)
                if np.linalg.norm(cand_res) < np.linalg.norm(res) or scale < 1e-8:
                    eta, res = cand, cand_res
                    accepted = True
                    break
            scale *= 0.5
        if not accepted:
            # coordinate-wise fallback: exact inner minimization in eta2
            stalls += 1
            if stalls > 5:
                raise NumericalError("2-d saddle solve stalled")
            eta = np.array([eta[0], inner_min_eta2(model, eta[0], a[1])])
            res = residual(eta)
    else:
        raise NumericalError("2-d saddle solve did not converge")

    w1, w2, t20 = _omega_pair(model, eta, a)
    return Saddlepoint2(
        eta_hat=eta, a=a, omega_hat=np.array([w1, w2]), tilde_eta2_of_0=t20,
        ky_val=model.ky(eta[0], eta[1]), iterations=max(iters, 1),
    )


def delta_gamma_saddle(dg, i: int, v: float) -> Saddlepoint1:
    """Unique root of K_Y'(eta) = v for a delta-gamma portfolio loss.

    Existence is guaranteed: K_Y' sweeps the whole line over the open
    interval on which every 1 - 2*lambda_k*eta stays positive.
    """
    from .cgf import make_delta_gamma_cgf

    return solve_saddle_1d(make_delta_gamma_cgf(dg, i), v)
