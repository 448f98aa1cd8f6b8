"""Richardson-extrapolated central finite differences.

Used as the derivative fallback for models whose higher cumulants are not
available in closed form, and by the test oracles.  All stencils have even
error expansions in the step, so two Richardson levels (ratio 2) upgrade the
O(h^2) base schemes to O(h^6).
"""

from __future__ import annotations

import math
from typing import Callable

# Base step per derivative order, before scaling by max(1, |x|).  First
# derivatives follow the h0 = 1e-4 rule; higher orders need larger steps to
# keep the eps/h^r roundoff amplification below the truncation error.
_BASE_STEP = {1: 1e-4, 2: 1e-3, 3: 5e-3, 4: 8e-3}


def _central(f: Callable[[float], float], x: float, order: int, h: float) -> float:
    if order == 1:
        return (f(x + h) - f(x - h)) / (2.0 * h)
    if order == 2:
        return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
    if order == 3:
        return (f(x + 2 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2 * h)) / (2.0 * h ** 3)
    if order == 4:
        return (f(x + 2 * h) - 4.0 * f(x + h) + 6.0 * f(x) - 4.0 * f(x - h) + f(x - 2 * h)) / h ** 4
    raise ValueError(f"unsupported derivative order {order}")


def default_step(x: float, order: int) -> float:
    return _BASE_STEP[order] * max(1.0, abs(x))


def derivative(
    f: Callable[[float], float],
    x: float,
    order: int = 1,
    h0: float | None = None,
    max_offset: float = math.inf,
) -> float:
    """r-th derivative of ``f`` at ``x`` by Richardson-extrapolated central stencils.

    ``max_offset`` caps how far the stencil may reach from ``x`` (used to stay
    strictly inside an open domain); the step shrinks to fit.
    """
    h = default_step(x, order) if h0 is None else h0
    reach = 2.0 if order >= 3 else 1.0
    if reach * h > max_offset:
        h = 0.45 * max_offset / reach
    if h <= 0.0:
        raise ValueError("finite-difference step collapsed to zero")
    d0 = _central(f, x, order, h)
    d1 = _central(f, x, order, h / 2.0)
    d2 = _central(f, x, order, h / 4.0)
    r1 = (4.0 * d1 - d0) / 3.0
    r2 = (4.0 * d2 - d1) / 3.0
    return (16.0 * r2 - r1) / 15.0
