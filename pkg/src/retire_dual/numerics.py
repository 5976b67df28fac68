"""Root finding, semi-infinite quadrature and finite differences.

The quadrature routines double as independent oracles for the closed-form
integrals in :mod:`retire_dual.free_boundary`, so they never share code with
those closed forms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

from scipy import integrate, optimize

from .errors import MaxIterExceeded, NoSignChange

ROOT_RTOL = 1e-10
QUAD_RTOL = 1e-10

ScalarFn = Callable[[float], float]


class ToleranceNotReached(RuntimeWarning):
    """Quadrature finished with an error estimate above the requested tolerance."""


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float
    f_lo: float
    f_hi: float

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"bracket needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.f_lo * self.f_hi > 0:
            raise NoSignChange(
                f"no sign change on [{self.lo:.6g}, {self.hi:.6g}]: "
                f"f(lo)={self.f_lo:.6g}, f(hi)={self.f_hi:.6g}"
            )

    @classmethod
    def around(cls, f: ScalarFn, lo: float, hi: float) -> "Bracket":
        return cls(lo, hi, f(lo), f(hi))


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int
    converged: bool = True


def find_root(
    f: ScalarFn,
    b: Bracket,
    rtol: float = ROOT_RTOL,
    max_iter: int = 200,
) -> float:
    """Root of ``f`` inside the bracket ``b``.

    Brent's method: inverse quadratic / secant steps guarded by bisection, so
    the bracket shrinks on every iteration and the iterate never leaves it.
    """
    if b.f_lo == 0.0:
        return b.lo
    if b.f_hi == 0.0:
        return b.hi
    # xtol keeps zero roots reachable; rtol must stay above 4 eps for brentq
    rtol = max(rtol, 4.0 * 2.220446049250313e-16)
    try:
        root, info = optimize.brentq(
            f, b.lo, b.hi, xtol=1e-300, rtol=rtol, maxiter=max_iter, full_output=True, disp=False
        )
    except ValueError as exc:
        raise NoSignChange(str(exc)) from exc
    if not info.converged:
        raise MaxIterExceeded(f"root finder stopped after {info.iterations} iterations: {info.flag}")
    return float(min(max(root, b.lo), b.hi))


def _to_unit(y: float, a: float) -> float:
    u = math.log1p(y - a)
    return u / (1.0 + u)


def integrate_semi_infinite(
    f: ScalarFn,
    a: float,
    rtol: float = QUAD_RTOL,
    breakpoints: Sequence[float] = (),
    limit: int = 500,
) -> QuadratureResult:
    """Integral of ``f`` over ``[a, inf)``.

    Substitutes ``y = a + exp(u) - 1`` and then ``u = t / (1 - t)``, so the
    integral runs over ``t in [0, 1)`` and is handed to adaptive
    Gauss-Kronrod subdivision. The exponential stage turns power-law decay
    into exponential decay, which keeps slowly decaying tails (exponents
    close to -1) accurate. Interior ``breakpoints`` (kinks of ``f`` in ``y``)
    are mapped to ``t`` as well.
    """

    def transformed(t: float) -> float:
        if t >= 1.0:
            return 0.0
        s = 1.0 - t
        u = t / s
        if u > 700.0:
            return 0.0
        e = math.exp(u)
        return f(a + (e - 1.0)) * e / (s * s)

    points = sorted(_to_unit(y, a) for y in breakpoints if y > a)
    return _quad(transformed, 0.0, 1.0, rtol, points, limit)


def integrate_interval(
    f: ScalarFn,
    a: float,
    b: float,
    rtol: float = QUAD_RTOL,
    breakpoints: Sequence[float] = (),
    limit: int = 500,
) -> QuadratureResult:
    """Integral of ``f`` over the finite interval ``[a, b]``."""
    points = sorted(y for y in breakpoints if a < y < b)
    return _quad(f, a, b, rtol, points, limit)


def _quad(
    f: ScalarFn, a: float, b: float, rtol: float, points: list[float], limit: int
) -> QuadratureResult:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err, info = integrate.quad(
            f,
            a,
            b,
            epsabs=0.0,
            epsrel=rtol,
            limit=limit,
            points=points or None,
            full_output=True,
        )[:3]
    converged = err <= max(rtol * abs(value), 1e-300)
    if not converged:
        warnings.warn(
            f"quadrature error estimate {err:.3g} exceeds rtol {rtol:.1e} * |{value:.6g}|",
            ToleranceNotReached,
            stacklevel=3,
        )
    return QuadratureResult(float(value), float(err), int(info["neval"]), converged)


def default_step(x: float) -> float:
    return max(1e-5 * abs(x), 1e-8)


def fd_derivative(f: ScalarFn, x: float, order: int = 1, h: float | None = None) -> float:
    """Central finite-difference derivative of order 1, 2 or 3 (error O(h^2))."""
    if h is None:
        h = default_step(x)
    if h <= 0:
        raise ValueError("step h must be > 0")
    if order == 1:
        return (f(x + h) - f(x - h)) / (2.0 * h)
    if order == 2:
        return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
    if order == 3:
        return (f(x + 2 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2 * h)) / (2.0 * h**3)
    raise ValueError(f"order must be 1, 2 or 3, got {order}")


def log_grid(lo: float, hi: float, n: int) -> list[float]:
    if n == 1:
        return [lo]
    step = (math.log(hi) - math.log(lo)) / (n - 1)
    return [math.exp(math.log(lo) + i * step) for i in range(n)]
