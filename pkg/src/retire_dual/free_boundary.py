"""Voluntary-retirement free boundary in the dual variable.

The running reward of continuing to work is

    g(z) = (y1 - y2 - L) z                                       for 0 < z < k
    g(z) = gamma/(1-gamma) z**p - L**(1-gamma)/(1-gamma) + (y1 - y2) z   for z >= k

with ``k = L**(-gamma)`` and ``p = (gamma - 1)/gamma``. The early-retirement
premium psi(z) = V(z) - V_D(z) solves the dual ODE with source ``g`` above
the threshold ``z_bar`` and vanishes below it; ``z_bar`` is the zero of the
tail integral ``G(z) = int_z^inf y**(-1-m+) g(y) dy``.

Every integral of ``g`` against a power of ``y`` is a sum of pure power
integrals, so all of them are evaluated in closed form here. The quadrature
oracle in :mod:`retire_dual.numerics` is used only by the tests and the
``verify`` command to check these closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BracketingFailed, WrongRegime
from .numerics import Bracket, find_root
from .params import DEFAULT_REGIME_TOL, DualRoots, ModelParams, Regime, regime_of
from .post_retirement import PostRetirementDual, _out, check_positive


@dataclass(frozen=True)
class RunningReward:
    gamma: float
    L: float
    y1: float
    y2: float
    regime_tol: float = DEFAULT_REGIME_TOL

    @classmethod
    def from_params(cls, p: ModelParams) -> "RunningReward":
        return cls(p.gamma, p.L, p.y1, p.y2, p.regime_tol)

    @property
    def kink(self) -> float:
        return self.L ** (-self.gamma)

    @property
    def regime(self) -> Regime:
        return regime_of(self.L, self.y1, self.y2, self.regime_tol)

    @property
    def low_slope(self) -> float:
        """Slope y1 - y2 - L of the linear branch below the kink."""
        return self.y1 - self.y2 - self.L

    def high_terms(self) -> tuple[tuple[float, float], ...]:
        """(coefficient, exponent) pairs of the branch above the kink."""
        g = self.gamma
        return (
            (g / (1.0 - g), (g - 1.0) / g),
            (-self.L ** (1.0 - g) / (1.0 - g), 0.0),
            (self.y1 - self.y2, 1.0),
        )

    def __call__(self, z):
        return g(self, z)


def g(rw: RunningReward, z):
    z_arr = check_positive(z)
    low = rw.low_slope * z_arr
    with np.errstate(over="ignore", divide="ignore"):
        high = sum(c * z_arr**q for c, q in rw.high_terms())
    return _out(np.where(z_arr < rw.kink, low, high), z)


def g_prime(rw: RunningReward, z):
    z_arr = check_positive(z)
    low = np.full_like(z_arr, rw.low_slope)
    with np.errstate(over="ignore", divide="ignore"):
        high = sum(c * q * z_arr ** (q - 1.0) for c, q in rw.high_terms() if q != 0.0)
    return _out(np.where(z_arr < rw.kink, low, high), z)


@dataclass(frozen=True)
class FreeBoundarySolution:
    """Outcome of the threshold search.

    ``j``, ``z_bar`` and ``w_bar`` are ``None`` unless retirement is feasible.
    ``residual`` is ``|G(z_bar)|`` and ``scale`` is ``|G(j)|``, the natural
    size of ``G`` on the search interval.
    """

    regime: Regime
    j: float | None = None
    z_bar: float | None = None
    w_bar: float | None = None
    residual: float | None = None
    scale: float | None = None

    @property
    def retires(self) -> bool:
        return self.z_bar is not None


def find_j(rw: RunningReward) -> float:
    """Unique zero of ``g`` above the kink (feasible regime only)."""
    if rw.regime is not Regime.RETIREMENT_FEASIBLE:
        raise WrongRegime(f"g has no crossing above the kink in regime {rw.regime.value}")
    lo = rw.kink
    hi = 2.0 * lo
    for _ in range(200):
        if g(rw, hi) > 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketingFailed("could not bracket the zero of the running reward")
    return find_root(lambda z: g(rw, z), Bracket.around(lambda z: g(rw, z), lo, hi), rtol=1e-15)


def tail_integral_G(rw: RunningReward, roots: DualRoots, z):
    """G(z) = int_z^inf y**(-1-m+) g(y) dy in closed form."""
    z_arr = check_positive(z)
    m = roots.m_plus
    k = rw.kink
    with np.errstate(over="ignore", divide="ignore"):
        upper = sum(c * z_arr ** (q - m) / (m - q) for c, q in rw.high_terms())
        at_kink = sum(c * k ** (q - m) / (m - q) for c, q in rw.high_terms())
        lower = at_kink + rw.low_slope * (z_arr ** (1.0 - m) - k ** (1.0 - m)) / (m - 1.0)
    return _out(np.where(z_arr >= k, upper, lower), z)


def head_integral(rw: RunningReward, roots: DualRoots, z):
    """int_0^z y**(-1-m-) g(y) dy in closed form (convergent at 0 since m- < 0)."""
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0):
        raise ValueError("upper limit must be >= 0")
    n = roots.m_minus
    k = rw.kink
    a_term = rw.low_slope / (1.0 - n)
    with np.errstate(over="ignore", divide="ignore"):
        lower = a_term * z_arr ** (1.0 - n)
        upper = a_term * k ** (1.0 - n) + sum(
            c * (z_arr ** (q - n) - k ** (q - n)) / (q - n) for c, q in rw.high_terms()
        )
    return _out(np.where(z_arr <= k, lower, upper), z)


def _lower_seed(rw: RunningReward, roots: DualRoots, guess: float | None, shrinks: int) -> float:
    eps = min(guess, rw.kink) / 10.0 if guess else rw.kink / 10.0
    for _ in range(shrinks + 1):
        if tail_integral_G(rw, roots, eps) < 0:
            return eps
        eps /= 10.0
    raise BracketingFailed(
        f"G stayed non-negative down to z={eps * 10:.3g}; expected G(0+) < 0 in the feasible regime"
    )


def find_z_bar(
    rw: RunningReward,
    roots: DualRoots,
    *,
    guess: float | None = None,
    max_shrinks: int = 12,
    rtol: float = 1e-14,
) -> FreeBoundarySolution:
    """Locate the dual retirement threshold.

    Outside the feasible regime retirement is never optimal and the
    solution carries no threshold.
    """
    regime = rw.regime
    if regime is not Regime.RETIREMENT_FEASIBLE:
        return FreeBoundarySolution(regime=regime)
    j = find_j(rw)
    lo = _lower_seed(rw, roots, guess, max_shrinks)

    def G(z: float) -> float:
        return tail_integral_G(rw, roots, z)

    z_bar = find_root(G, Bracket.around(G, lo, j), rtol=rtol)
    return FreeBoundarySolution(
        regime=regime,
        j=j,
        z_bar=z_bar,
        residual=abs(G(z_bar)),
        scale=abs(G(j)),
    )


def _premium_parts(rw: RunningReward, roots: DualRoots, z_bar: float | None, z: np.ndarray):
    mp, mn = roots.m_plus, roots.m_minus
    tail = np.asarray(tail_integral_G(rw, roots, z))
    head = np.asarray(head_integral(rw, roots, z))
    if z_bar is not None:
        head = head - head_integral(rw, roots, z_bar)
    return mp, mn, tail, head


def _premium_scale(roots: DualRoots, theta: float) -> float:
    return 2.0 / (theta**2 * roots.spread)


def psi_tilde(rw: RunningReward, roots: DualRoots, z_bar: float | None, z, theta: float):
    """Early-retirement premium psi(z) = V(z) - V_D(z).

    Zero on ``z <= z_bar``. With ``z_bar=None`` (retirement never optimal)
    the lower limit of the head integral is 0 and the formula holds on all
    of ``z > 0``.
    """
    z_arr = check_positive(z)
    mp, mn, tail, head = _premium_parts(rw, roots, z_bar, z_arr)
    with np.errstate(over="ignore", invalid="ignore"):
        val = _premium_scale(roots, theta) * (z_arr**mp * tail + z_arr**mn * head)
    if z_bar is not None:
        val = np.where(z_arr <= z_bar, 0.0, val)
    return _out(val, z)


def psi_tilde_derivative(
    rw: RunningReward, roots: DualRoots, z_bar: float | None, z, theta: float, order: int = 1
):
    """First or second derivative of :func:`psi_tilde` (zero in the stopping region)."""
    z_arr = check_positive(z)
    mp, mn, tail, head = _premium_parts(rw, roots, z_bar, z_arr)
    with np.errstate(over="ignore", invalid="ignore"):
        if order == 1:
            val = mp * z_arr ** (mp - 1) * tail + mn * z_arr ** (mn - 1) * head
        elif order == 2:
            val = (
                mp * (mp - 1) * z_arr ** (mp - 2) * tail
                + mn * (mn - 1) * z_arr ** (mn - 2) * head
                + (mn - mp) * np.asarray(g(rw, z_arr)) / z_arr**2
            )
        else:
            raise ValueError(f"order must be 1 or 2, got {order}")
    val = _premium_scale(roots, theta) * val
    if z_bar is not None:
        val = np.where(z_arr <= z_bar, 0.0, val)
    return _out(val, z)


def v_tilde(
    rw: RunningReward, roots: DualRoots, d: PostRetirementDual, z_bar: float | None, z
):
    """Pre-retirement dual value V(z) = psi(z) + V_D(z)."""
    z_arr = check_positive(z)
    psi = np.asarray(psi_tilde(rw, roots, z_bar, z_arr, d.theta))
    return _out(psi + np.asarray(d.value(z_arr)), z)


def retirement_wealth(
    d: PostRetirementDual, rw: RunningReward, roots: DualRoots, z_bar: float | None
) -> float:
    """Wealth threshold w_bar = -V'(z_bar) = -V_D'(z_bar) (smooth fit)."""
    if z_bar is None or rw.regime is not Regime.RETIREMENT_FEASIBLE:
        raise WrongRegime("retirement wealth is only defined when retirement is feasible")
    return -float(d.derivative(z_bar, 1))


def solve_boundary(d: PostRetirementDual) -> FreeBoundarySolution:
    """Threshold search plus retirement wealth for a built post-retirement dual."""
    rw = RunningReward.from_params(d.params)
    sol = find_z_bar(rw, d.roots)
    if sol.z_bar is None:
        return sol
    return replace(sol, w_bar=retirement_wealth(d, rw, d.roots, sol.z_bar))


def sign_changes(values) -> int:
    signs = np.sign(np.asarray(values, dtype=float))
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def premium_scale_at(rw: RunningReward, roots: DualRoots, z: float, theta: float) -> float:
    """Magnitude of the two terms whose sum is psi(z); used to scale tolerances."""
    _, _, tail, head = _premium_parts(rw, roots, None, np.asarray(z))
    c = _premium_scale(roots, theta)
    return c * max(abs(z ** roots.m_plus * float(tail)), abs(z ** roots.m_minus * float(head)), math.ulp(1.0))
