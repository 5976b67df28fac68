"""Closed-form dual value of the post-retirement problem.

With ``p = (gamma - 1) / gamma`` and kink ``k = L**(-gamma)`` the dual value is

    V_D(z) = (y2/r) z + A z**m+ + C z**p + (L/r) z          for 0 < z < k
    V_D(z) = (y2/r) z + B z**m- + L**(1-gamma) / ((rho+delta)(1-gamma))   for z >= k

with ``C = gamma / (k_dual (1 - gamma))`` and ``k_dual`` the Merton ratio at
the effective discount ``rho + delta``. ``A`` and ``B`` are the coefficients
that make the two branches paste in value and slope at the kink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDenominator, NonPositiveZ
from .params import DualRoots, ModelParams, dual_roots

_KINK_SHIFT = 1e-12


def check_positive(z) -> np.ndarray:
    arr = np.asarray(z, dtype=float)
    if np.any(~(arr > 0)):
        raise NonPositiveZ(f"dual level must be > 0, got {z!r}")
    return arr


def _out(arr: np.ndarray, like):
    return float(arr) if np.ndim(like) == 0 else arr


@dataclass(frozen=True)
class PostRetirementDual:
    params: ModelParams
    roots: DualRoots
    A: float
    B: float
    kink: float
    K: float
    theta: float

    @property
    def power(self) -> float:
        """Exponent (gamma - 1) / gamma of the Merton power term."""
        return (self.params.gamma - 1.0) / self.params.gamma

    @property
    def power_coef(self) -> float:
        g = self.params.gamma
        return g / (self.K * (1.0 - g))

    @property
    def corner_value(self) -> float:
        """Constant value L**(1-gamma) / ((rho+delta)(1-gamma)) of the zero-consumption branch."""
        p = self.params
        return p.L ** (1.0 - p.gamma) / (p.discount * (1.0 - p.gamma))

    def reduced_value(self, z):
        """Dual value without the (y2/r) z benefit term."""
        z_arr = check_positive(z)
        low, high = self._branches(z_arr, 0)
        return _out(np.where(z_arr < self.kink, low, high), z)

    def value(self, z):
        z_arr = check_positive(z)
        p = self.params
        return _out(p.y2 / p.r * z_arr + np.asarray(self.reduced_value(z_arr)), z)

    def _branches(self, z_arr: np.ndarray, order: int):
        """Both branch formulas of the reduced value (order 0) or its derivatives."""
        p = self.params
        mp, mm, q, C = self.roots.m_plus, self.roots.m_minus, self.power, self.power_coef
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            if order == 0:
                low = self.A * z_arr**mp + C * z_arr**q + p.L / p.r * z_arr
                high = self.B * z_arr**mm + self.corner_value
            elif order == 1:
                low = self.A * mp * z_arr ** (mp - 1) + C * q * z_arr ** (q - 1) + p.L / p.r
                high = self.B * mm * z_arr ** (mm - 1)
            elif order == 2:
                low = self.A * mp * (mp - 1) * z_arr ** (mp - 2) + C * q * (q - 1) * z_arr ** (q - 2)
                high = self.B * mm * (mm - 1) * z_arr ** (mm - 2)
            else:
                low = (
                    self.A * mp * (mp - 1) * (mp - 2) * z_arr ** (mp - 3)
                    + C * q * (q - 1) * (q - 2) * z_arr ** (q - 3)
                )
                high = self.B * mm * (mm - 1) * (mm - 2) * z_arr ** (mm - 3)
        return low, high

    def branch_values(self, z: float, order: int = 0) -> tuple[float, float]:
        """(below-kink formula, above-kink formula) of the reduced value or a derivative at ``z``."""
        low, high = self._branches(check_positive(z), order)
        return float(low), float(high)

    def derivative(self, z, order: int = 1):
        """Analytic derivative of the dual value (orders 1 to 3).

        Orders 2 and 3 at the kink itself are taken on the upper branch after
        nudging ``z`` off the kink; the value function is only C^1 there.
        """
        z_arr = check_positive(z)
        if order not in (1, 2, 3):
            raise ValueError(f"order must be 1, 2 or 3, got {order}")
        if order >= 2:
            near = np.abs(z_arr - self.kink) < _KINK_SHIFT * self.kink
            z_arr = np.where(near, self.kink * (1.0 + 2 * _KINK_SHIFT), z_arr)
        low, high = self._branches(z_arr, order)
        shift = self.params.y2 / self.params.r if order == 1 else 0.0
        return _out(shift + np.where(z_arr < self.kink, low, high), z)

    def source(self, z):
        """Inhomogeneous term of the dual ODE on the branch containing ``z``."""
        z_arr = check_positive(z)
        p = self.params
        g = p.gamma
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            low = g / (1.0 - g) * z_arr**self.power + p.L * z_arr
        high = np.full_like(z_arr, p.L ** (1.0 - g) / (1.0 - g))
        return _out(np.where(z_arr < self.kink, low, high), z)

    def ode_terms(self, z: float) -> tuple[float, float, float, float]:
        """The four terms of the dual ODE at ``z`` (diffusion, drift, discount, source)."""
        p = self.params
        v = float(self.reduced_value(z))
        dv = float(self.derivative(z, 1)) - p.y2 / p.r
        d2v = float(self.derivative(z, 2))
        return (
            0.5 * self.theta**2 * z * z * d2v,
            (p.discount - p.r) * z * dv,
            -p.discount * v,
            float(self.source(z)),
        )

    def ode_residual(self, z: float) -> float:
        check_positive(z)
        return math.fsum(self.ode_terms(z))

    def relative_ode_residual(self, z: float) -> float:
        terms = self.ode_terms(z)
        return abs(math.fsum(terms)) / max(abs(t) for t in terms)


def pasting_coefficients(p: ModelParams, roots: DualRoots) -> tuple[float, float]:
    """Coefficients (A, B) from the closed-form expressions in L, m+, m-, theta, gamma."""
    g, L, th2 = p.gamma, p.L, p.theta**2
    spread = roots.spread

    def coef(m: float) -> float:
        factors = (spread, m, m - 1.0, g * (m - 1.0) + 1.0, th2)
        if any(abs(f) < 1e-14 for f in factors):
            raise DegenerateDenominator(f"vanishing denominator factor for exponent {m:.6g}")
        return -2.0 * L ** (1.0 + g * (m - 1.0)) / math.prod(factors)

    return coef(roots.m_plus), coef(roots.m_minus)


def build(p: ModelParams, *, a_scale: float = 1.0) -> PostRetirementDual:
    """Assemble the post-retirement dual value for ``p``.

    ``a_scale`` multiplies A and exists only for fault-injection tests.
    """
    roots = dual_roots(p)
    A, B = pasting_coefficients(p, roots)
    if not (A < 0 and B > 0 and math.isfinite(A) and math.isfinite(B)):
        raise DegenerateDenominator(f"coefficient signs violated: A={A:.6g}, B={B:.6g}")
    return PostRetirementDual(
        params=p,
        roots=roots,
        A=A * a_scale,
        B=B,
        kink=p.kink,
        K=p.k_dual,
        theta=p.theta,
    )
