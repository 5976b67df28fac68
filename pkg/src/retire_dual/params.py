"""Model parameters, their validation, and the scalar constants derived from them.

All rates are annual and all money amounts share one numeraire.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import ParameterError

REQUIRED_FIELDS = ("r", "mu", "sigma", "rho", "gamma", "delta", "y1", "y2", "support")
DEFAULT_REGIME_TOL = 1e-10


class Regime(str, enum.Enum):
    DELAY_FOREVER = "DelayForever"
    KNIFE_EDGE = "KnifeEdge"
    RETIREMENT_FEASIBLE = "RetirementFeasible"

    @property
    def retires(self) -> bool:
        return self is Regime.RETIREMENT_FEASIBLE


@dataclass(frozen=True)
class ModelParams:
    """Validated parameter set.

    ``support_kind`` is ``"L"`` when the living-standard level was given
    directly and ``"I"`` when the subsidy principal was given; the level
    ``L`` is always available through :attr:`L`.
    """

    r: float
    mu: float
    sigma: float
    rho: float
    gamma: float
    delta: float
    y1: float
    y2: float
    support_kind: str
    support_value: float
    regime_tol: float = DEFAULT_REGIME_TOL
    delta_tied_to_k: bool = False
    theta: float = field(init=False)
    K: float = field(init=False)
    L: float = field(init=False)

    def __post_init__(self) -> None:
        theta = (self.mu - self.r) / self.sigma
        K = merton_k(self.r, self.rho, self.gamma, theta)
        if self.support_kind == "L":
            L = self.support_value
        else:
            L = income_support_level(K, self.r, self.delta, self.support_value)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "L", L)

    @property
    def discount(self) -> float:
        """Effective discount rate rho + delta of the reduced problem."""
        return self.rho + self.delta

    @property
    def k_dual(self) -> float:
        """Merton consumption-wealth ratio at the effective discount rho + delta.

        This is the constant that makes the power term of the post-retirement
        dual value solve its ODE; it exceeds ``K`` by ``delta / gamma``.
        """
        return merton_k(self.r, self.discount, self.gamma, self.theta)

    @property
    def income_gap(self) -> float:
        return self.y1 - self.y2

    @property
    def kink(self) -> float:
        """Dual level L^(-gamma) above which post-retirement consumption is zero."""
        return self.L ** (-self.gamma)

    @property
    def subsidy(self) -> float:
        """Subsidy principal I; backed out of L when only L was given."""
        if self.support_kind == "I":
            return self.support_value
        return self.L * self.r / (self.K * (self.r + self.delta))

    @property
    def delta_equals_k(self) -> bool:
        return math.isclose(self.delta, self.K, rel_tol=1e-12, abs_tol=1e-15)

    def with_updates(self, **changes: Any) -> "ModelParams":
        """Return a re-validated copy with some fields replaced.

        ``L`` or ``I`` may be passed to swap the support specification.
        """
        raw = self.to_raw()
        for key, value in changes.items():
            if key in ("L", "I"):
                raw["support"] = {key: value}
            else:
                raw[key] = value
        return validate(raw, tie_delta_to_k=self.delta_tied_to_k, regime_tol=self.regime_tol)

    def to_raw(self) -> dict[str, Any]:
        return {
            "r": self.r,
            "mu": self.mu,
            "sigma": self.sigma,
            "rho": self.rho,
            "gamma": self.gamma,
            "delta": self.delta,
            "y1": self.y1,
            "y2": self.y2,
            "support": {self.support_kind: self.support_value},
        }


@dataclass(frozen=True)
class DualRoots:
    m_plus: float
    m_minus: float

    @property
    def spread(self) -> float:
        return self.m_plus - self.m_minus


def merton_k(r: float, rho: float, gamma: float, theta: float) -> float:
    return r + (rho - r) / gamma + (gamma - 1.0) / (2.0 * gamma**2) * theta**2


def merton_constant(p: ModelParams) -> float:
    """Post-disaster Merton consumption-wealth ratio K (discount rate rho)."""
    return merton_k(p.r, p.rho, p.gamma, p.theta)


def income_support_level(K: float, r: float, delta: float, subsidy: float) -> float:
    """Living-standard level L = K (r + delta) I / r implied by subsidy principal I."""
    return K * (r + delta) / r * subsidy


def support_level(p: ModelParams) -> float:
    return p.L


def characteristic(p: ModelParams, m: float) -> float:
    """Characteristic quadratic of the dual ODE evaluated at exponent ``m``."""
    half_var = 0.5 * p.theta**2
    return half_var * m * m + (p.discount - p.r - half_var) * m - p.discount


def dual_roots(p: ModelParams) -> DualRoots:
    a = 0.5 * p.theta**2
    b = p.discount - p.r - a
    c = -p.discount
    disc = math.sqrt(b * b - 4.0 * a * c)
    # c < 0 so the roots have opposite signs; use the stable pairing
    q = -0.5 * (b + math.copysign(disc, b))
    r1, r2 = q / a, c / q
    return DualRoots(m_plus=max(r1, r2), m_minus=min(r1, r2))


def classify_regime(p: ModelParams) -> Regime:
    return regime_of(p.L, p.y1, p.y2, p.regime_tol)


def regime_of(L: float, y1: float, y2: float, tol: float = DEFAULT_REGIME_TOL) -> Regime:
    gap = y1 - y2
    if L < gap - tol:
        return Regime.DELAY_FOREVER
    if L > gap + tol:
        return Regime.RETIREMENT_FEASIBLE
    return Regime.KNIFE_EDGE


def _number(raw: Mapping[str, Any], name: str) -> float:
    value = raw[name]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParameterError("NotANumber", name, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ParameterError("NotFinite", name, f"{value!r} is not finite")
    return value


def validate(
    raw: Mapping[str, Any],
    *,
    tie_delta_to_k: bool = False,
    regime_tol: float = DEFAULT_REGIME_TOL,
) -> ModelParams:
    """Check a raw parameter record and build :class:`ModelParams`.

    With ``tie_delta_to_k`` the disaster intensity is overwritten by the
    Merton constant K (which does not depend on delta), and ``delta`` may be
    omitted from ``raw``.
    """
    for name in REQUIRED_FIELDS:
        if name == "delta" and tie_delta_to_k:
            continue
        if name not in raw:
            raise ParameterError("MissingField", name, f"required parameter '{name}' is missing")

    r = _number(raw, "r")
    mu = _number(raw, "mu")
    sigma = _number(raw, "sigma")
    rho = _number(raw, "rho")
    gamma = _number(raw, "gamma")
    y1 = _number(raw, "y1")
    y2 = _number(raw, "y2")

    if r <= 0:
        raise ParameterError("NonPositiveRate", "r", "risk-free rate must be > 0")
    if rho <= 0:
        raise ParameterError("NonPositiveRate", "rho", "subjective discount rate must be > 0")
    if sigma <= 0:
        raise ParameterError("NonPositiveVolatility", "sigma", "volatility must be > 0")
    if mu <= r:
        raise ParameterError("MuNotAboveR", "mu", "expected return must exceed the risk-free rate")
    if gamma <= 0:
        raise ParameterError("NonPositiveGamma", "gamma", "risk aversion must be > 0")
    if abs(gamma - 1.0) < 1e-12:
        raise ParameterError("GammaIsOne", "gamma", "gamma = 1 (log utility) is not supported")
    if y1 <= 0:
        raise ParameterError("NonPositiveIncome", "y1", "labor income must be > 0")
    if y2 < 0:
        raise ParameterError("NegativeBenefit", "y2", "retirement benefit must be >= 0")
    if y2 >= y1:
        raise ParameterError("IncomeOrder", "y2", "retirement benefit must be below labor income")

    theta = (mu - r) / sigma
    K = merton_k(r, rho, gamma, theta)
    if K <= 0:
        raise ParameterError("NonPositiveMertonK", "gamma", f"Merton constant K = {K:.6g} must be > 0")

    if tie_delta_to_k:
        delta = K
    else:
        delta = _number(raw, "delta")
        if delta <= 0:
            raise ParameterError("NonPositiveRate", "delta", "disaster intensity must be > 0")

    support = raw["support"]
    if not isinstance(support, Mapping) or len(set(support) & {"L", "I"}) != 1 or len(support) != 1:
        raise ParameterError(
            "BothOrNeitherSupportGiven", "support", 'give exactly one of {"L": x} or {"I": x}'
        )
    kind = next(iter(support))
    value = _number(support, kind)
    if kind == "L" and value <= 0:
        raise ParameterError("NonPositiveSupport", "support", "support level L must be > 0")
    if kind == "I" and not 0 < value < y1:
        raise ParameterError("SupportOutOfRange", "support", "subsidy principal I must lie in (0, y1)")

    return ModelParams(
        r=r,
        mu=mu,
        sigma=sigma,
        rho=rho,
        gamma=gamma,
        delta=delta,
        y1=y1,
        y2=y2,
        support_kind=kind,
        support_value=value,
        regime_tol=regime_tol,
        delta_tied_to_k=tie_delta_to_k,
    )

