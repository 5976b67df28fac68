"""Primal policies recovered from the dual solution.

Wealth is ``-V'(z)``, consumption maximizes the pointwise Lagrangian, and the
dollar stock position is ``(theta / sigma) z V''(z)``, which matches the
diffusion of ``-V'(z_t)`` with the diffusion of the wealth process.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import OutOfRegion, WealthOutOfRange
from .model import SolvedModel
from .numerics import Bracket, find_root, log_grid
from .params import ModelParams
from .post_retirement import _out, check_positive

CSV_HEADER = ("z", "wealth", "consumption", "portfolio", "phase", "is_threshold")


class Phase(str, enum.Enum):
    PRE = "PreRetirement"
    POST = "PostRetirement"


@dataclass(frozen=True)
class PolicyPoint:
    z: float
    wealth: float
    consumption: float
    portfolio: float
    phase: Phase
    is_threshold: bool = False


@dataclass(frozen=True)
class GridSpec:
    z_min: float
    z_max: float
    n: int

    def points(self) -> list[float]:
        return log_grid(self.z_min, self.z_max, self.n)


def consumption(phase: Phase, p: ModelParams, z):
    z_arr = check_positive(z)
    c = z_arr ** (-1.0 / p.gamma)
    if phase is Phase.POST:
        c = np.where(z_arr >= p.kink, 0.0, np.maximum(c - p.L, 0.0))
    return _out(c, z)


def _check_region(phase: Phase, m: SolvedModel, z: np.ndarray) -> None:
    if phase is Phase.PRE and m.z_bar is not None and np.any(z <= m.z_bar):
        raise OutOfRegion(f"pre-retirement policy queried at z <= z_bar = {m.z_bar:.6g}")


def _dual_derivative(phase: Phase, m: SolvedModel, z, order: int):
    if phase is Phase.PRE:
        return m.pre_derivative(z, order)
    return m.dual.derivative(z, order)


def wealth_of_dual(phase: Phase, m: SolvedModel, z):
    z_arr = check_positive(z)
    _check_region(phase, m, z_arr)
    return _out(-np.asarray(_dual_derivative(phase, m, z_arr, 1)), z)


def portfolio(phase: Phase, m: SolvedModel, z):
    z_arr = check_positive(z)
    _check_region(phase, m, z_arr)
    p = m.params
    return _out(p.theta / p.sigma * z_arr * np.asarray(_dual_derivative(phase, m, z_arr, 2)), z)


def wealth_floor(phase: Phase, p: ModelParams) -> float:
    """Infimum of attainable wealth: minus the capitalized income of the phase."""
    return -(p.y1 if phase is Phase.PRE else p.y2) / p.r


def dual_of_wealth(phase: Phase, m: SolvedModel, w: float, rtol: float = 1e-14) -> float:
    """Invert the (strictly decreasing) wealth map by bracketed root finding."""
    p = m.params
    floor = wealth_floor(phase, p)
    if not w > floor:
        raise WealthOutOfRange(f"wealth {w:.6g} is not above the borrowing limit {floor:.6g}")
    lo_z = m.z_bar if phase is Phase.PRE and m.z_bar is not None else None
    if lo_z is not None:
        if w > m.w_bar * (1 + 1e-13):
            raise WealthOutOfRange(f"wealth {w:.6g} exceeds the retirement threshold {m.w_bar:.6g}")
        if w >= m.w_bar:
            return lo_z

    def excess(log_z: float) -> float:
        return -float(_dual_derivative(phase, m, math.exp(log_z), 1)) - w

    lo = math.log(lo_z) if lo_z is not None else 0.0
    hi = lo + 1.0
    if lo_z is None:
        for _ in range(400):
            if excess(lo) >= 0:
                break
            lo -= 2.0
        else:
            raise WealthOutOfRange(f"wealth {w:.6g} is above the attainable range")
    for _ in range(400):
        if excess(hi) <= 0:
            break
        hi += 2.0
    else:
        raise WealthOutOfRange(f"wealth {w:.6g} is too close to the borrowing limit to invert")
    return math.exp(find_root(excess, Bracket.around(excess, lo, hi), rtol=rtol))


def default_grid(m: SolvedModel, n: int = 50) -> GridSpec:
    k = m.params.kink
    if m.boundary.j is not None:
        return GridSpec(m.z_bar, 10.0 * max(k, m.boundary.j), n)
    return GridSpec(min(k, 1.0) * 1e-3, 10.0 * max(k, 1.0), n)


def policy_point(phase: Phase, m: SolvedModel, z: float) -> PolicyPoint:
    return PolicyPoint(
        z=z,
        wealth=wealth_of_dual(phase, m, z),
        consumption=consumption(phase, m.params, z),
        portfolio=portfolio(phase, m, z),
        phase=phase,
    )


def threshold_point(m: SolvedModel) -> PolicyPoint:
    """Row at z_bar with the continuation-side (pre-retirement) limits."""
    z = m.z_bar
    p = m.params
    z_in = z * (1.0 + 1e-12)
    return PolicyPoint(
        z=z,
        wealth=m.w_bar,
        consumption=consumption(Phase.PRE, p, z),
        portfolio=p.theta / p.sigma * z * m.pre_derivative(z_in, 2),
        phase=Phase.PRE,
        is_threshold=True,
    )


def policy_table(
    m: SolvedModel, grid: GridSpec | None = None, phases: Iterable[Phase] | None = None
) -> list[PolicyPoint]:
    """Policies on a log grid of dual levels.

    When retirement is feasible the table carries one threshold row,
    pre-retirement rows for grid points above ``z_bar`` and
    post-retirement rows for every grid point. Otherwise only
    pre-retirement rows are produced.
    """
    grid = grid or default_grid(m)
    zs = grid.points()
    if phases is None:
        phases = (Phase.PRE, Phase.POST) if m.z_bar is not None else (Phase.PRE,)
    rows: list[PolicyPoint] = []
    for phase in phases:
        if phase is Phase.PRE and m.z_bar is not None:
            rows.append(threshold_point(m))
            rows.extend(policy_point(phase, m, z) for z in zs if z > m.z_bar)
        else:
            rows.extend(policy_point(phase, m, z) for z in zs)
    return rows


def fmt(x: float | None) -> str:
    """12 significant digits, locale independent; empty for missing values."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return format(float(x), ".12g")


def write_policy_csv(rows: list[PolicyPoint], fh: io.TextIOBase, config_hash: str | None = None) -> None:
    if config_hash:
        fh.write(f"# config_sha256={config_hash}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(
            [
                fmt(row.z),
                fmt(row.wealth),
                fmt(row.consumption),
                fmt(row.portfolio),
                row.phase.value,
                int(row.is_threshold),
            ]
        )
