"""Solved-model bundle tying parameters, dual values and the free boundary together."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import free_boundary as fb
from .params import ModelParams, Regime, classify_regime
from .post_retirement import PostRetirementDual, build


@dataclass(frozen=True)
class SolvedModel:
    params: ModelParams
    dual: PostRetirementDual
    reward: fb.RunningReward
    boundary: fb.FreeBoundarySolution

    @property
    def regime(self) -> Regime:
        return self.boundary.regime

    @property
    def roots(self):
        return self.dual.roots

    @property
    def z_bar(self) -> float | None:
        return self.boundary.z_bar

    @property
    def w_bar(self) -> float | None:
        return self.boundary.w_bar

    def psi(self, z):
        return fb.psi_tilde(self.reward, self.roots, self.z_bar, z, self.params.theta)

    def psi_derivative(self, z, order: int = 1):
        return fb.psi_tilde_derivative(self.reward, self.roots, self.z_bar, z, self.params.theta, order)

    def pre_value(self, z):
        """Pre-retirement dual value V(z); equals V_D(z) in the stopping region."""
        return fb.v_tilde(self.reward, self.roots, self.dual, self.z_bar, z)

    def pre_derivative(self, z, order: int = 1):
        """Analytic derivative of V; one-sided (continuation) above z_bar."""
        out = np.asarray(self.dual.derivative(z, order)) + np.asarray(self.psi_derivative(z, order))
        return float(out) if np.ndim(z) == 0 else out


def solve(p: ModelParams, *, a_scale: float = 1.0) -> SolvedModel:
    """Build the post-retirement dual and locate the retirement threshold."""
    dual = build(p, a_scale=a_scale)
    boundary = fb.solve_boundary(dual)
    assert boundary.regime is classify_regime(p)
    return SolvedModel(p, dual, fb.RunningReward.from_params(p), boundary)
