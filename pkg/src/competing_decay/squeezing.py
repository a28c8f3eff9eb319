"""Linearized (Holstein-Primakoff) spin squeezing around the lower mean-field branch.

The mean spin is rotated onto the pole; transverse fluctuations become a
bosonic mode ``a`` with ``<a> = 0`` (noise-driven, zero mean), so

    xi^2 = 1 + 2 (<a^+ a> - |<a a>|).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FluctuationInstabilityError
from .meanfield import MeanFieldState, dicke_steady, mf_perturbative, mf_steady_states
from .params import MeanFieldParams

SMALL_J = 5.0


@dataclass(frozen=True)
class HpFrame:
    """Rotation of the mean spin: ``theta = arccos(s_z / |s|)``, ``j_mf = N |s| / 2``."""

    theta: float
    s_abs: float
    j_mf: float | None = None
    branch: str = "lower"

    @classmethod
    def from_state(cls, state: MeanFieldState, n_atoms: int | None = None, branch: str = "lower"):
        s_abs = float(np.hypot(state.s_z, state.s_y))
        if s_abs == 0:
            raise DomainError("mean spin vanishes; no rotation frame")
        theta = float(np.arccos(np.clip(state.s_z / s_abs, -1.0, 1.0)))
        j_mf = None if n_atoms is None else n_atoms * s_abs / 2
        return cls(theta, s_abs, j_mf, branch)

    @property
    def small_j(self) -> bool:
        return self.j_mf is not None and self.j_mf < SMALL_J


@dataclass
class SqueezingResult:
    xi2: float
    n_a: float
    sq_a: float
    frame: HpFrame
    min_margin: float
    linearization_suspect: bool


def _denominators(params, frame: HpFrame) -> np.ndarray:
    g, G = params.gamma, params.Gamma
    c, s2 = np.cos(frame.theta), np.sin(frame.theta) ** 2
    base = -G * frame.s_abs * c
    return np.array([base + g * (1 + s2), base + g * (1 + s2 / 2), base + g])


def hp_correlators(params, state: MeanFieldState, n_atoms: int | None = None):
    """``(<a^+ a>, <a a>, frame, margin)`` for fluctuations around ``state``.

    ``margin`` is the smallest denominator relative to ``gamma + Gamma``;
    a non-positive one means the fluctuations are not damped.
    """
    frame = HpFrame.from_state(state, n_atoms)
    d1, d2, d3 = _denominators(params, frame)
    scale = params.gamma + params.Gamma
    margin = min(d1, d2, d3) / scale
    if margin <= 0:
        raise FluctuationInstabilityError(
            f"undamped fluctuation mode (relative margin {margin:.3g}) at theta = {frame.theta:.6g}")
    c = np.cos(frame.theta)
    pref = scale * frame.s_abs / 4
    n_a = pref * (1 / d1 + 2 * c / d2 + c**2 / d3)
    sq_a = pref * (c**2 / d3 - 1 / d1)
    return float(n_a), float(sq_a), frame, float(margin)


def mean_field_constants(params) -> MeanFieldParams:
    """Mean-field ``(gamma, Gamma, Omega)`` for a model or mean-field parameter set.

    Without individual decay the collective factorization applies: ``gamma``
    drops out and ``|s|`` is conserved, while ``Gamma`` (hence ``Omega_c``) is kept.
    """
    if isinstance(params, MeanFieldParams):
        return params
    gamma = 0.0 if params.gamma_s == 0 else params.gamma
    return MeanFieldParams(gamma, params.Gamma, params.omega)


def lower_branch_state(params, branch_order: int | None = None) -> MeanFieldState:
    """Lower (most negative ``s_z``) fixed point; the conserving-limit state when ``gamma = 0``.

    ``branch_order`` in ``{0, 1, 2}`` replaces the exact root by its expansion
    in ``gamma / Gamma``; ``s_y`` then follows from the fixed-point relation.
    """
    params = mean_field_constants(params)
    if branch_order is not None and params.gamma > 0:
        s_z = mf_perturbative(params, branch_order)["a"]
        if np.iscomplexobj(s_z) and abs(np.imag(s_z)) > 0:
            raise DomainError("expanded lower branch is complex beyond Omega_c / sqrt(2)")
        s_z = float(np.real(s_z))
        if not -1.0 <= s_z <= 0.0:
            raise DomainError(f"order-{branch_order} expansion leaves [-1, 0] (s_z = {s_z:.4g}); "
                              "it diverges at the fold")
        s_y = 4 * params.omega * s_z / (s_z * params.Gamma - params.gamma)
        return MeanFieldState(0.0, s_y, s_z)
    if params.gamma == 0:
        return dicke_steady(params.omega / params.omega_c)
    sols = mf_steady_states(params)
    if not sols:
        raise DomainError("no physical mean-field fixed point")
    low = sols[0]
    return MeanFieldState(0.0, low.s_y, low.s_z)


def xi2_analytic(params, n_atoms: int | None = None, state: MeanFieldState | None = None,
                 suspect_margin: float = 0.05, branch_order: int | None = None) -> SqueezingResult:
    """Linearized squeezing on the lower branch.

    ``n_atoms`` defaults to ``params.n_atoms`` when present and only feeds the
    ``j_mf`` bookkeeping.  ``linearization_suspect`` is raised when the
    effective spin is small or the damping margin is thin (near the fold).
    Near the fold the exact root sits ``O(sqrt(gamma / Gamma))`` away from
    its zeroth-order value; ``branch_order`` selects the expanded branch.
    """
    if n_atoms is None:
        n_atoms = getattr(params, "n_atoms", None)
    params = mean_field_constants(params)
    state = state or lower_branch_state(params, branch_order)
    if params.omega == 0:
        frame = HpFrame.from_state(state, n_atoms)
        return SqueezingResult(1.0, 0.0, 0.0, frame, 1.0, frame.small_j)
    n_a, sq_a, frame, margin = hp_correlators(params, state, n_atoms)
    xi2 = 1 + 2 * (n_a - abs(sq_a))
    suspect = frame.small_j or margin < suspect_margin
    if frame.small_j:
        warnings.warn(f"effective spin j_mf = {frame.j_mf:.3g} is small; linearization is rough",
                      RuntimeWarning, stacklevel=2)
    return SqueezingResult(float(xi2), n_a, sq_a, frame, margin, suspect)


def xi2_large_gamma_limit(omega_ratio: float) -> float:
    """Squeezing for ``Gamma >> gamma``, valid for ``0 <= Omega/Omega_c <= 1/sqrt(2)``."""
    r2 = float(omega_ratio) ** 2
    if omega_ratio < 0 or r2 > 0.5 + 1e-15:
        raise DomainError("closed form holds only for 0 <= Omega/Omega_c <= 1/sqrt(2)")
    disc = 1 - 2 * r2
    x = np.sqrt(disc) if disc > 1e-12 else 0.0
    return float((1 + x) / (np.sqrt(2) * np.sqrt(1 + r2 + x)))
