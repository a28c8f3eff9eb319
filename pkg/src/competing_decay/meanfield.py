"""Mean-field Bloch equations with competing collective and individual decay.

Per-atom Bloch vector ``s = 2<sigma>``; with ``gamma = gamma_s + gamma_c`` and
``Gamma = (N - 1) gamma_c`` the equations read::

    ds_x/dt = -gamma s_x / 2 + Gamma s_z s_x / 2
    ds_y/dt = -gamma s_y / 2 - 2 Omega s_z + Gamma s_z s_y / 2
    ds_z/dt = -gamma (s_z + 1) + 2 Omega s_y - Gamma (s_x^2 + s_y^2) / 2

Fixed points satisfy ``(1 + s_z)(gamma - s_z Gamma)^2 + 8 s_z Omega^2 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import curve_fit

from .errors import DomainError, EstimationError
from .params import MeanFieldParams, ModelParams

BRANCH_LABELS = ("lower", "middle", "upper")
MARGINAL_TOL = 1e-10


def _rates(params) -> tuple[float, float, float]:
    return float(params.gamma), float(params.Gamma), float(params.omega)


@dataclass(frozen=True)
class MeanFieldState:
    s_x: float
    s_y: float
    s_z: float

    def __post_init__(self):
        if self.norm2 > 1 + 1e-9:
            raise DomainError(f"Bloch vector longer than one: |s|^2 = {self.norm2:.12g}")

    @property
    def norm2(self) -> float:
        return self.s_x**2 + self.s_y**2 + self.s_z**2

    def as_array(self) -> np.ndarray:
        return np.array([self.s_x, self.s_y, self.s_z])

    @classmethod
    def from_array(cls, v) -> "MeanFieldState":
        return cls(float(v[0]), float(v[1]), float(v[2]))


@dataclass
class BranchSolution:
    label: str
    s_z: float
    s_y: float
    s_x: float = 0.0
    stability: str = "unknown"
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(3, complex))

    @property
    def state(self) -> MeanFieldState:
        return MeanFieldState(self.s_x, self.s_y, self.s_z)

    @property
    def stable(self) -> bool:
        return self.stability == "stable"


def mf_rhs(state, params) -> np.ndarray:
    """Time derivative of the Bloch vector (accepts a state or a length-3 array)."""
    sx, sy, sz = state.as_array() if isinstance(state, MeanFieldState) else np.asarray(state, float)
    g, G, w = _rates(params)
    return np.array([
        -g * sx / 2 + G * sz * sx / 2,
        -g * sy / 2 - 2 * w * sz + G * sz * sy / 2,
        -g * (sz + 1) + 2 * w * sy - G * (sx**2 + sy**2) / 2,
    ])


def jacobian(state, params) -> np.ndarray:
    sx, sy, sz = state.as_array() if isinstance(state, MeanFieldState) else np.asarray(state, float)
    g, G, w = _rates(params)
    return np.array([
        [-g / 2 + G * sz / 2, 0.0, G * sx / 2],
        [0.0, -g / 2 + G * sz / 2, -2 * w + G * sy / 2],
        [-G * sx, 2 * w - G * sy, -g],
    ])


def total_spin_rate(state, n_atoms: int, params) -> float:
    """``d<S^2>_MF/dt`` for ``<S^2>_MF = N^2 |s|^2 / 4``."""
    sx, sy, sz = state.as_array() if isinstance(state, MeanFieldState) else np.asarray(state, float)
    return -params.gamma * n_atoms**2 / 2 * (sz**2 + sz + (sx**2 + sy**2) / 2)


def mf_integrate(initial, params, t_final: float, n_points: int = 400,
                 rtol: float = 1e-10, atol: float = 1e-12):
    """Integrate the Bloch equations; returns ``(t, states)`` with states shaped (n, 3)."""
    y0 = initial.as_array() if isinstance(initial, MeanFieldState) else np.asarray(initial, float)
    t = np.linspace(0.0, t_final, n_points)
    sol = solve_ivp(lambda _t, y: mf_rhs(y, params), (0.0, t_final), y0, method="DOP853",
                    t_eval=t, rtol=rtol, atol=atol)
    return sol.t, sol.y.T


def mf_stability(branch: BranchSolution, params) -> BranchSolution:
    """Attach Jacobian eigenvalues and a stable/unstable/marginal label."""
    eig = np.linalg.eigvals(jacobian(branch.state, params))
    top = eig.real.max()
    if abs(top) < MARGINAL_TOL:
        branch.stability = "marginal"
    else:
        branch.stability = "stable" if top < 0 else "unstable"
    branch.eigenvalues = eig
    return branch


def cubic_coefficients(params) -> np.ndarray:
    """Coefficients (highest power first) of the fixed-point cubic in ``s_z``."""
    g, G, w = _rates(params)
    return np.array([G**2, G**2 - 2 * g * G, g**2 - 2 * g * G + 8 * w**2, g**2])


def _polish(s: float, params) -> float:
    c = cubic_coefficients(params)
    f, df = np.polyval(c, s), np.polyval(np.polyder(c), s)
    if df == 0:
        return s
    t = s - f / df
    # near a double root Newton can overshoot; keep only improving steps
    return t if abs(np.polyval(c, t)) < abs(f) else s


def _s_y(s_z: float, params) -> float:
    g, G, w = _rates(params)
    den = s_z * G - g
    if abs(den) < 1e-14 * max(g, G, 1.0):
        # only reachable for gamma = 0, s_z = 0: the drive-balanced point
        return w / (G / 4) if G > 0 else 0.0
    return 4 * w * s_z / den


def mf_steady_states(params, imag_tol: float = 1e-8) -> list[BranchSolution]:
    """Physical fixed points, ordered by ``s_z`` and stability-classified.

    Three roots are labelled lower, middle, upper; a single root takes the
    label of the branch it continues (lower when ``s_z`` is below the window
    centre ``-1/2``).  For ``gamma = 0`` the manifold of fixed points is
    resolved by conservation of ``|s| = 1``.
    """
    g, G, w = _rates(params)
    if g == 0:
        if G <= 0:
            raise DomainError("no dissipation: fixed points are not isolated")
        r = w / (G / 4)
        if r > 1:
            return []
        st = dicke_steady(r)
        return [mf_stability(BranchSolution("lower", st.s_z, st.s_y), params)]
    coeffs = cubic_coefficients(params)
    coeffs = np.trim_zeros(coeffs, "f")
    roots = np.roots(coeffs)
    scale = max(1.0, float(np.abs(roots).max()))
    real = sorted(
        _polish(float(r.real), params) for r in roots if abs(r.imag) <= imag_tol * scale
    )
    real = [s for s in real if -1 - 1e-12 <= s <= 1e-12]
    if len(real) == 3:
        labels = BRANCH_LABELS
    elif len(real) == 2:  # tangency at a window edge
        labels = ("lower", "upper")
    else:
        labels = tuple("lower" if s < -0.5 else "upper" for s in real)
    out = []
    for lab, s in zip(labels, real):
        s = min(max(s, -1.0), 0.0)
        out.append(mf_stability(BranchSolution(lab, s, _s_y(s, params)), params))
    return out


def bistability_window(params) -> tuple[float, float] | None:
    """Bounds on ``Omega / Omega_c`` with three real fixed points; None if ``Gamma < 8 gamma``."""
    g, G, _ = _rates(params)
    if G < 8 * g:
        return None
    x = g / G
    base = 1 + 20 * x - 8 * x**2
    root = np.sqrt((1 - 8 * x) ** 3)
    return 0.5 * np.sqrt(base - root), 0.5 * np.sqrt(base + root)


def _zeroth_order(r: float) -> dict:
    if r > np.sqrt(2):
        raise DomainError("branches a and b are complex above Omega = sqrt(2) Omega_c")
    disc = 1 - 2 * r**2
    if abs(disc) < 1e-12:  # fold point, up to rounding of the ratio
        disc = 0.0
    x = np.sqrt(disc) if disc >= 0 else 1j * np.sqrt(-disc)
    return {"a": -0.5 - 0.5 * x, "b": -0.5 + 0.5 * x, "c": 0.0}


def mf_perturbative(params, order: int = 0) -> dict:
    """Branch values of ``s_z`` expanded to ``order`` in ``gamma`` at fixed ``Gamma``.

    Coefficients are the exact Taylor coefficients of each root of the
    fixed-point cubic.  Complex values are returned where the zeroth-order
    root is complex (``Omega_c / sqrt(2) < Omega < sqrt(2) Omega_c``).
    ``valid_c`` is False when the second-order term of branch c exceeds its
    first-order scale, i.e. for ``Omega`` small compared with ``gamma``.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    g, G, w = _rates(params)
    if G <= 0:
        raise DomainError("perturbative branches need Gamma > 0")
    r = w / (G / 4)
    s0 = _zeroth_order(r)
    out = {}
    for name, s in s0.items():
        # F(s, gamma) = (1 + s)(gamma - s G)^2 + 8 s w^2 around gamma = 0
        fs = (s * G) ** 2 - 2 * G * (1 + s) * (-s * G) + 8 * w**2
        fg = 2 * (1 + s) * (-s * G)
        fss = 4 * G**2 * s + 2 * G**2 * (1 + s)
        fsg = -2 * s * G - 2 * G * (1 + s)
        fgg = 2 * (1 + s)
        if name in ("b", "c") and w == 0:
            s1, s2 = 1.0 / G, 0.0  # exact double root gamma / Gamma
        else:
            with np.errstate(divide="ignore", invalid="ignore"):  # fs = 0 at the fold
                s1 = -fg / fs
                s2 = -(0.5 * fss * s1**2 + fsg * s1 + 0.5 * fgg) / fs
        val = s
        if order >= 1:
            val = val + s1 * g
        if order >= 2:
            val = val + s2 * g**2
        out[name] = val
    out["valid_c"] = bool(w > 0 and g / (8 * w**2) * g < 1.0)
    return out


def closed_form_second_order(params) -> dict:
    """Closed-form expression for the second-order coefficients of branches a and b.

    It equals minus the Taylor coefficient used by :func:`mf_perturbative`
    (checked against the exact cubic roots); kept for comparison only.
    """
    _, G, w = _rates(params)
    wc = G / 4
    root = np.sqrt(wc**2 - 2 * w**2 + 0j)
    out = {}
    for name, sgn in (("a", 1), ("b", -1)):
        num = sgn * (root - sgn * wc)
        den = wc * (sgn * root + wc) - 2 * w**2
        tail = (G**2 * (wc * (sgn * root + wc) - w**2) + 16 * w**2 * wc**2 - 8 * wc**4) / (
            128 * wc**3 * (wc**2 - 2 * w**2))
        out[name] = num / den * tail
    out["c"] = -1 / (8 * w**2) if w > 0 else -np.inf
    return out


def dicke_steady(omega_ratio: float) -> MeanFieldState:
    """Steady state of the ``|s|``-conserving limit (``gamma = 0``) for ``Omega <= Omega_c``."""
    if omega_ratio < 0 or omega_ratio > 1:
        raise DomainError("the conserving-limit steady state exists only for 0 <= Omega/Omega_c <= 1")
    return MeanFieldState(0.0, float(omega_ratio), -float(np.sqrt(1 - omega_ratio**2)))


def stable_branches(params) -> tuple[BranchSolution, BranchSolution] | None:
    """(lower, upper) stable branches when bistable, else None."""
    sols = [b for b in mf_steady_states(params) if b.stable]
    if len(sols) != 2:
        return None
    return sols[0], sols[1]


def bisect_root(func: Callable[[float], float], lo: float, hi: float,
                tol: float = 1e-6, max_iter: int = 200) -> float:
    """Plain bisection; raises EstimationError without a sign change."""
    f_lo, f_hi = func(lo), func(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise EstimationError(f"no sign change on [{lo:.6g}, {hi:.6g}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = func(mid)
        if f_mid == 0 or hi - lo < tol:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class TransitionEstimate:
    n_values: list
    omega_ratios: list
    asymptote: float | None = None
    fit_params: tuple | None = None


def pt_residual(params: ModelParams, magnetization: float) -> float:
    """``<Sz> - (S_z^lower + S_z^upper) / 2`` with mean-field branches scaled by ``N/2``."""
    pair = stable_branches(params)
    if pair is None:
        raise EstimationError(f"not bistable at Omega/Omega_c = {params.omega_ratio:.6g}")
    mid = 0.25 * params.n_atoms * (pair[0].s_z + pair[1].s_z)
    return magnetization - mid


def estimate_pt_point(n_values: Iterable[int], gamma_c: float,
                      magnetization: Callable[[ModelParams], float],
                      gamma_s: float = 1.0, tol: float = 1e-5,
                      window: tuple[float, float] | None = None) -> TransitionEstimate:
    """Locate ``Omega_PT / Omega_c`` for each ``N`` and extrapolate in ``N``.

    ``magnetization(params)`` returns the exact steady-state ``<Sz>``.  The
    root of ``pt_residual`` is bracketed inside the bistability window; an
    exponential ``a + b exp(-c N)`` fit gives the large-``N`` asymptote when
    at least three atom numbers are supplied.
    """
    ns, ratios = [], []
    for n in n_values:
        base = ModelParams(n, gamma_c, gamma_s)
        win = window or bistability_window(base)
        if win is None:
            raise EstimationError(f"no bistability window at N = {n}")
        pad = 1e-6 * (win[1] - win[0])
        lo, hi = win[0] + pad, win[1] - pad

        def resid(r, base=base):
            p = base.with_omega_ratio(r)
            return pt_residual(p, magnetization(p))

        ratios.append(bisect_root(resid, lo, hi, tol=tol))
        ns.append(n)
    est = TransitionEstimate(ns, ratios)
    if len(ns) >= 3:
        x, y = np.asarray(ns, float), np.asarray(ratios)
        try:
            popt, _ = curve_fit(lambda n, a, b, c: a + b * np.exp(-c * n), x, y,
                                p0=(y[-1], y[0] - y[-1], 0.2), maxfev=20000)
            est.asymptote, est.fit_params = float(popt[0]), tuple(float(v) for v in popt)
        except RuntimeError:
            est.asymptote = None
    return est


def branch_magnetizations(params, ratios: Sequence[float]) -> np.ndarray:
    """Table of ``(ratio, s_z)`` for every fixed point over a drive grid (NaN-padded to 3)."""
    rows = []
    for r in ratios:
        sols = mf_steady_states(params.with_omega_ratio(r))
        zs = [b.s_z for b in sols] + [np.nan] * (3 - len(sols))
        rows.append([r, *zs])
    return np.array(rows)
