"""Expectation values, distributions and state comparisons.

Every function accepts either a :class:`BlockDensityMatrix` or a dense
``2^N x 2^N`` array in the computational basis (index 0 = all atoms down,
atom 0 is the most significant bit).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dicke import DickeLadder, block_operator
from .errors import DomainError, UndefinedCorrelationError
from .fullspace import collective_ops
from .pi_liouvillian import BlockDensityMatrix


class _Rep:
    """Operator algebra for one density-matrix representation."""

    def __init__(self, rho):
        self.rho = rho
        if isinstance(rho, BlockDensityMatrix):
            self.block = True
            self.n_atoms = rho.n_atoms
        else:
            rho = np.asarray(rho)
            dim = rho.shape[0]
            n = int(round(math.log2(dim)))
            if rho.shape != (dim, dim) or 2**n != dim:
                raise DomainError(f"full-space density matrix must be 2^N square, got {rho.shape}")
            self.block = False
            self.n_atoms = n
            self.rho = rho

    def op(self, kind):
        if self.block:
            return [block_operator(j2, kind) for j2 in self.rho.ladder.j2_values]
        return collective_ops(self.n_atoms)[kind]

    def mul(self, *ops):
        if self.block:
            out = ops[0]
            for o in ops[1:]:
                out = [a @ b for a, b in zip(out, o)]
            return out
        out = ops[0]
        for o in ops[1:]:
            out = out @ o
        return out

    def ev(self, op) -> complex:
        if self.block:
            return self.rho.expect(op)
        return complex((op @ self.rho).trace())


def expect(rho, kind: str) -> complex:
    """``<O>`` for a collective operator name (``Sx``, ``Sz``, ``Ssquared`` ...)."""
    rep = _Rep(rho)
    return rep.ev(rep.op(kind))


def magnetization_distribution(rho) -> dict:
    """``P_m`` over the eigenvalues ``m`` of ``Sz`` (ascending ``m``)."""
    rep = _Rep(rho)
    n = rep.n_atoms
    probs = {(k - n / 2): 0.0 for k in range(n + 1)}
    if rep.block:
        for j2, d, b in zip(rho.ladder.j2_values, rho.ladder.degeneracies, rho.blocks):
            diag = np.real(np.diag(b)) * d
            for i, p in enumerate(diag):
                probs[j2 / 2 - i] += float(p)
    else:
        diag = np.real(np.diag(rep.rho))
        counts = np.array([bin(i).count("1") for i in range(diag.size)])
        for k in range(n + 1):
            probs[k - n / 2] = float(diag[counts == k].sum())
    return probs


def intensity(rho) -> float:
    """``<S+ S->``."""
    rep = _Rep(rho)
    return float(rep.ev(rep.mul(rep.op("Splus"), rep.op("Sminus"))).real)


def g2_zero(rho) -> float:
    """Equal-time photon correlation ``<S+ S+ S- S-> / <S+ S->^2``."""
    rep = _Rep(rho)
    sp_, sm = rep.op("Splus"), rep.op("Sminus")
    den = rep.ev(rep.mul(sp_, sm)).real
    if den <= 1e-14:
        raise UndefinedCorrelationError("g2(0) undefined: zero emitted intensity")
    num = rep.ev(rep.mul(sp_, sp_, sm, sm)).real
    return float(max(num, 0.0) / den**2)


def spin_moments(rho) -> tuple[np.ndarray, np.ndarray]:
    """Mean spin ``<S_a>`` and symmetrized second moments ``<{S_a, S_b}>/2``."""
    rep = _Rep(rho)
    ops = [rep.op(k) for k in ("Sx", "Sy", "Sz")]
    mean = np.array([rep.ev(o).real for o in ops])
    second = np.empty((3, 3))
    for a in range(3):
        for b in range(a, 3):
            val = 0.5 * (rep.ev(rep.mul(ops[a], ops[b])) + rep.ev(rep.mul(ops[b], ops[a])))
            second[a, b] = second[b, a] = val.real
    return mean, second


def spin_squeezing_numeric(rho) -> float:
    """``xi^2 = N min Var(S_perp) / |<S>|^2`` from the transverse covariance matrix."""
    n = _Rep(rho).n_atoms
    mean, second = spin_moments(rho)
    norm = np.linalg.norm(mean)
    if norm < 1e-9:
        raise UndefinedCorrelationError("squeezing undefined: mean spin vanishes")
    axis = mean / norm
    trial = np.eye(3)[np.argmin(np.abs(axis))]
    e1 = np.cross(axis, trial)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    basis = np.vstack([e1, e2])
    cov = basis @ (second - np.outer(mean, mean)) @ basis.T
    var_min = np.linalg.eigvalsh(0.5 * (cov + cov.T))[0]
    return float(n * var_min / norm**2)


@dataclass
class CrssState:
    """Asymptotic eigenstate of ``S-`` in the ``j = N/2`` block (amplitudes for ``m = j .. -j``)."""

    n_atoms: int
    alpha: complex
    amplitudes: np.ndarray
    residual: float

    @property
    def j(self) -> float:
        return self.n_atoms / 2

    def to_block(self) -> BlockDensityMatrix:
        return BlockDensityMatrix.from_symmetric_ket(self.n_atoms, self.amplitudes)


def crss_state(n_atoms: int, alpha: complex) -> CrssState:
    """Build ``|j, alpha>`` by the upward lowering recursion from ``m = -j``."""
    j2 = n_atoms
    j = j2 / 2
    if abs(alpha) >= j:
        raise DomainError(f"|alpha| = {abs(alpha):.4g} must be below j = {j}")
    # index k = m + j, built in ascending m with log-magnitudes to avoid underflow
    coeffs = np.zeros(j2 + 1, dtype=complex)
    coeffs[0] = 1.0
    for k in range(j2):
        m = k - j
        coeffs[k + 1] = alpha * coeffs[k] / np.sqrt((j + m + 1) * (j - m))
    coeffs /= np.linalg.norm(coeffs)
    amps = coeffs[::-1].copy()
    sm = block_operator(j2, "Sminus")
    residual = float(np.linalg.norm(sm @ amps - alpha * amps))
    return CrssState(n_atoms, complex(alpha), amps, residual)


def crss_alpha(n_atoms: int, omega_ratio: float) -> complex:
    """Eigenvalue for the driven collective steady state: ``-i (N/2) Omega / Omega_c``."""
    return -0.5j * n_atoms * omega_ratio


def symmetric_ket_full(n_atoms: int, amplitudes) -> np.ndarray:
    """Embed ``j = N/2`` amplitudes (``m = j .. -j``) into the ``2^N`` computational basis."""
    amps = np.asarray(amplitudes, dtype=complex)
    counts = np.array([bin(i).count("1") for i in range(2**n_atoms)])
    psi = np.zeros(2**n_atoms, dtype=complex)
    for row, a in enumerate(amps):
        excited = n_atoms - row
        mask = counts == excited
        psi[mask] = a / np.sqrt(mask.sum())
    return psi


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def _uhlmann_root(a: np.ndarray, b: np.ndarray) -> float:
    ra = _psd_sqrt(a)
    w = np.linalg.eigvalsh(ra @ b @ ra)
    return float(np.sqrt(np.clip(w, 0, None)).sum())


def fidelity(rho, other) -> float:
    """``<psi|rho|psi>`` for a pure comparator, Uhlmann ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`` otherwise.

    ``other`` may be a :class:`CrssState`, a ket (``N+1`` symmetric amplitudes
    or ``2^N`` entries) or a density matrix in the same representation as ``rho``.
    """
    rep = _Rep(rho)
    n = rep.n_atoms
    if isinstance(other, CrssState):
        if other.n_atoms != n:
            raise DomainError("atom numbers differ")
        other = other.amplitudes
    if isinstance(other, np.ndarray) and other.ndim == 1:
        psi = other / np.linalg.norm(other)
        if rep.block:
            if psi.size != n + 1:
                raise DomainError(f"ket of length {psi.size} does not fit the j = N/2 block")
            return float(np.real(psi.conj() @ rho.blocks[0] @ psi))
        if psi.size == n + 1:
            psi = symmetric_ket_full(n, psi)
        if psi.size != rep.rho.shape[0]:
            raise DomainError("ket dimension does not match the density matrix")
        return float(np.real(psi.conj() @ rep.rho @ psi))
    if rep.block:
        if not isinstance(other, BlockDensityMatrix) or other.n_atoms != n:
            raise DomainError("comparator must be a block density matrix with the same N")
        root = sum(d * _uhlmann_root(a, b)
                   for d, a, b in zip(rho.ladder.degeneracies, rho.blocks, other.blocks))
        return float(min(root**2, 1.0))
    other = np.asarray(other)
    if other.shape != rep.rho.shape:
        raise DomainError("density matrices differ in shape")
    return float(min(_uhlmann_root(rep.rho, other) ** 2, 1.0))


@dataclass
class ObservableSet:
    n_atoms: int
    sz_mean: float
    s2_mean: float
    intensity: float
    g2_zero: float | None
    xi_squared: float | None
    pm_distribution: dict = field(default_factory=dict)
    crss_fidelity: float | None = None

    def to_record(self) -> dict:
        """Flat record; ``P_m`` appears as ``pm_<m>`` columns."""
        rec = {k: v for k, v in asdict(self).items() if k != "pm_distribution"}
        for m, p in sorted(self.pm_distribution.items()):
            rec[f"pm_{m:g}"] = p
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record())


def observable_set(rho, crss: CrssState | None = None) -> ObservableSet:
    """All scalar observables of a state; undefined correlations become ``None``."""
    try:
        g2 = g2_zero(rho)
    except UndefinedCorrelationError:
        g2 = None
    try:
        xi2 = spin_squeezing_numeric(rho)
    except UndefinedCorrelationError:
        xi2 = None
    return ObservableSet(
        n_atoms=_Rep(rho).n_atoms,
        sz_mean=float(expect(rho, "Sz").real),
        s2_mean=float(expect(rho, "Ssquared").real),
        intensity=intensity(rho),
        g2_zero=g2,
        xi_squared=xi2,
        pm_distribution=magnetization_distribution(rho),
        crss_fidelity=None if crss is None else fidelity(rho, crss),
    )


def mixed_state_reference(n_atoms: int, verify: bool = True) -> ObservableSet:
    """Closed-form observables of the fully mixed product state, checked against ``1/2^N``."""
    n = n_atoms
    ref = ObservableSet(
        n_atoms=n,
        sz_mean=0.0,
        s2_mean=0.75 * n,
        intensity=0.5 * n,
        g2_zero=2 * (1 - 1 / n) if n > 1 else 0.0,
        xi_squared=None,
        pm_distribution={k - n / 2: math.comb(n, k) / 2**n for k in range(n + 1)},
    )
    if verify:
        rho = BlockDensityMatrix.maximally_mixed(n)
        rep = _Rep(rho)
        sp_, sm, sz = rep.op("Splus"), rep.op("Sminus"), rep.op("Sz")
        checks = {
            "Sz": (rep.ev(sz).real, 0.0),
            "Sz^2": (rep.ev(rep.mul(sz, sz)).real, n / 4),
            "S+S-": (rep.ev(rep.mul(sp_, sm)).real, n / 2),
            "S^2": (rep.ev(rep.op("Ssquared")).real, 0.75 * n),
            "S+S+S-S-": (rep.ev(rep.mul(sp_, sp_, sm, sm)).real, n * (n - 1) / 2),
        }
        for name, (got, want) in checks.items():
            if abs(got - want) > 1e-12 * max(1.0, abs(want)):
                raise AssertionError(f"mixed-state {name}: {got} != {want}")
    return ref
