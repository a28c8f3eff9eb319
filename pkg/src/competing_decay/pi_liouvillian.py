"""Permutation-invariant Lindblad dynamics on the Dicke ladder.

A permutation-symmetric density matrix is ``rho = sum_j p_j (x) 1_{d_j}``: the
same ``(2j+1) x (2j+1)`` block ``p_j`` on each of the ``d_j`` copies of spin
``j``.  The generator works on *sector-weighted* blocks ``x_j = d_j p_j``,
column-stacked per block and concatenated in ladder order (``j`` descending).
In these variables the trace is the plain sum of block diagonals and every
coupling coefficient stays of order ``N`` even when the degeneracies reach
``~1e17`` (``N = 64``).

Individual decay, ``sum_n sigma_n rho sigma_n^+``, is obtained by coupling the
last spin to the remaining ``N - 1`` (spin ``k``) and twirling over permutations::

    x_j[mu, mu'] += N sum_{k = j +- 1/2} sum_{j'' = k +- 1/2}
                    (d^{N-1}_k / d^N_{j''}) a(m) a(m') x_{j''}[m, m'],
    a(m) = <k, m-1/2; up | j'', m> <k, m-1/2; down | j, m-1>,   mu = m - 1.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .dicke import DickeLadder, block_operator, degeneracy2
from .errors import DecompositionError, FitQualityError, IntegrationError, ResourceLimitError
from .params import ModelParams

log = logging.getLogger(__name__)

MAX_PI_N = 64
MAX_DENSE_EIG_DIM = 3000
SCHEMA_VERSION = 1


@dataclass
class BlockDensityMatrix:
    """Permutation-invariant state stored as one block ``p_j`` per total spin ``j``.

    ``blocks`` is aligned with ``DickeLadder(n_atoms).j2_values``; row ``i`` of a
    block is ``m = j - i``.  ``trace = sum_j d_j tr(p_j)``.
    """

    n_atoms: int
    blocks: list

    @cached_property
    def ladder(self) -> DickeLadder:
        return DickeLadder(self.n_atoms)

    @classmethod
    def zeros(cls, n_atoms: int) -> "BlockDensityMatrix":
        lad = DickeLadder(n_atoms)
        return cls(n_atoms, [np.zeros((j2 + 1, j2 + 1), dtype=complex) for j2 in lad.j2_values])

    @classmethod
    def from_symmetric_ket(cls, n_atoms: int, amplitudes) -> "BlockDensityMatrix":
        """Pure state inside the ``j = N/2`` block (amplitudes ordered ``m = N/2 .. -N/2``)."""
        psi = np.asarray(amplitudes, dtype=complex)
        if psi.shape != (n_atoms + 1,):
            raise ValueError("symmetric ket needs N + 1 amplitudes")
        psi = psi / np.linalg.norm(psi)
        rho = cls.zeros(n_atoms)
        rho.blocks[0] = np.outer(psi, psi.conj())
        return rho

    @classmethod
    def ground(cls, n_atoms: int) -> "BlockDensityMatrix":
        amps = np.zeros(n_atoms + 1)
        amps[-1] = 1.0
        return cls.from_symmetric_ket(n_atoms, amps)

    @classmethod
    def excited(cls, n_atoms: int) -> "BlockDensityMatrix":
        amps = np.zeros(n_atoms + 1)
        amps[0] = 1.0
        return cls.from_symmetric_ket(n_atoms, amps)

    @classmethod
    def maximally_mixed(cls, n_atoms: int) -> "BlockDensityMatrix":
        rho = cls.zeros(n_atoms)
        rho.blocks = [np.eye(j2 + 1, dtype=complex) / 2.0**n_atoms for j2 in rho.ladder.j2_values]
        return rho

    def copy(self) -> "BlockDensityMatrix":
        return BlockDensityMatrix(self.n_atoms, [b.copy() for b in self.blocks])

    def weighted_blocks(self) -> list[np.ndarray]:
        return [d * b for d, b in zip(self.ladder.degeneracies, self.blocks)]

    def to_vector(self) -> np.ndarray:
        """Sector-weighted, column-stacked vectorization used by the generator."""
        return np.concatenate([x.reshape(-1, order="F") for x in self.weighted_blocks()])

    @classmethod
    def from_vector(cls, n_atoms: int, x: np.ndarray) -> "BlockDensityMatrix":
        lad = DickeLadder(n_atoms)
        blocks = []
        for j2, d in zip(lad.j2_values, lad.degeneracies):
            start, dim = lad.offsets[j2], j2 + 1
            blocks.append(x[start: start + dim * dim].reshape(dim, dim, order="F") / d)
        return cls(n_atoms, blocks)

    def trace(self) -> complex:
        return complex(sum(d * np.trace(b) for d, b in zip(self.ladder.degeneracies, self.blocks)))

    def expect(self, op_blocks) -> complex:
        """``tr(O rho)`` for a collective operator given per block."""
        return complex(sum(
            d * np.trace(o @ b) for d, o, b in zip(self.ladder.degeneracies, op_blocks, self.blocks)
        ))

    def inner(self, other: "BlockDensityMatrix") -> complex:
        """Hilbert-Schmidt product ``tr(self^+ other)`` on the full space."""
        return complex(sum(
            d * np.vdot(a, b) for d, a, b in zip(self.ladder.degeneracies, self.blocks, other.blocks)
        ))

    def reduced_inner(self, other: "BlockDensityMatrix") -> complex:
        """Hilbert-Schmidt product of the multiplicity-reduced states ``sum_j tr(x_j^+ y_j)``."""
        return complex(sum(
            d * d * np.vdot(a, b) for d, a, b in zip(self.ladder.degeneracies, self.blocks, other.blocks)
        ))

    def block_populations(self) -> np.ndarray:
        """Probability weight ``d_j tr(p_j)`` of each total-spin sector."""
        return np.array([
            (d * np.trace(b)).real for d, b in zip(self.ladder.degeneracies, self.blocks)
        ])

    def hermitian_error(self) -> float:
        return max(float(np.abs(b - b.conj().T).max()) for b in self.blocks)

    def min_eigenvalue(self) -> float:
        return min(float(np.linalg.eigvalsh(0.5 * (b + b.conj().T)).min()) for b in self.blocks)

    def __add__(self, other):
        return BlockDensityMatrix(self.n_atoms, [a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other):
        return BlockDensityMatrix(self.n_atoms, [a - b for a, b in zip(self.blocks, other.blocks)])

    def __mul__(self, c):
        return BlockDensityMatrix(self.n_atoms, [c * b for b in self.blocks])

    __rmul__ = __mul__

    def to_json(self) -> str:
        """JSON dump: j-indexed blocks, rows of ``[re, im]`` pairs (row-major)."""
        payload = {
            "schema_version": SCHEMA_VERSION,
            "kind": "BlockDensityMatrix",
            "n_atoms": self.n_atoms,
            "blocks": [
                {
                    "j": j2 / 2,
                    "degeneracy": degeneracy2(self.n_atoms, j2),
                    "data": [[[float(z.real), float(z.imag)] for z in row] for row in b],
                }
                for j2, b in zip(self.ladder.j2_values, self.blocks)
            ],
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "BlockDensityMatrix":
        payload = json.loads(text)
        if payload.get("kind") != "BlockDensityMatrix":
            raise ValueError("not a BlockDensityMatrix dump")
        n = int(payload["n_atoms"])
        lad = DickeLadder(n)
        by_j2 = {int(round(2 * blk["j"])): blk["data"] for blk in payload["blocks"]}
        blocks = []
        for j2 in lad.j2_values:
            arr = np.asarray(by_j2[j2], dtype=float)
            blocks.append(arr[..., 0] + 1j * arr[..., 1])
        return cls(n, blocks)


def _cg_up(k2: int, jj2: int, m2: int) -> float:
    """``<k, m - 1/2; up | jj, m>`` with spins doubled (Condon-Shortley)."""
    k, m = k2 / 2, m2 / 2
    if abs(m2 - 1) > k2:
        return 0.0
    if jj2 == k2 + 1:
        return np.sqrt((k + m + 0.5) / (k2 + 1))
    return -np.sqrt((k - m + 0.5) / (k2 + 1))


def _cg_down(k2: int, jj2: int, m2: int) -> float:
    """``<k, m + 1/2; down | jj, m>``."""
    k, m = k2 / 2, m2 / 2
    if abs(m2 + 1) > k2:
        return 0.0
    if jj2 == k2 + 1:
        return np.sqrt((k - m + 0.5) / (k2 + 1))
    return np.sqrt((k + m + 0.5) / (k2 + 1))


def _individual_jump_map(ladder: DickeLadder) -> sp.csr_matrix:
    """Sparse matrix of ``sum_n sigma_n rho sigma_n^+`` on weighted block vectors."""
    n = ladder.n_atoms
    size = ladder.liouville_dim
    rows, cols, vals = [], [], []
    for jj2 in ladder.j2_values:  # source block
        for k2 in (jj2 - 1, jj2 + 1):
            if k2 < 0 or k2 > n - 1:
                continue
            ratio = float(Fraction(degeneracy2(n - 1, k2), degeneracy2(n, jj2)))
            for j2 in (k2 - 1, k2 + 1):  # target block
                if j2 < 0 or j2 > n:
                    continue
                # K[row_j(m-1), row_jj(m)] = a(m)
                kmat = np.zeros((j2 + 1, jj2 + 1))
                for src_row in range(jj2 + 1):
                    m2 = jj2 - 2 * src_row
                    mu2 = m2 - 2
                    if abs(mu2) > j2:
                        continue
                    a = _cg_up(k2, jj2, m2) * _cg_down(k2, j2, mu2)
                    kmat[(j2 - mu2) // 2, src_row] = a
                block = sp.coo_matrix(n * ratio * np.kron(kmat, kmat))
                rows.append(block.row + ladder.offsets[j2])
                cols.append(block.col + ladder.offsets[jj2])
                vals.append(block.data)
    if not rows:
        return sp.csr_matrix((size, size))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )


def _within_block_generator(j2: int, params: ModelParams) -> np.ndarray:
    """Drive, collective decay and the anticommutator of individual decay in one block."""
    dim = j2 + 1
    eye = np.eye(dim)
    ham = 2.0 * params.omega * block_operator(j2, "Sx")
    sm = block_operator(j2, "Sminus")
    spsm = sm.conj().T @ sm
    excited = params.n_atoms / 2.0 * eye + block_operator(j2, "Sz")
    gen = -1j * (np.kron(eye, ham) - np.kron(ham.T, eye))
    gen += params.gamma_c * (np.kron(sm.conj(), sm) - 0.5 * np.kron(eye, spsm) - 0.5 * np.kron(spsm.T, eye))
    gen -= 0.5 * params.gamma_s * (np.kron(eye, excited) + np.kron(excited.T, eye))
    return gen


@dataclass
class PiLiouvillian:
    """Sparse generator on sector-weighted block vectors: ``dx/dt = matrix @ x``."""

    params: ModelParams
    matrix: sp.csr_matrix
    ladder: DickeLadder = field(repr=False)

    @cached_property
    def trace_row(self) -> np.ndarray:
        t = np.zeros(self.ladder.liouville_dim)
        for j2 in self.ladder.j2_values:
            dim = j2 + 1
            t[self.ladder.offsets[j2] + np.arange(dim) * (dim + 1)] = 1.0
        return t

    @cached_property
    def scale(self) -> float:
        return float(max(abs(self.matrix).sum(axis=1).max(), 1.0))

    @cached_property
    def anchor(self) -> int:
        """Vector index of the ground-state population ``m = -N/2`` in ``j = N/2``."""
        dim = self.ladder.n_atoms + 1
        return dim * dim - 1

    @cached_property
    def deflated_lu(self):
        """LU of ``L + s e_anchor t``: the zero mode is moved to ``+s``, others untouched."""
        nz = np.flatnonzero(self.trace_row)
        size = self.matrix.shape[0]
        rank_one = sp.csr_matrix(
            (self.scale * self.trace_row[nz], (np.full(nz.size, self.anchor), nz)), shape=(size, size)
        )
        return spla.splu((self.matrix + rank_one).tocsc())

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, rho: BlockDensityMatrix) -> BlockDensityMatrix:
        return BlockDensityMatrix.from_vector(rho.n_atoms, self.matrix @ rho.to_vector())


def build_liouvillian_pi(params: ModelParams, max_n: int = MAX_PI_N) -> PiLiouvillian:
    """Permutation-invariant generator of the driven collective + individual decay model."""
    n = params.n_atoms
    if n > max_n:
        raise ResourceLimitError(f"block solver capped at N = {max_n} (got {n})")
    ladder = DickeLadder(n)
    within = sp.block_diag(
        [_within_block_generator(j2, params) for j2 in ladder.j2_values], format="csr"
    )
    gen = within
    if params.gamma_s > 0:
        gen = gen + params.gamma_s * _individual_jump_map(ladder)
    return PiLiouvillian(params, sp.csr_matrix(gen, dtype=complex), ladder)


def _as_state(lv: PiLiouvillian, x: np.ndarray) -> BlockDensityMatrix:
    rho = BlockDensityMatrix.from_vector(lv.ladder.n_atoms, x)
    rho.blocks = [0.5 * (b + b.conj().T) for b in rho.blocks]
    tr = rho.trace().real
    return rho * (1.0 / tr)


def steady_state(lv: PiLiouvillian, method: str = "lu", check: bool = True) -> BlockDensityMatrix:
    """Unique steady state, by deflated sparse LU (``lu``) or shift-invert (``shift_invert``)."""
    if method == "lu":
        rhs = np.zeros(lv.shape[0], dtype=complex)
        rhs[lv.anchor] = lv.scale
        x = lv.deflated_lu.solve(rhs)
    elif method == "shift_invert":
        sigma = -1e-9 * lv.scale
        vals, vecs = spla.eigs(lv.matrix.tocsc(), k=1, sigma=sigma, which="LM")
        x = vecs[:, 0] / (lv.trace_row @ vecs[:, 0])
    else:
        raise ValueError(f"unknown steady-state method {method!r}")
    if check:
        resid = np.abs(lv.matrix @ x).max() / np.abs(x).max()
        if resid > 1e-8 * lv.scale:
            import warnings

            warnings.warn(f"steady-state residual {resid:.2e}; null space may be degenerate",
                          RuntimeWarning, stacklevel=2)
    return _as_state(lv, x)


def evolve(rho0: BlockDensityMatrix, lv: PiLiouvillian, t_grid, method: str = "bdf",
           rtol: float = 1e-10, atol: float = 1e-13) -> list[BlockDensityMatrix]:
    """Integrate the master equation and return the state at each time in ``t_grid``.

    ``bdf`` is an adaptive implicit integrator with the exact sparse Jacobian;
    ``expm`` applies the matrix exponential interval by interval.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    x0 = rho0.to_vector().astype(complex)
    if method == "expm":
        mat = lv.matrix.tocsc()
        xs = [x0]
        for dt in np.diff(t_grid):
            xs.append(spla.expm_multiply(mat * dt, xs[-1]))
    elif method == "bdf":
        mat = lv.matrix
        sol = solve_ivp(
            lambda t, x: mat @ x, (t_grid[0], t_grid[-1]), x0, method="BDF",
            t_eval=t_grid, jac=mat, rtol=rtol, atol=atol,
        )
        if not sol.success:
            reached = sol.t[-1] if sol.t.size else t_grid[0]
            raise IntegrationError(f"integration stopped at t = {reached:.6g}: {sol.message}")
        xs = list(sol.y.T)
    else:
        raise ValueError(f"unknown method {method!r}")
    n = rho0.n_atoms
    return [BlockDensityMatrix.from_vector(n, x) for x in xs]


@dataclass
class SpectralResult:
    lambda_1: float
    rho_1: BlockDensityMatrix
    method: str
    eigenvalue: complex = 0j
    fit_r2: float | None = None


def _hermitian_mode(lv: PiLiouvillian, x: np.ndarray) -> BlockDensityMatrix:
    """Fix the global phase of an eigenvector so the block matrix is Hermitian."""
    rho = BlockDensityMatrix.from_vector(lv.ladder.n_atoms, x)
    diag = np.concatenate([np.diag(d * b) for d, b in zip(rho.ladder.degeneracies, rho.blocks)])
    phase = diag[np.argmax(np.abs(diag))]
    phase = phase / abs(phase)
    rho = rho * (1.0 / phase)
    rho.blocks = [0.5 * (b + b.conj().T) for b in rho.blocks]
    norm = np.sqrt(rho.inner(rho).real)
    return rho * (1.0 / norm)


def _pick_gap(vals: np.ndarray) -> int:
    zero = int(np.argmin(np.abs(vals)))
    re = np.abs(vals.real)
    re[zero] = np.inf
    return int(np.argmin(re))


def _gap_direct(lv: PiLiouvillian, max_dim: int):
    if lv.shape[0] > max_dim:
        raise ResourceLimitError(
            f"dense eigensolve capped at dimension {max_dim} (got {lv.shape[0]}); use shift_invert"
        )
    vals, vecs = la.eig(lv.matrix.toarray())
    idx = _pick_gap(vals)
    return vals[idx], vecs[:, idx]


def _gap_shift_invert(lv: PiLiouvillian, k: int = 6):
    lu = lv.deflated_lu
    size = lv.shape[0]
    op = spla.LinearOperator((size, size), matvec=lu.solve, dtype=complex)
    k = min(k, size - 2)
    vals, vecs = spla.eigs(lv.matrix.tocsc(), k=k, sigma=0.0, OPinv=op, which="LM")
    # the deflated zero mode sits at +scale and is never returned near sigma = 0
    keep = np.abs(vals - lv.scale) > 1e-6 * lv.scale
    vals, vecs = vals[keep], vecs[:, keep]
    re = np.abs(vals.real)
    idx = int(np.argmin(re))
    return vals[idx], vecs[:, idx]


def _sz_blocks(ladder):
    return [block_operator(j2, "Sz") for j2 in ladder.j2_values]


def decay_fit(lv: PiLiouvillian, t_final: float | None = None, n_points: int = 200,
              r2_min: float = 0.99, max_doublings: int = 12) -> tuple[float, float]:
    """Rate of the slowest relaxation of ``<Sz(t)>`` from the ground state.

    The tail window ``[t_f/2, t_f]`` is refit with ``t_f`` doubled until it spans
    at least three e-foldings of the fitted rate.  Returns ``(rate, R^2)``.
    """
    n = lv.ladder.n_atoms
    sz = _sz_blocks(lv.ladder)
    sz_inf = steady_state(lv).expect(sz).real
    t_f = t_final if t_final is not None else 10.0 / lv.params.rate_unit
    rho = BlockDensityMatrix.ground(n)
    t_now = 0.0
    for _ in range(max_doublings):
        if t_f > t_now:
            rho = evolve(rho, lv, [t_now, t_f / 2], method="expm")[-1] if t_f / 2 > t_now else rho
        grid = np.linspace(t_f / 2, t_f, n_points)
        states = evolve(rho, lv, grid, method="expm")
        signal = np.array([s.expect(sz).real for s in states]) - sz_inf
        rho, t_now = states[-1], t_f
        if np.all(signal > 0) or np.all(signal < 0):
            y = np.log(np.abs(signal))
            slope, icpt = np.polyfit(grid, y, 1)
            resid = y - (slope * grid + icpt)
            r2 = 1.0 - resid.var() / y.var() if y.var() > 0 else 0.0
            rate = -slope
            if rate > 0 and rate * (t_f / 2) >= 3.0:
                if r2 < r2_min:
                    raise FitQualityError(f"exponential tail fit R^2 = {r2:.4f} < {r2_min}")
                return float(rate), float(r2)
            if rate > 0:
                t_f = max(2 * t_f, 6.5 / rate)
                rho = states[-1]
                # restart window from the current time
                t_now = grid[-1]
                continue
        t_f *= 2
    raise FitQualityError("could not find a clean single-exponential tail")


def spectral_gap(params_or_lv, method: str = "shift_invert",
                 max_dense_dim: int = MAX_DENSE_EIG_DIM) -> SpectralResult:
    """Liouvillian gap ``lambda_1`` and its Hermitian, traceless eigenmode ``rho_1``.

    ``direct`` diagonalizes the dense generator, ``shift_invert`` runs ARPACK
    around zero on the deflated generator, ``decay_fit`` fits the long-time
    relaxation of the magnetization (the mode then comes from shift-invert).
    """
    lv = params_or_lv if isinstance(params_or_lv, PiLiouvillian) else build_liouvillian_pi(params_or_lv)
    if method == "direct":
        val, x = _gap_direct(lv, max_dense_dim)
        return SpectralResult(float(-val.real), _hermitian_mode(lv, x), "direct", complex(val))
    if method == "shift_invert":
        val, x = _gap_shift_invert(lv)
        return SpectralResult(float(-val.real), _hermitian_mode(lv, x), "shift-invert", complex(val))
    if method == "decay_fit":
        rate, r2 = decay_fit(lv)
        val, x = _gap_shift_invert(lv)
        return SpectralResult(rate, _hermitian_mode(lv, x), "decay-fit", complex(-rate), fit_r2=r2)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class MetastablePair:
    rho_plus: BlockDensityMatrix
    rho_minus: BlockDensityMatrix
    a_plus: float = float("nan")
    a_minus: float = float("nan")

    @property
    def weight_error(self) -> float:
        return abs(1.0 - self.a_plus - self.a_minus)


def metastable_decomposition(rho_1: BlockDensityMatrix, zero_tol: float = 1e-12) -> MetastablePair:
    """Split a traceless Hermitian mode into trace-one positive and negative parts.

    The part with the larger ``<S^2>`` is labelled ``rho_plus``.
    """
    n = rho_1.n_atoms
    plus, minus = BlockDensityMatrix.zeros(n), BlockDensityMatrix.zeros(n)
    scale = max(float(np.abs(b).max()) for b in rho_1.blocks)
    for b, blk in enumerate(rho_1.blocks):
        w, v = np.linalg.eigh(0.5 * (blk + blk.conj().T))
        pos = w > zero_tol * scale
        neg = w < -zero_tol * scale
        plus.blocks[b] = (v[:, pos] * w[pos]) @ v[:, pos].conj().T
        minus.blocks[b] = -(v[:, neg] * w[neg]) @ v[:, neg].conj().T
    tp, tm = plus.trace().real, minus.trace().real
    if tp <= 0 or tm <= 0:
        raise DecompositionError("mode has eigenvalues of one sign only; not a traceless slow mode")
    plus, minus = plus * (1.0 / tp), minus * (1.0 / tm)
    s2 = [block_operator(j2, "Ssquared") for j2 in rho_1.ladder.j2_values]
    if plus.expect(s2).real < minus.expect(s2).real:
        plus, minus = minus, plus
    return MetastablePair(plus, minus)


def mixture_weights(rho_s: BlockDensityMatrix, pair: MetastablePair,
                    metric: str = "reduced") -> tuple[float, float]:
    """``a_pm = tr(rho_s rho_pm) / tr(rho_pm^2)``; also stored on ``pair``.

    ``metric="reduced"`` takes the trace on the collective ``|j, m>`` state
    obtained by tracing out the permutation multiplicity (blocks ``d_j p_j``);
    ``metric="full"`` uses the ``2^N``-dimensional Hilbert-Schmidt product.
    """
    if metric == "reduced":
        inner = BlockDensityMatrix.reduced_inner
    elif metric == "full":
        inner = BlockDensityMatrix.inner
    else:
        raise ValueError(f"unknown metric {metric!r}")
    a_plus = (inner(rho_s, pair.rho_plus) / inner(pair.rho_plus, pair.rho_plus)).real
    a_minus = (inner(rho_s, pair.rho_minus) / inner(pair.rho_minus, pair.rho_minus)).real
    pair.a_plus, pair.a_minus = float(a_plus), float(a_minus)
    return pair.a_plus, pair.a_minus


def switching_rates(lambda_1: float, a_plus: float, a_minus: float) -> tuple[float, float]:
    """Escape rates ``(Gamma_plus, Gamma_minus) = (lambda_1 a_minus, lambda_1 a_plus)``."""
    return lambda_1 * a_minus, lambda_1 * a_plus
