"""Brute-force reference on the full 2^N Hilbert space.

Computational basis: atom ``n`` (1-based) is bit ``N - n`` of the state index,
bit value 1 meaning excited.  Density matrices are vectorized by stacking
columns, ``vec(rho)[i + D * k] = rho[i, k]``, so ``vec(A X B) = (B^T kron A) vec(X)``.
"""

from __future__ import annotations

import logging
import warnings
from functools import lru_cache

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dicke import DickeLadder, degeneracy2
from .errors import ResourceLimitError
from .params import ModelParams

log = logging.getLogger(__name__)

MAX_FULLSPACE_N = 8
MAX_TRAJECTORY_N = 12

_SIGMA = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))  # |g><e|, index 0 = g


def _check_cap(n_atoms: int, cap: int, what: str) -> None:
    if n_atoms > cap:
        raise ResourceLimitError(
            f"{what} on the full 2^N space is capped at N = {cap} (got N = {n_atoms}); "
            "use the permutation-invariant block solver (pi_liouvillian) instead"
        )


def sigma_minus(n_atoms: int, atom: int) -> sp.csr_matrix:
    """Lowering operator of one atom (``atom`` counted from 0)."""
    left = sp.identity(2**atom, format="csr")
    right = sp.identity(2 ** (n_atoms - atom - 1), format="csr")
    return sp.kron(sp.kron(left, _SIGMA), right, format="csr")


@lru_cache(maxsize=16)
def collective_ops(n_atoms: int) -> dict:
    """Sparse ``Sx, Sy, Sz, Splus, Sminus`` on the full space."""
    dim = 2**n_atoms
    sm = sp.csr_matrix((dim, dim))
    for n in range(n_atoms):
        sm = sm + sigma_minus(n_atoms, n)
    sm = sm.tocsr()
    spl = sm.T.tocsr()
    idx = np.arange(dim)
    excited = np.array([bin(i).count("1") for i in idx])
    sz = sp.diags(excited - n_atoms / 2.0).tocsr()
    ops = {
        "Sminus": sm,
        "Splus": spl,
        "Sz": sz.astype(complex),
        "Sx": (0.5 * (spl + sm)).astype(complex),
        "Sy": (-0.5j * (spl - sm)).tocsr(),
    }
    ops["Ssquared"] = (
        ops["Sx"] @ ops["Sx"] + ops["Sy"] @ ops["Sy"] + ops["Sz"] @ ops["Sz"]
    ).tocsr()
    return ops


def build_liouvillian_full(params: ModelParams, max_n: int = MAX_FULLSPACE_N) -> sp.csr_matrix:
    """Sparse generator ``L`` with ``d vec(rho)/dt = L vec(rho)`` on the full space."""
    n = params.n_atoms
    _check_cap(n, max_n, "the Liouvillian")
    ops = collective_ops(n)
    dim = 2**n
    eye = sp.identity(dim, format="csr")
    ham = 2.0 * params.omega * ops["Sx"]
    gen = -1j * (sp.kron(eye, ham) - sp.kron(ham.T, eye))

    def add_dissipator(c, rate):
        cdc = (c.conj().T @ c).tocsr()
        return rate * (
            sp.kron(c.conj(), c) - 0.5 * sp.kron(eye, cdc) - 0.5 * sp.kron(cdc.T, eye)
        )

    if params.gamma_c > 0:
        gen = gen + add_dissipator(ops["Sminus"], params.gamma_c)
    if params.gamma_s > 0:
        for atom in range(n):
            gen = gen + add_dissipator(sigma_minus(n, atom), params.gamma_s)
    return sp.csr_matrix(gen, dtype=complex)


def trace_functional(dim: int) -> np.ndarray:
    """Row vector ``t`` with ``t @ vec(rho) = tr(rho)``."""
    t = np.zeros(dim * dim)
    t[np.arange(dim) * (dim + 1)] = 1.0
    return t


def _null_vector_lu(gen: sp.spmatrix, trace_row: np.ndarray, anchor: int) -> np.ndarray:
    """Solve ``L x = 0, t x = 1`` through ``(L + s e_anchor t) x = s e_anchor``."""
    size = gen.shape[0]
    scale = max(abs(gen).sum(axis=1).max(), 1.0)
    nz = np.flatnonzero(trace_row)
    rank_one = sp.csr_matrix(
        (scale * trace_row[nz], (np.full(nz.size, anchor), nz)), shape=(size, size)
    )
    rhs = np.zeros(size, dtype=complex)
    rhs[anchor] = scale
    lu = spla.splu((gen + rank_one).tocsc())
    return lu.solve(rhs)


def _null_vector_shift_invert(gen: sp.spmatrix, trace_row: np.ndarray) -> np.ndarray:
    scale = max(abs(gen).sum(axis=1).max(), 1.0)
    vals, vecs = spla.eigs(gen.tocsc(), k=1, sigma=-1e-9 * scale, which="LM")
    x = vecs[:, 0]
    return x / (trace_row @ x)


def _hermitize(rho: np.ndarray) -> np.ndarray:
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def steady_state_full(gen: sp.spmatrix, method: str = "lu", check: bool = True) -> np.ndarray:
    """Unique steady state of a full-space Liouvillian as a dense density matrix."""
    size = gen.shape[0]
    dim = int(round(np.sqrt(size)))
    t = trace_functional(dim)
    if method == "lu":
        x = _null_vector_lu(gen, t, anchor=0)
    elif method == "shift_invert":
        x = _null_vector_shift_invert(gen, t)
    else:
        raise ValueError(f"unknown steady-state method {method!r}")
    if check:
        resid = np.abs(gen @ x).max()
        norm = abs(gen).sum(axis=1).max()
        if resid > 1e-8 * norm:
            warnings.warn(
                f"steady-state residual {resid:.2e} is large; the null space may be degenerate",
                RuntimeWarning,
                stacklevel=2,
            )
    return _hermitize(x.reshape(dim, dim, order="F"))


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(x: np.ndarray) -> np.ndarray:
    dim = int(round(np.sqrt(x.size)))
    return x.reshape(dim, dim, order="F")


def evolve_full(rho0: np.ndarray, gen: sp.spmatrix, t_grid) -> list[np.ndarray]:
    """Exact propagation ``exp(L t) rho0`` sampled on ``t_grid`` (starting at ``t_grid[0]``)."""
    t_grid = np.asarray(t_grid, dtype=float)
    gen = gen.tocsc()
    out = [vec(rho0).astype(complex)]
    for dt in np.diff(t_grid):
        out.append(spla.expm_multiply(gen * dt, out[-1]))
    return [unvec(x) for x in out]


def expect(op, rho: np.ndarray) -> complex:
    """``tr(op rho)`` for a sparse or dense operator."""
    return complex((op @ rho).trace()) if sp.issparse(op) else complex(np.trace(op @ rho))


def basis_state(n_atoms: int, excited: tuple = ()) -> np.ndarray:
    """Product state with the listed atoms (0-based) excited, others in the ground state."""
    index = 0
    for atom in excited:
        index |= 1 << (n_atoms - atom - 1)
    psi = np.zeros(2**n_atoms, dtype=complex)
    psi[index] = 1.0
    return psi


class CoupledBasis:
    """Orthonormal ``|j, m, alpha>`` basis of the full space, stored per excitation sector.

    Each sector with ``e`` excitations (``m = e - N/2``) carries a real orthogonal
    matrix whose columns are the coupled states in that sector, grouped by ``j``
    (descending, as in :class:`DickeLadder`) and then by the copy label ``alpha``.
    Collective operators act on the coupled amplitudes with the standard
    angular-momentum matrix elements.
    """

    def __init__(self, n_atoms: int, max_n: int = MAX_TRAJECTORY_N):
        _check_cap(n_atoms, max_n, "the coupled basis")
        self.n_atoms = n_atoms
        self.ladder = DickeLadder(n_atoms)
        popcount = np.array([bin(i).count("1") for i in range(2**n_atoms)])
        self.sector_states = [np.flatnonzero(popcount == e) for e in range(n_atoms + 1)]
        self._lowering = [self._sector_lowering(e) for e in range(n_atoms + 1)]
        self.sector_matrix = self._build()

    def _sector_lowering(self, e: int) -> sp.csr_matrix:
        """``S-`` restricted to sector ``e -> e - 1``."""
        n = self.n_atoms
        if e == 0:
            return sp.csr_matrix((0, len(self.sector_states[0])))
        src = self.sector_states[e]
        dst_pos = {s: k for k, s in enumerate(self.sector_states[e - 1])}
        rows, cols = [], []
        for col, state in enumerate(src):
            for bit in range(n):
                if state >> bit & 1:
                    rows.append(dst_pos[state ^ (1 << bit)])
                    cols.append(col)
        return sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(len(self.sector_states[e - 1]), len(src))
        )

    def _build(self) -> list[np.ndarray]:
        n = self.n_atoms
        columns = [[] for _ in range(n + 1)]
        for j2 in self.ladder.j2_values:
            e_top = (n + j2) // 2
            if e_top == n:
                top = np.ones((1, 1))
            else:
                raising = self._lowering[e_top + 1].T  # sector e_top -> e_top + 1
                top = la.null_space(raising.toarray())
            assert top.shape[1] == degeneracy2(n, j2)
            vecs = top
            j = j2 / 2
            for step in range(j2 + 1):
                e = e_top - step
                columns[e].append(vecs)
                if step < j2:
                    m = j - step
                    vecs = (self._lowering[e] @ vecs) / np.sqrt((j + m) * (j - m + 1))
        return [np.hstack(cols) for cols in columns]

    def sector_of(self, j2: int, row: int) -> int:
        """Excitation number of row ``row`` (``m = j - row``) in block ``j2``."""
        return (self.n_atoms + j2) // 2 - row

    def to_full(self, amps: list[np.ndarray]) -> np.ndarray:
        """Coupled amplitudes (per block, shape ``(2j+1, d_j)``) to a full-space vector."""
        n = self.n_atoms
        dtype = np.result_type(*amps, float)
        psi = np.zeros(2**n, dtype=dtype)
        for e in range(n + 1):
            m2 = 2 * e - n
            parts = [
                amps[b][(j2 - m2) // 2]
                for b, j2 in enumerate(self.ladder.j2_values)
                if j2 >= abs(m2)
            ]
            psi[self.sector_states[e]] = self.sector_matrix[e] @ np.concatenate(parts)
        return psi

    def from_full(self, psi: np.ndarray) -> list[np.ndarray]:
        n = self.n_atoms
        amps = [
            np.zeros((j2 + 1, int(d)), dtype=np.result_type(psi, float))
            for j2, d in zip(self.ladder.j2_values, self.ladder.degeneracies)
        ]
        for e in range(n + 1):
            m2 = 2 * e - n
            coeffs = self.sector_matrix[e].T @ psi[self.sector_states[e]]
            pos = 0
            for b, j2 in enumerate(self.ladder.j2_values):
                if j2 < abs(m2):
                    continue
                d = amps[b].shape[1]
                amps[b][(j2 - m2) // 2] = coeffs[pos: pos + d]
                pos += d
        return amps

    def block_vectors(self, j2: int) -> np.ndarray:
        """Full-space vectors of block ``j2`` as an array of shape ``(2j+1, d_j, 2^N)``."""
        b = self.ladder.index_of(j2)
        d = int(self.ladder.degeneracies[b])
        out = np.zeros((j2 + 1, d, 2**self.n_atoms))
        for row in range(j2 + 1):
            amps = [np.zeros((k + 1, int(dd))) for k, dd in
                    zip(self.ladder.j2_values, self.ladder.degeneracies)]
            for alpha in range(d):
                amps[b][row, alpha] = 1.0
                out[row, alpha] = self.to_full(amps)
                amps[b][row, alpha] = 0.0
        return out

    def embed_density(self, blocks: list[np.ndarray]) -> np.ndarray:
        """Full density matrix ``sum_j sum_alpha p_j`` placed on every copy of block ``j``."""
        dim = 2**self.n_atoms
        rho = np.zeros((dim, dim), dtype=complex)
        for j2, p in zip(self.ladder.j2_values, blocks):
            w = self.block_vectors(j2)
            rho += np.einsum("max,mn,nay->xy", w, p, w, optimize=True)
        return rho

    def project_density(self, rho: np.ndarray) -> list[np.ndarray]:
        """Permutation-twirled blocks ``p_j = (1/d_j) sum_alpha <j m alpha| rho |j m' alpha>``."""
        out = []
        for j2, d in zip(self.ladder.j2_values, self.ladder.degeneracies):
            w = self.block_vectors(j2)
            out.append(np.einsum("max,xy,nay->mn", w, rho, w, optimize=True) / d)
        return out
