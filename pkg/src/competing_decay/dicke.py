"""Dicke ladder bookkeeping: total-spin blocks, degeneracies and collective operators.

Spin labels are carried as ``j2 = 2 j`` so odd atom numbers index exactly.
Inside a block, row ``i`` corresponds to ``m = j - i`` (descending ``m``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np

from .errors import DomainError

OPERATOR_KINDS = ("Sx", "Sy", "Sz", "Splus", "Sminus", "Ssquared")


def _check_pair(n2: int, j2: int) -> None:
    if n2 < 0 or j2 < 0 or j2 > n2 or (n2 - j2) % 2:
        raise DomainError(f"j = {j2}/2 is not a total spin of {n2} spin-1/2 particles")


def degeneracy2(n_atoms: int, j2: int) -> int:
    """Multiplicity of the spin ``j2 / 2`` irrep among ``n_atoms`` spins (exact integer)."""
    _check_pair(n_atoms, j2)
    k = (n_atoms - j2) // 2
    return comb(n_atoms, k) - (comb(n_atoms, k - 1) if k > 0 else 0)


def degeneracy(n_atoms: int, j: float) -> int:
    """Number of copies of the total-spin-``j`` block for ``n_atoms`` spins.

    Equals ``N! (2j+1) / ((N/2-j)! (N/2+j+1)!)``, evaluated with exact
    integers so it is valid for any ``N``.
    """
    j2 = 2 * j
    if int(j2) != j2:
        raise DomainError(f"j = {j} is not a half-integer")
    return degeneracy2(int(n_atoms), int(j2))


def lowering_elements(j2: int) -> np.ndarray:
    """Subdiagonal of S- inside one block: ``sqrt((j+m)(j-m+1))`` for ``m = j..-j+1``."""
    j = j2 / 2
    m = j - np.arange(j2)
    return np.sqrt((j + m) * (j - m + 1))


def block_operator(j2: int, kind: str) -> np.ndarray:
    """Dense matrix of a collective operator restricted to one spin-``j2/2`` block."""
    dim = j2 + 1
    j = j2 / 2
    m = j - np.arange(dim)
    if kind == "Sz":
        return np.diag(m).astype(complex)
    if kind == "Ssquared":
        return np.eye(dim, dtype=complex) * (j * (j + 1))
    sm = np.zeros((dim, dim), dtype=complex)
    if dim > 1:
        sm[np.arange(1, dim), np.arange(dim - 1)] = lowering_elements(j2)
    if kind == "Sminus":
        return sm
    sp = sm.T.copy()
    if kind == "Splus":
        return sp
    if kind == "Sx":
        return 0.5 * (sp + sm)
    if kind == "Sy":
        return -0.5j * (sp - sm)
    raise ValueError(f"unknown operator kind {kind!r}; expected one of {OPERATOR_KINDS}")


@dataclass(frozen=True)
class DickeLadder:
    """The total-spin decomposition of ``n_atoms`` spin-1/2 particles."""

    n_atoms: int
    j2_values: tuple = field(init=False)

    def __post_init__(self):
        if self.n_atoms < 1:
            raise DomainError("a ladder needs at least one atom")
        object.__setattr__(self, "j2_values", tuple(range(self.n_atoms, -1, -2)))

    @property
    def j_values(self) -> list[float]:
        return [j2 / 2 for j2 in self.j2_values]

    @property
    def n_blocks(self) -> int:
        return len(self.j2_values)

    def block_dim(self, j2: int) -> int:
        return j2 + 1

    def degeneracy(self, j2: int) -> int:
        return degeneracy2(self.n_atoms, j2)

    @cached_property
    def degeneracies(self) -> np.ndarray:
        """Float copy of the degeneracies, aligned with ``j2_values``."""
        return np.array([float(self.degeneracy(j2)) for j2 in self.j2_values])

    @cached_property
    def n_states(self) -> int:
        """Number of ``(j, m)`` labels."""
        return sum(j2 + 1 for j2 in self.j2_values)

    @cached_property
    def liouville_dim(self) -> int:
        """Number of block-matrix entries, ``sum_j (2j+1)^2``."""
        return sum((j2 + 1) ** 2 for j2 in self.j2_values)

    @cached_property
    def offsets(self) -> dict:
        """Start index of each block inside a vectorized block matrix."""
        out, pos = {}, 0
        for j2 in self.j2_values:
            out[j2] = pos
            pos += (j2 + 1) ** 2
        return out

    def index_of(self, j2: int) -> int:
        return self.j2_values.index(j2)


def collective_operator(ladder: DickeLadder, kind: str) -> list[np.ndarray]:
    """Per-block matrices of ``Sx, Sy, Sz, Splus, Sminus`` or ``Ssquared``.

    The list is aligned with ``ladder.j2_values``; the operator acts identically
    on every degenerate copy of a block.
    """
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator kind {kind!r}; expected one of {OPERATOR_KINDS}")
    return [block_operator(j2, kind) for j2 in ladder.j2_values]
