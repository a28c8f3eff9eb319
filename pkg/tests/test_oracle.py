"""Block solver against the dense 2^N reference."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from competing_decay import BlockDensityMatrix, ModelParams, build_liouvillian_pi, evolve, steady_state
from competing_decay.errors import ResourceLimitError
from competing_decay.fullspace import (
    CoupledBasis,
    basis_state,
    build_liouvillian_full,
    evolve_full,
    steady_state_full,
)
from competing_decay.observables import expect, g2_zero, intensity

# reference values from the dense solver (frozen)
FROZEN = [
    (2, 10.0, 0.7, -0.9404786254857844, 0.1090202495397832, 1.994988750255676),
    (4, 10.0, 0.7, -1.6720012599278995, 1.0187776044035741, 5.853391322057575),
    (5, 2.0, 1.3, -0.9518739367115262, 3.301261999341331, 6.530315841449479),
]


def _observables(rho):
    # <S+S+S-S-> rather than g2(0): the ratio is ill-conditioned at weak drive
    ss = intensity(rho)
    return np.array([expect(rho, "Sz").real, expect(rho, "Sx").real, expect(rho, "Sy").real,
                     expect(rho, "Ssquared").real, ss, g2_zero(rho) * ss**2])


def test_single_atom_closed_form():
    p = ModelParams(1, 3.0, 1.0, 0.8)
    rho = steady_state(build_liouvillian_pi(p))
    g, w = p.gamma, p.omega
    assert expect(rho, "Sz").real == pytest.approx(4 * w**2 / (g**2 + 8 * w**2) - 0.5, abs=1e-13)


@pytest.mark.parametrize("n, gc, r, sz, ss, s2", FROZEN)
def test_frozen_reference_values(n, gc, r, sz, ss, s2):
    rho = steady_state(build_liouvillian_pi(ModelParams.from_ratio(n, gc, r)))
    assert expect(rho, "Sz").real == pytest.approx(sz, abs=1e-10)
    assert intensity(rho) == pytest.approx(ss, abs=1e-10)
    assert expect(rho, "Ssquared").real == pytest.approx(s2, abs=1e-10)


@given(n=st.integers(2, 5), ratio_c=st.floats(0.1, 50.0), omega=st.floats(0.05, 2.5))
def test_steady_state_matches_full_space(n, ratio_c, omega):
    p = ModelParams.from_ratio(n, ratio_c, omega)
    block = _observables(steady_state(build_liouvillian_pi(p)))
    full = _observables(steady_state_full(build_liouvillian_full(p)))
    assert np.max(np.abs(block - full)) < 1e-7


@pytest.mark.parametrize("n", [2, 3, 4])
def test_generator_matches_projected_full_generator(n):
    # apply both generators to a random permutation-invariant state
    p = ModelParams.from_ratio(n, 4.0, 0.9)
    basis = CoupledBasis(n)
    rng = np.random.default_rng(n)
    rho = BlockDensityMatrix.zeros(n)
    for k, j2 in enumerate(rho.ladder.j2_values):
        a = rng.normal(size=(j2 + 1, j2 + 1)) + 1j * rng.normal(size=(j2 + 1, j2 + 1))
        rho.blocks[k] = a @ a.conj().T
    rho = rho * (1 / rho.trace().real)
    lv = build_liouvillian_pi(p)
    out_block = lv.apply(rho)
    full = basis.embed_density(rho.blocks)
    gen = build_liouvillian_full(p)
    out_full = (gen @ full.reshape(-1, order="F")).reshape(full.shape, order="F")
    projected = basis.project_density(out_full)
    for a, b in zip(out_block.blocks, projected):
        assert np.allclose(a, b, atol=1e-11)


def test_time_evolution_matches_full_space():
    p = ModelParams.from_ratio(4, 10.0, 0.75)
    t = np.linspace(0, 2.0, 5)
    block = evolve(BlockDensityMatrix.ground(4), build_liouvillian_pi(p), t)
    psi = basis_state(4)
    full = evolve_full(np.outer(psi, psi.conj()), build_liouvillian_full(p), t)
    for b, f in zip(block, full):
        assert expect(b, "Sz").real == pytest.approx(expect(f, "Sz").real, abs=1e-8)


@given(n=st.integers(2, 12), omega=st.floats(0.0, 2.0), gc=st.floats(0.5, 20.0))
def test_generator_preserves_trace(n, omega, gc):
    lv = build_liouvillian_pi(ModelParams.from_ratio(n, gc, omega))
    assert np.abs(lv.trace_row @ lv.matrix).max() < 1e-10 * lv.scale


@pytest.mark.parametrize("n", [4, 7])
def test_no_individual_decay_conserves_block_populations(n):
    p = ModelParams.from_ratio(n, 5.0, 0.8, gamma_s=0.0)
    rho0 = BlockDensityMatrix.maximally_mixed(n)
    states = evolve(rho0, build_liouvillian_pi(p), [0.0, 0.5, 3.0])
    for s in states:
        assert np.allclose(s.block_populations(), rho0.block_populations(), atol=1e-10)


def test_full_space_cap():
    with pytest.raises(ResourceLimitError):
        build_liouvillian_full(ModelParams.from_ratio(9, 10.0, 0.5))
