import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, strategies as st

from competing_decay import BlockDensityMatrix, ModelParams, build_liouvillian_pi, steady_state
from competing_decay.errors import DomainError, UndefinedCorrelationError
from competing_decay.fullspace import CoupledBasis, collective_ops
from competing_decay.observables import (
    crss_alpha,
    crss_state,
    expect,
    fidelity,
    g2_zero,
    intensity,
    magnetization_distribution,
    mixed_state_reference,
    observable_set,
    spin_squeezing_numeric,
    symmetric_ket_full,
)
from competing_decay.trajectories import prepare_singlet_product


@pytest.mark.parametrize("n", range(2, 21))
def test_mixed_state_reference(n):
    ref = mixed_state_reference(n)
    rho = BlockDensityMatrix.maximally_mixed(n)
    assert intensity(rho) == pytest.approx(ref.intensity)
    assert g2_zero(rho) == pytest.approx(ref.g2_zero)
    assert expect(rho, "Ssquared").real == pytest.approx(ref.s2_mean)
    pm = magnetization_distribution(rho)
    assert all(pm[m] == pytest.approx(p) for m, p in ref.pm_distribution.items())


def test_block_and_full_representations_agree():
    n = 4
    rho_b = steady_state(build_liouvillian_pi(ModelParams.from_ratio(n, 10.0, 0.8)))
    rho_f = CoupledBasis(n).embed_density(rho_b.blocks)
    a, b = observable_set(rho_b), observable_set(rho_f)
    for key in ("sz_mean", "s2_mean", "intensity", "g2_zero", "xi_squared"):
        assert getattr(a, key) == pytest.approx(getattr(b, key), abs=1e-11)
    for m in a.pm_distribution:
        assert a.pm_distribution[m] == pytest.approx(b.pm_distribution[m], abs=1e-12)


def test_ground_state_has_undefined_g2():
    with pytest.raises(UndefinedCorrelationError):
        g2_zero(BlockDensityMatrix.ground(5))
    assert observable_set(BlockDensityMatrix.ground(5)).g2_zero is None


def test_coherent_spin_state_is_not_squeezed():
    rho = BlockDensityMatrix.ground(12)
    assert spin_squeezing_numeric(rho) == pytest.approx(1.0)


@given(theta=st.floats(0, 2 * np.pi), phi=st.floats(0, 2 * np.pi))
def test_squeezing_is_rotation_invariant(theta, phi):
    n = 10
    amps = crss_state(n, crss_alpha(n, 0.6)).amplitudes
    from competing_decay.dicke import block_operator

    u = la.expm(-1j * phi * block_operator(n, "Sz")) @ la.expm(-1j * theta * block_operator(n, "Sy"))
    base = spin_squeezing_numeric(BlockDensityMatrix.from_symmetric_ket(n, amps))
    rotated = spin_squeezing_numeric(BlockDensityMatrix.from_symmetric_ket(n, u @ amps))
    assert rotated == pytest.approx(base, abs=1e-9)


def test_crss_is_lowering_eigenstate_with_shrinking_residual():
    residuals = [crss_state(n, crss_alpha(n, 0.5)).residual for n in (4, 8, 16, 32, 64)]
    assert all(b < a for a, b in zip(residuals, residuals[1:]))
    assert residuals[-1] < 1e-10
    with pytest.raises(DomainError):
        crss_state(4, 2.5)


def test_crss_is_coherent_light():
    n = 40
    rho = crss_state(n, crss_alpha(n, 0.5)).to_block()
    assert g2_zero(rho) == pytest.approx(1.0, abs=1e-6)
    assert fidelity(rho, crss_state(n, crss_alpha(n, 0.5))) == pytest.approx(1.0)


def test_symmetric_ket_embedding():
    n = 5
    amps = crss_state(n, crss_alpha(n, 0.4)).amplitudes
    psi = symmetric_ket_full(n, amps)
    ops = collective_ops(n)
    rho_b = BlockDensityMatrix.from_symmetric_ket(n, amps)
    assert np.vdot(psi, ops["Sz"] @ psi).real == pytest.approx(expect(rho_b, "Sz").real)
    assert fidelity(np.outer(psi, psi.conj()), amps) == pytest.approx(1.0)


def test_singlet_product_has_zero_total_spin():
    for n in (2, 4, 8):
        psi = prepare_singlet_product(n)
        s2 = collective_ops(n)["Ssquared"]
        assert np.vdot(psi, s2 @ psi).real == pytest.approx(0.0, abs=1e-12)
        assert np.linalg.norm(psi) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        prepare_singlet_product(3)


def test_mixed_state_fidelity_is_symmetric_and_bounded():
    a = steady_state(build_liouvillian_pi(ModelParams.from_ratio(6, 10.0, 0.7)))
    b = steady_state(build_liouvillian_pi(ModelParams.from_ratio(6, 10.0, 0.9)))
    f_ab, f_ba = fidelity(a, b), fidelity(b, a)
    assert f_ab == pytest.approx(f_ba, abs=1e-9)
    assert 0 < f_ab < 1
    assert fidelity(a, a) == pytest.approx(1.0, abs=1e-9)


def test_record_layout():
    rec = observable_set(BlockDensityMatrix.maximally_mixed(4)).to_record()
    assert "pm_-2" in rec and "pm_2" in rec and "pm_distribution" not in rec
