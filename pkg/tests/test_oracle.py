import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import make_params, probe, pump
from kerrprobe.oracle import (
    MAX_DIM,
    CutoffTooSmall,
    DegenerateSteadyState,
    DensityMatrix,
    Generator,
    InvalidDensityMatrix,
    TruncatedSpace,
    build_generator,
    fluctuation_number,
    fock_distribution,
    inferred_squeezing,
    is_bimodal,
    min_quadrature_variance,
    moments,
    steady_state,
    steady_state_auto,
    time_evolve,
    two_drive_P1,
)


def kerr_only(K=0.0, kappa=1.0, gamma_down=0.0, gamma_phi=0.0):
    return make_params(kerr_K=K, kappa=kappa, levels=((0.0, 0.0, 0.0), (90.0, 0.0, 1.0)),
                       gamma_down=gamma_down, gamma_phi=gamma_phi)


def test_space_validation():
    with pytest.raises(ValueError):
        TruncatedSpace(1, 2)
    with pytest.raises(ValueError):
        TruncatedSpace(MAX_DIM // 2 + 1, 2)
    s = TruncatedSpace(5, 3)
    a = s.destroy().toarray()
    comm = a @ a.conj().T - a.conj().T @ a
    np.testing.assert_allclose(np.diag(comm)[: 4 * 3], 1.0)


def test_density_checks():
    s = TruncatedSpace(3, 1)
    DensityMatrix.ground(s).check()
    rho = np.diag([0.5, 0.5, 0.1]).astype(complex)
    with pytest.raises(InvalidDensityMatrix, match="trace"):
        DensityMatrix(rho, s).check()
    rho = np.diag([0.5, 0.5, 0.0]).astype(complex)
    rho[0, 1] = 0.1
    with pytest.raises(InvalidDensityMatrix, match="Hermiticity"):
        DensityMatrix(rho, s).check()
    rho = np.diag([1.2, -0.2, 0.0]).astype(complex)
    with pytest.raises(InvalidDensityMatrix, match="negative"):
        DensityMatrix(rho, s).check()


@pytest.mark.parametrize("detuning", [-1.5, 0.0, 0.4, 3.0])
@pytest.mark.parametrize("displaced", [False, True])
def test_linear_cavity_is_coherent(detuning, displaced):
    """Linear driven damped cavity: coherent state alpha = -eps / (D - i kappa/2)."""
    params = kerr_only()
    eps = 0.7
    drive = pump(eps, params.omega_r - detuning)
    alpha = -eps / (detuning - 0.5j)
    space = TruncatedSpace(25, 1, alpha if displaced else 0j)
    gen = build_generator(params, [drive], space)
    dm = steady_state(gen)
    mo = moments(dm)
    assert mo.a == pytest.approx(alpha, abs=1e-10)
    assert mo.n == pytest.approx(abs(alpha) ** 2, abs=1e-9)
    assert abs(mo.var_n) < 1e-9
    if displaced:
        assert fluctuation_number(dm) < 1e-9
    assert min_quadrature_variance(mo) == pytest.approx(0.5, abs=1e-9)
    assert gen.metadata["residual"] < 1e-9


def test_displaced_basis_agrees():
    params = kerr_only(K=-0.05)
    drive = pump(0.8, params.omega_r - 0.5)
    plain = moments(steady_state(build_generator(params, [drive], TruncatedSpace(40, 1))))
    shifted = moments(steady_state(build_generator(params, [drive],
                                                    TruncatedSpace(30, 1, plain.a))))
    assert shifted.a == pytest.approx(plain.a, abs=1e-9)
    assert shifted.a2 == pytest.approx(plain.a2, abs=1e-8)
    assert shifted.n == pytest.approx(plain.n, abs=1e-8)


def test_squeezed_vacuum_moments():
    """r is recovered exactly from a squeezed vacuum built by matrix exponential."""
    n = 60
    a = np.diag(np.sqrt(np.arange(1, n)), 1)
    r, th = 0.3, 0.7
    xi = r * np.exp(2j * th)
    S = expm(0.5 * (np.conj(xi) * a @ a - xi * a.conj().T @ a.conj().T))
    psi = S[:, 0]
    dm = DensityMatrix(np.outer(psi, psi.conj()), TruncatedSpace(n, 1))
    mo = moments(dm.check())
    assert mo.n == pytest.approx(math.sinh(r) ** 2, rel=1e-10)
    assert inferred_squeezing(mo) == pytest.approx(r, rel=1e-10)
    assert min_quadrature_variance(mo) == pytest.approx(0.5 * math.exp(-2 * r), rel=1e-10)


def test_fock_tools():
    p = np.exp(-0.5 * (np.arange(40) - 8.0) ** 2 / 4)
    p += np.exp(-0.5 * (np.arange(40) - 28.0) ** 2 / 4)
    assert is_bimodal(p / p.sum())
    coherent = np.array([math.exp(-9) * 9**k / math.factorial(k) for k in range(40)])
    assert not is_bimodal(coherent)
    dm = DensityMatrix(np.diag(coherent / coherent.sum()).astype(complex), TruncatedSpace(40, 1))
    assert fock_distribution(dm).sum() == pytest.approx(1.0)


def test_lab_and_rotating_frames_agree():
    """Without a qubit the two frames are related by an exact unitary."""
    params = kerr_only(K=-0.1)
    drive = pump(0.5, params.omega_r - 0.6)
    space = TruncatedSpace(12, 1)
    t_eval = np.linspace(0, 4, 9)
    rho0 = DensityMatrix.ground(space)
    lab = build_generator(params, [drive], space, frame="lab")
    rot = build_generator(params, [drive], space, frame="rotating")
    assert lab.metadata["frame"] == "lab" and rot.metadata["frame_frequency"] == drive.frequency
    _, s_lab = time_evolve(lab, rho0, 4.0, t_eval=t_eval, rtol=1e-10, atol=1e-12)
    _, s_rot = time_evolve(rot, rho0, 4.0, t_eval=t_eval, rtol=1e-10, atol=1e-12)
    diag = np.arange(space.dim) * (space.dim + 1)
    np.testing.assert_allclose(s_lab[:, diag].real, s_rot[:, diag].real, atol=1e-7)


def test_coupling_metadata():
    params = make_params()
    space = TruncatedSpace(4, 2)
    assert build_generator(params, [pump()], space, "lab").metadata["coupling"] == "rabi"
    assert build_generator(params, [pump()], space).metadata["coupling"] == "rotating_wave"
    with pytest.raises(ValueError):
        build_generator(params, [probe()], space)  # no pump to define the frame
    with pytest.raises(ValueError):
        build_generator(params, [pump()], TruncatedSpace(4, 3))


def test_qubit_relaxes_without_drive():
    params = make_params(gamma_down=0.2, gamma_phi=0.1)
    gen = build_generator(params, [pump(0.0, 100.5)], TruncatedSpace(6, 2))
    mo = moments(steady_state(gen))
    assert mo.populations[0] == pytest.approx(1.0, abs=1e-12)


def test_degenerate_generator_detected():
    space = TruncatedSpace(3, 1)
    zero = sp.csr_matrix((9, 9), dtype=complex)
    with pytest.raises(DegenerateSteadyState):
        steady_state(Generator(space, zero))


def test_cutoff_escalation_and_cap():
    params = kerr_only()
    drive = pump(2.5, params.omega_r)  # n = 25, a truncated mean above 0.7 x 8
    dm, gen = steady_state_auto(params, [drive], n_fock=8, m_levels=1)
    assert gen.space.n_fock > 8
    assert fluctuation_number(dm) < 0.7 * gen.space.n_fock
    assert moments(dm).n == pytest.approx(25.0, rel=1e-2)
    with pytest.raises(CutoffTooSmall):
        steady_state_auto(params, [pump(20.0, params.omega_r)], n_fock=30)


@settings(max_examples=15, deadline=None)
@given(
    K=st.floats(-0.3, 0.3), eps=st.floats(0.0, 1.5), det=st.floats(-3, 3),
    g=st.floats(0.0, 1.5), gd=st.floats(0.01, 0.5), gp=st.floats(0.0, 0.5),
)
def test_steady_state_invariants(K, eps, det, g, gd, gp):
    params = make_params(kerr_K=K, levels=((0.0, g, 0.0), (92.0, 0.0, 1.0)), gamma_down=gd,
                         gamma_phi=gp)
    gen = build_generator(params, [pump(eps, params.omega_r - det)], TruncatedSpace(10, 2))
    dm = steady_state(gen, check=False)
    dm.check()  # trace, Hermiticity, positivity
    assert gen.metadata["residual"] < 1e-9


def test_time_evolution_invariants_and_relaxation():
    params = make_params(kerr_K=-0.05, gamma_down=0.3, gamma_phi=0.1)
    space = TruncatedSpace(10, 2)
    drives = [pump(0.4, 100.6), probe(0.1, 89.9)]
    gen = build_generator(params, drives, space)
    assert not gen.time_independent
    t_eval = np.linspace(0, 10, 21)
    final, samples = time_evolve(gen, DensityMatrix.ground(space), 10.0, t_eval=t_eval)
    assert samples.shape == (21, space.dim**2)
    final.check()


def test_two_drive_without_probe_equals_steady_state():
    params = make_params(kerr_K=-0.05, gamma_down=0.3, gamma_phi=0.1)
    space = TruncatedSpace(10, 2)
    res = two_drive_P1(params, [pump(0.4, 100.6), probe(0.0, 89.9)], space, t_settle=5.0)
    static = steady_state(build_generator(params, [pump(0.4, 100.6)], space))
    assert res.converged
    assert res.P1 == pytest.approx(float(moments(static).populations[1]), abs=1e-12)


def test_cutoff_robustness():
    """Doubling the cutoff moves the steady-state moments by less than 0.1%."""
    params = kerr_only(K=-0.05)
    drives = [pump(1.0, params.omega_r - 0.8)]
    lo = moments(steady_state(build_generator(params, drives, TruncatedSpace(40, 1))))
    hi = moments(steady_state(build_generator(params, drives, TruncatedSpace(80, 1))))
    assert abs(hi.n - lo.n) < 1e-3 * hi.n
    assert abs(hi.a - lo.a) < 1e-3 * abs(hi.a)
    assert abs(hi.a2 - lo.a2) < 1e-3 * abs(hi.a2)
