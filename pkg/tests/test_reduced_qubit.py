import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_params, probe, pump
from kerrprobe.dispersive import field_dispersives, stark_table
from kerrprobe.reduced_qubit import (
    ReducedRates,
    SidebandModel,
    SpectralFunction,
    build_rates,
    sideband_model,
    sideband_rates,
    sideband_ratio,
    spectrum_scan,
    steady_state_P1,
)
from kerrprobe.semiclassical import distinguishability, solve_pointer_states
from kerrprobe.squeezing import solve_squeezing

SM = np.array([[0, 1], [0, 0]], complex)  # |0><1| in basis (|0>, |1>)
SZ = np.diag([-1.0, 1.0]).astype(complex)
SX = np.array([[0, 1], [1, 0]], complex)


def _dissipator(c):
    eye = np.eye(2)
    cdc = c.conj().T @ c
    return np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)


def bloch_p1(G, delta, up, down, gamma_phi):
    """Steady state of H = delta/2 sz + G sx with decay, excitation and dephasing."""
    H = 0.5 * delta * SZ + G * SX
    eye = np.eye(2)
    L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    L += down * _dissipator(SM) + up * _dissipator(SM.conj().T)
    L += 0.5 * gamma_phi * _dissipator(SZ)
    w, v = np.linalg.eig(L)
    rho = v[:, int(np.argmin(np.abs(w)))].reshape(2, 2)
    rho /= np.trace(rho)
    return float(rho[1, 1].real)


def rates(G, delta, up, down, gamma_phi):
    return ReducedRates(
        gamma_down_tilde=np.asarray(down, float), gamma_up_tilde=np.asarray(up, float),
        gamma_phi_tilde=gamma_phi, gamma2_tilde=np.asarray(gamma_phi + (up + down) / 2),
        delta_tilde=np.asarray(delta, float), c_coef=1.0, delta=np.asarray(delta, float),
        g0_alpha_s0=G,
    )


@settings(max_examples=150, deadline=None)
@given(G=st.floats(0, 5), delta=st.floats(-20, 20), up=st.floats(0, 2), down=st.floats(1e-3, 2),
       gphi=st.floats(0, 2))
def test_p1_matches_bloch_oracle(G, delta, up, down, gphi):
    p = steady_state_P1(rates(G, delta, up, down, gphi))
    assert p == pytest.approx(bloch_p1(G, delta, up, down, gphi), abs=1e-10)
    assert 0.0 <= p <= 1.0


def test_saturation_half():
    p = steady_state_P1(rates(1e3, 0.0, 0.0, 0.1, 0.05))
    assert abs(p - 0.5) < 1e-3


def test_far_detuned_is_dark():
    assert steady_state_P1(rates(0.3, 1e9, 0.0, 0.1, 0.05)) < 1e-15


def test_all_rates_vanishing_guard(caplog):
    p = steady_state_P1(rates(0.3, 0.0, 0.0, 0.0, 0.0))
    assert p == 0.0
    assert "vanish" in caplog.text


def test_spectral_function_shape():
    sf = SpectralFunction(kappa=2.0, delta_r_tilde=7.0)
    assert sf.f(-7.0) == pytest.approx(1.0 + 0j)  # 2 / kappa, purely real
    assert sf.L(-7.0 + 1.0) == pytest.approx(0.5)  # half maximum at kappa/2
    far = np.array([1e3, 1e4])
    np.testing.assert_allclose(sf.L(far) * (far + 7.0) ** 2, 1.0, rtol=1e-4)


def _sf():
    return SpectralFunction(kappa=1.0, delta_r_tilde=12.0)


def test_no_probe_leaves_centre_line_only():
    out = sideband_rates(_sf(), 0.4, 0.7, 0.0, 0.1, 0.05, np.linspace(-30, 30, 7))
    assert np.all(out.gamma_up_tilde == 0.0)
    np.testing.assert_allclose(out.gamma_down_tilde, 0.1)
    np.testing.assert_allclose(out.delta_tilde, out.delta)


def test_zero_temperature_sideband():
    sf = _sf()
    out = sideband_rates(sf, 0.0, 1.0, 0.05, 0.1, 0.05, -12.0)
    assert float(out.gamma_up_tilde) == pytest.approx(0.05**2 * float(sf.L(-12.0)), rel=1e-14)


@pytest.mark.parametrize("r", [0.05, 0.3, 0.6])
def test_detailed_balance_resolved_limit(r):
    sf = SpectralFunction(kappa=1.0, delta_r_tilde=1e4)
    out = sideband_rates(sf, r, 1.0, 0.01, 0.0, 0.0, 1e4)  # L(-delta) >> L(delta)
    s2 = math.sinh(r) ** 2
    assert float(out.gamma_up_tilde / out.gamma_down_tilde) == pytest.approx(s2 / (s2 + 1), rel=1e-6)


def test_rate_formulas_written_out():
    sf, r, c, G, d3, p3 = _sf(), 0.35, 0.4 - 0.2j, 0.03, 0.1, 0.05
    delta = np.array([-12.5, -3.0, 0.0, 4.0, 11.0])
    out = sideband_rates(sf, r, c, G, d3, p3, delta)
    s2 = math.sinh(r) ** 2
    amp = abs(G * c) ** 2
    Lp = 0.5 / (0.25 + (12.0 + delta) ** 2)
    Lm = 0.5 / (0.25 + (12.0 - delta) ** 2)
    np.testing.assert_allclose(out.gamma_down_tilde, d3 + amp * ((Lm + Lp) * s2 + Lm), rtol=1e-14)
    np.testing.assert_allclose(out.gamma_up_tilde, amp * ((Lm + Lp) * s2 + Lp), rtol=1e-14)
    np.testing.assert_allclose(out.gamma2_tilde, p3 + (out.gamma_up_tilde + out.gamma_down_tilde) / 2)


def test_sideband_ratio_values():
    assert sideband_ratio(0.0, _sf())[1] == 0.0
    r = math.asinh(math.sqrt(0.3))
    assert sideband_ratio(r, _sf())[1] == pytest.approx(0.3 / 1.3, rel=1e-14)
    full, resolved = sideband_ratio(r, SpectralFunction(1.0, 10.0))
    assert abs(full - resolved) / resolved < 0.02


@settings(max_examples=60, deadline=None)
@given(r=st.floats(0, 1), dt=st.floats(-60, 60), G=st.floats(0, 3), c_re=st.floats(-2, 2),
       c_im=st.floats(-2, 2), d3=st.floats(0, 1), p3=st.floats(0, 1))
def test_p1_bounded_on_scans(r, dt, G, c_re, c_im, d3, p3):
    model = SidebandModel(1.0, dt, r, complex(c_re, c_im), G, d3, p3, omega10_ddd=0.0)
    p = model.p1(np.linspace(-80, 80, 401))
    assert np.all(np.isfinite(p)) and np.all(p >= 0.0) and np.all(p <= 1.0)


# ---------------------------------------------------------------------------
# full operating point


def _operating_point(correction=1.0):
    params = make_params(kerr_K=-0.02, levels=((0.0, 0.9, 0.0), (90.0, 0.0, 1.0)),
                         sideband_correction=correction)
    drives = [pump(0.8, 100.8), probe(0.05, 89.5)]
    table = stark_table(params, drives)
    sol = solve_pointer_states(params, drives, table)
    disp = field_dispersives(params, sol, table)
    return params, drives, sol, disp, solve_squeezing(disp)


def test_build_rates_ingredients():
    params, drives, sol, disp, sqz = _operating_point(correction=2.0)
    rr = build_rates(params, disp, sqz, sol)
    beta = complex(distinguishability(sol, 0)[0])
    e2 = complex(math.cos(2 * sqz.theta), math.sin(2 * sqz.theta))
    c = 2.0 * (beta * math.cosh(sqz.r) + beta.conjugate() * e2 * math.sinh(sqz.r))
    assert rr.c_coef == pytest.approx(c, rel=1e-14)
    assert rr.g0_alpha_s0 == pytest.approx(0.9 * sol.alpha[0, 1], rel=1e-14)
    assert rr.gamma_phi_tilde == pytest.approx(params.gamma_phi + params.kappa * abs(beta) ** 2 / 2)
    assert float(rr.delta) == pytest.approx(disp.omega10_ddd - 89.5)
    down3 = params.gamma_down + disp.lambda_alpha[0] ** 2 * params.kappa
    amp = abs(rr.g0_alpha_s0 * c) ** 2
    assert float(rr.gamma_down_tilde) > down3 and float(rr.gamma_down_tilde) < down3 + amp * 4


def test_sideband_model_matches_full_pipeline():
    params, drives, sol, disp, sqz = _operating_point()
    model = sideband_model(params, disp, sqz, sol)
    p_full = steady_state_P1(build_rates(params, disp, sqz, sol))
    assert model.p1(89.5) == pytest.approx(p_full, rel=1e-12)


def test_spectrum_scan_layout_and_parallel_agreement():
    params, drives, *_ = _operating_point()
    ws = np.linspace(88.0, 91.0, 31)
    amps = [0.0, 0.4, 0.8]
    scan = spectrum_scan(params, drives, ws, amps)
    assert scan.P1.shape == (3, 31) and np.all(scan.ok)
    assert np.all((scan.P1 >= 0) & (scan.P1 <= 1))
    assert scan.r[0] == 0.0 and scan.r[2] > scan.r[1] > 0
    par = spectrum_scan(params, drives, ws, amps, workers=2)
    np.testing.assert_allclose(par.P1, scan.P1, rtol=1e-12)


def test_failed_columns_are_flagged_not_dropped():
    params, drives, *_ = _operating_point()
    bad = [pump(0.8, 90.1), drives[1]]  # pump on the qubit transition
    scan = spectrum_scan(params, bad, np.linspace(88, 91, 5), [0.5, 0.8])
    assert scan.P1.shape == (2, 5)
    assert not np.any(scan.ok)
    assert all("ResonantDrive" in e for e in scan.errors)
    assert np.all(np.isnan(scan.P1))
