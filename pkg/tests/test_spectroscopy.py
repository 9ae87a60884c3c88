import math

import numpy as np
import pytest

from kerrprobe.reduced_qubit import SidebandModel, SpectrumScan
from kerrprobe.spectroscopy import (
    DegeneratePeaks,
    GridMismatch,
    compare_runs,
    fit_three_lorentzians,
    heating_report,
    lorentzian_sum,
    ratio_to_squeezing,
)
from kerrprobe.squeezing import effective_temperature

TRUE = dict(baseline=0.01, A_c=0.5, f_c=0.0, w_c=1.0, A_r=0.3, f_r=-8.0, w_r=1.4,
            A_b=0.1, f_b=8.0, w_b=1.4)
NAMES = ("A_c", "f_c", "w_c", "A_r", "f_r", "w_r", "A_b", "f_b", "w_b")


def synthetic(noise, seed, f=None):
    f = np.linspace(-20, 20, 1601) if f is None else f
    t = TRUE
    P = lorentzian_sum(f, t["baseline"], t["A_c"], t["f_c"], t["w_c"], t["A_r"], t["f_r"],
                       t["w_r"], t["A_b"], t["f_b"], t["w_b"])
    rng = np.random.default_rng(seed)
    return f, P + noise * rng.standard_normal(f.size)


def test_lorentzian_shape():
    f = np.array([-1.0, -0.5, 0.0, 0.5, 3.0])
    out = lorentzian_sum(f, 0.1, 2.0, 0.0, 1.0)
    np.testing.assert_allclose(out[1:4], [1.1, 2.1, 1.1])
    assert out[4] == pytest.approx(0.1 + 2.0 / 37.0)


@pytest.mark.parametrize("seed", range(5))
def test_synthetic_round_trip_within_3_sigma(seed):
    """1% noise on three known Lorentzians (blue above the centre: hint < 0)."""
    f, P = synthetic(0.01, seed)
    fit = fit_three_lorentzians(f, P, delta_r_tilde_hz=-8.0)
    assert fit.model == "triplet" and fit.fit_ok
    for name in NAMES:
        dev = abs(getattr(fit, name) - TRUE[name])
        assert dev <= 3 * fit.sigma[name], f"{name}: {dev:.3g} vs sigma {fit.sigma[name]:.3g}"
    assert abs(fit.baseline - TRUE["baseline"]) <= 3 * fit.sigma["baseline"]
    assert fit.ratio == pytest.approx(1 / 3, abs=3 * fit.ratio_sigma)


def test_noiseless_recovery_is_exact():
    f, P = synthetic(0.0, 0)
    fit = fit_three_lorentzians(f, P, delta_r_tilde_hz=-8.0)
    for name in NAMES:
        assert getattr(fit, name) == pytest.approx(TRUE[name], abs=1e-8)
    assert fit.rms_residual < 1e-10


def test_labels_follow_detuning_sign():
    f, P = synthetic(0.0, 0)
    fit = fit_three_lorentzians(f, P, delta_r_tilde_hz=+8.0)
    # the lower-frequency line is now the heating sideband
    assert fit.f_b == pytest.approx(-8.0, abs=1e-8) and fit.A_b == pytest.approx(0.3, abs=1e-8)
    unhinted = fit_three_lorentzians(f, P)
    assert unhinted.f_r == pytest.approx(-8.0, abs=1e-8)


def test_single_line_falls_back():
    f = np.linspace(-20, 20, 801)
    P = lorentzian_sum(f, 0.0, 0.4, 1.0, 1.2)
    fit = fit_three_lorentzians(f, P, delta_r_tilde_hz=8.0)
    assert fit.model == "single"
    assert fit.A_r == 0.0 and fit.A_b == 0.0
    assert math.isnan(fit.f_r) and math.isnan(fit.f_b)
    assert fit.f_c == pytest.approx(1.0, abs=1e-8)
    assert math.isnan(fit.ratio)


@pytest.mark.parametrize("side, model", [(-8.0, "doublet-r"), (8.0, "doublet-b")])
def test_lone_sideband_gives_doublet(side, model):
    # with a negative detuning hint the heating line sits above the centre
    f = np.linspace(-20, 20, 1601)
    P = lorentzian_sum(f, 0.0, 0.5, 0.0, 1.0, 0.3, side, 1.4)
    fit = fit_three_lorentzians(f, P, delta_r_tilde_hz=-8.0)
    assert fit.model == model
    kept, dropped = ("f_r", "A_b") if model == "doublet-r" else ("f_b", "A_r")
    assert getattr(fit, dropped) == 0.0
    assert getattr(fit, kept) == pytest.approx(side, abs=1e-8)


def test_degenerate_peaks_rejected():
    f = np.linspace(-20, 20, 1601)
    P = lorentzian_sum(f, 0.0, 0.5, 0.0, 4.0, 0.5, 0.6, 4.0, 0.2, 9.0, 1.0)
    with pytest.raises(DegeneratePeaks):
        fit_three_lorentzians(f, P, delta_r_tilde_hz=-0.6, allow_fallback=False)


def test_input_validation():
    with pytest.raises(ValueError, match="samples"):
        fit_three_lorentzians(np.arange(10.0), np.ones(10))
    f = np.linspace(0, 1, 100)
    bad = np.ones(100)
    bad[3] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        fit_three_lorentzians(f, bad)


@pytest.mark.parametrize(
    "ratio, n_th, r",
    [(0.0, 0.0, 0.0), (0.3 / 1.3, 0.3, math.asinh(math.sqrt(0.3))), (0.5, 1.0, math.asinh(1.0))],
)
def test_ratio_inversion(ratio, n_th, r):
    got_n, got_r = ratio_to_squeezing(ratio)
    assert got_n == pytest.approx(n_th, abs=1e-15)
    assert got_r == pytest.approx(r, abs=1e-15)


def test_ratio_inversion_anchor():
    assert ratio_to_squeezing(0.2308)[1] == pytest.approx(0.52, abs=5e-3)
    for bad in (-0.1, 1.0, 2.0):
        with pytest.raises(ValueError):
            ratio_to_squeezing(bad)


def _model_scan(rs, dt=2 * math.pi * 10e6, kappa=2 * math.pi * 1e6, wp=2 * math.pi * 6.4e9):
    ws = np.linspace(-(dt + 4 * kappa), dt + 4 * kappa, 2001)
    rows = []
    for r in rs:
        m = SidebandModel(kappa, dt, r, 1.0, 0.002 * kappa, 0.1 * kappa, 0.05 * kappa)
        rows.append(m.p1(ws))
    n = len(rs)
    return SpectrumScan(
        pump_amps=np.arange(n, dtype=float), omega_s=ws, P1=np.vstack(rows), branch=["H"] * n,
        r=np.array(rs), delta_r_tilde=np.full(n, dt), omega10_ddd=np.zeros(n),
        ok=np.ones(n, bool), errors=[""] * n, omega_p=wp, kappa=kappa,
    )


def test_heating_report_recovers_squeezing():
    rs = [0.0, 0.2, 0.5]
    scan = _model_scan(rs)
    rep = heating_report(scan)
    assert not np.any(rep.flagged)
    for k, r in enumerate(rs):
        s2 = math.sinh(r) ** 2
        assert rep.ratio_Ab_Ar[k] == pytest.approx(s2 / (s2 + 1), abs=2e-3)
        assert rep.r_inferred[k] == pytest.approx(r, abs=5e-3)
    assert rep.T_eff[0] == 0.0
    assert rep.T_eff[2] == pytest.approx(effective_temperature(rep.n_th_inferred[2], scan.omega_p))


def test_heating_report_keeps_failed_rows():
    scan = _model_scan([0.3, 0.3])
    scan.ok[1] = False
    scan.errors[1] = "BranchMismatch: test"
    rep = heating_report(scan)
    assert rep.flagged.tolist() == [False, True]
    assert math.isnan(rep.T_eff[1]) and "BranchMismatch" in rep.notes[1]
    assert len(rep.fits) == 2 and rep.fits[1] is None


def test_compare_runs():
    a = _model_scan([0.2, 0.4])
    same = compare_runs(a, a)
    assert same["summary"]["max_abs_d_center_hz"] == 0.0
    assert same["summary"]["max_abs_d_ratio"] == 0.0
    other = _model_scan([0.2])
    with pytest.raises(GridMismatch):
        compare_runs(a, other)
