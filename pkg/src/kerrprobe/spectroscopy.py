"""
Three-Lorentzian analysis of qubit spectra and sideband thermometry.

Profiles are peak-height parametrised,

    P(f) = baseline + sum_k A_k / (1 + ((f - f_k) / (w_k / 2))^2)

with w_k the full width at half maximum. All reported frequencies are in Hz.

Sideband labels follow the physics rather than the frequency axis: the
"blue" line is the heating sideband at f_c - Dt/2pi, weighted by sinh^2 r,
and the "red" line sits at f_c + Dt/2pi. Their frequency order therefore
flips with the sign of the rescaled detuning Dt. Without a detuning hint the
lower-frequency sideband is called red.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks, peak_widths

from .reduced_qubit import SpectrumScan
from .squeezing import effective_temperature

__all__ = [
    "FitDiverged",
    "DegeneratePeaks",
    "GridMismatch",
    "LorentzianTriplet",
    "HeatingReport",
    "lorentzian_sum",
    "fit_three_lorentzians",
    "ratio_to_squeezing",
    "heating_report",
    "compare_runs",
]

TWO_PI = 2 * math.pi
REL_ERR_FLAG = 0.30
MIN_SAMPLES = 30


class FitDiverged(RuntimeError):
    """Least squares failed or produced a non-finite covariance."""


class DegeneratePeaks(RuntimeError):
    """Two fitted centres closer than half a linewidth."""


class GridMismatch(ValueError):
    """Scans compared on different grids."""


def lorentzian_sum(f, baseline, *peaks):
    """Baseline plus peak-height Lorentzians; ``peaks`` is (A, f0, w) repeated."""
    f = np.asarray(f, float)
    out = np.full_like(f, baseline, dtype=float)
    for k in range(0, len(peaks), 3):
        A, f0, w = peaks[k:k + 3]
        out += A / (1.0 + ((f - f0) / (0.5 * w)) ** 2)
    return out


@dataclass
class LorentzianTriplet:
    """Fitted centre line and sidebands. Missing sidebands have A = 0 and NaN position."""

    f_c: float
    f_r: float
    f_b: float
    w_c: float
    w_r: float
    w_b: float
    A_c: float
    A_r: float
    A_b: float
    baseline: float
    covariance: np.ndarray
    sigma: dict
    fit_ok: bool
    model: str  # "triplet", "doublet-r", "doublet-b" or "single"
    flags: dict = field(default_factory=dict)
    rms_residual: float = float("nan")

    @property
    def ratio(self) -> float:
        """A_b / A_r (NaN without a red sideband)."""
        return self.A_b / self.A_r if self.A_r > 0 else float("nan")

    @property
    def ratio_sigma(self) -> float:
        if not self.A_r > 0:
            return float("nan")
        sr, sb = self.sigma.get("A_r", 0.0), self.sigma.get("A_b", 0.0)
        return abs(self.ratio) * math.hypot(sr / self.A_r, sb / self.A_b if self.A_b else 0.0)


def _width_at(f, P, j, f_step) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # zero-prominence spots fall back below
        w = peak_widths(P, [j], rel_height=0.5)[0][0] * f_step
    return float(w) if np.isfinite(w) and w > 2 * f_step else 2 * f_step


def _init_peaks(f, P, f_step, hint_offset: Optional[float], center: Optional[float] = None):
    """Initial (A, f0, w) for centre and two sidebands.

    The centre starts at the grid point nearest ``center`` (default: the
    global maximum). Both sidebands start from the half-maximum width of the
    stronger one.
    """
    i_c = int(np.argmax(P)) if center is None else int(np.argmin(np.abs(f - center)))
    base = float(np.percentile(P, 5))
    centre = [P[i_c] - base, f[i_c], _width_at(f, P, i_c, f_step)]
    if hint_offset is not None and hint_offset > 0:
        idx = [int(np.argmin(np.abs(f - (f[i_c] + off)))) for off in (-hint_offset, hint_offset)]
    else:
        cand, _ = find_peaks(P, prominence=0)
        cand = sorted((k for k in cand if k != i_c), key=lambda k: -P[k])[:2]
        if len(cand) < 2:
            span = (f[-1] - f[0]) / 4
            cand = [int(np.argmin(np.abs(f - (f[i_c] + o)))) for o in (-span, span)]
        idx = sorted(cand)
    strong = max(idx, key=lambda j: P[j])
    w_side = _width_at(f, P, strong, f_step)
    sides = [[max(P[j] - base, 1e-6), f[j], w_side] for j in idx]
    return base, centre, sides


def _do_fit(f, P, base, peaks):
    """Levenberg-Marquardt least squares in scaled units; returns popt, pcov in Hz units."""
    f0 = float(np.mean(f))
    s = float(f[-1] - f[0]) / 100 or 1.0
    amp = float(np.max(np.abs(P))) or 1.0
    x = (f - f0) / s
    y = P / amp
    p0 = [base / amp]
    for A, fc, w in peaks:
        p0 += [A / amp, (fc - f0) / s, w / s]
    try:
        res = least_squares(lambda p: lorentzian_sum(x, *p) - y, p0, method="lm",
                            x_scale="jac", max_nfev=20000 * len(p0))
    except ValueError as exc:
        raise FitDiverged(str(exc)) from exc
    if not res.success:
        raise FitDiverged(res.message)
    popt = res.x
    # covariance from the final Jacobian, scaled by the residual variance
    _, sv, vt = np.linalg.svd(res.jac, full_matrices=False)
    if sv[-1] <= np.finfo(float).eps * max(res.jac.shape) * sv[0]:
        raise FitDiverged("singular Jacobian: a parameter is unidentifiable")
    dof = max(1, y.size - popt.size)
    pcov = (vt.T / sv**2) @ vt * (2 * res.cost / dof)
    scale = np.ones_like(popt)
    shift = np.zeros_like(popt)
    scale[0] = amp
    for k in range(1, len(popt), 3):
        scale[k], scale[k + 1], scale[k + 2] = amp, s, s
        shift[k + 1] = f0
    popt = popt * scale + shift
    pcov = pcov * np.outer(scale, scale)
    popt[3::3] = np.abs(popt[3::3])  # width enters squared
    return popt, pcov


def _check_degenerate(peaks):
    for i in range(len(peaks)):
        for j in range(i + 1, len(peaks)):
            (_, fi, wi), (_, fj, wj) = peaks[i], peaks[j]
            if abs(fi - fj) < 0.5 * max(wi, wj):
                raise DegeneratePeaks(f"centres {fi:.6g} and {fj:.6g} Hz closer than half a width")


def _fit_model(f, P, base, centre, sides, allow_fallback):
    """One seeded fit with sideband reduction.

    A sideband is dropped when its amplitude is within 2 sigma of zero, or
    when the fit including it fails to converge (an absent line leaves its
    position unidentifiable). The weaker candidate goes first.
    """
    active = [True, True]  # lower, upper sideband
    while True:
        act_idx = [i for i, a in enumerate(active) if a]
        peaks = [centre] + [sides[i] for i in act_idx]
        try:
            popt, pcov = _do_fit(f, P, base, peaks)
        except FitDiverged:
            if not (allow_fallback and act_idx):
                raise
            active[min(act_idx, key=lambda i: sides[i][0])] = False
            continue
        fitted = [list(popt[k:k + 3]) for k in range(1, len(popt), 3)]
        sig = np.sqrt(np.clip(np.diag(pcov), 0, None))
        sig_peaks = [list(sig[k:k + 3]) for k in range(1, len(sig), 3)]
        weak = [i for n, i in enumerate(act_idx)
                if fitted[1 + n][0] < 2 * sig_peaks[1 + n][0]]
        if not (allow_fallback and weak):
            break
        drop = min(weak, key=lambda i: fitted[1 + act_idx.index(i)][0])
        active[drop] = False
        base = popt[0]
        centre = fitted[0]
        for n, i in enumerate(act_idx):
            sides[i] = fitted[1 + n]

    if len(fitted) == 3:
        # slots follow position: the middle line is the centre
        low, mid, high = np.argsort([pk[1] for pk in fitted])
        perm = [0] + [k for slot in (mid, low, high) for k in range(1 + 3 * slot, 4 + 3 * slot)]
        popt, pcov, sig = popt[perm], pcov[np.ix_(perm, perm)], sig[perm]
        fitted = [fitted[k] for k in (mid, low, high)]
        sig_peaks = [sig_peaks[k] for k in (mid, low, high)]
    _check_degenerate(fitted)
    return popt, pcov, fitted, sig, sig_peaks, active


def fit_three_lorentzians(
    freq_hz,
    P1,
    delta_r_tilde_hz: Optional[float] = None,
    allow_fallback: bool = True,
    center_hz: Optional[float] = None,
) -> LorentzianTriplet:
    """Fit centre line plus two sidebands to a spectrum sampled in Hz.

    ``delta_r_tilde_hz`` (the signed rescaled detuning over 2 pi) seeds the
    sideband positions and fixes which sideband is called blue; ``center_hz``
    seeds the centre line, which otherwise starts at the tallest point. A sideband
    whose amplitude is within 2 sigma of zero is dropped and the remaining
    model refitted.
    """
    f = np.asarray(freq_hz, float)
    P = np.asarray(P1, float)
    if f.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {f.size}")
    if not np.all(np.isfinite(P)):
        raise ValueError("spectrum contains non-finite values")
    order = np.argsort(f)
    f, P = f[order], P[order]
    f_step = float(np.min(np.diff(f)))
    hint = abs(delta_r_tilde_hz) if delta_r_tilde_hz is not None else None
    base, centre, sides = _init_peaks(f, P, f_step, hint, center_hz)

    # Partly resolved lines make the least-squares surface multimodal, so a
    # few seeds are tried; the richest non-degenerate model with the lowest
    # residual wins.
    seeds = [(centre, sides)]
    for scale in (1.0, 0.5):
        w = centre[2] * scale
        seeds.append(([centre[0], centre[1], w], [[a, f0, w] for a, f0, _ in sides]))
    best, first_error = None, None
    for c0, s0 in seeds:
        try:
            out = _fit_model(f, P, base, list(c0), [list(x) for x in s0], allow_fallback)
        except (FitDiverged, DegeneratePeaks) as exc:
            first_error = first_error or exc
            continue
        key = (-sum(out[-1]), float(np.sum((P - lorentzian_sum(f, *out[0])) ** 2)))
        if best is None or key < best[0]:
            best = (key, out)
    if best is None:
        raise first_error
    popt, pcov, fitted, sig, sig_peaks, active = best[1]
    fc = fitted[0][1]
    resid = P - lorentzian_sum(f, *popt)
    lower = upper = None
    sig_lower = sig_upper = None
    act_idx = [i for i, a in enumerate(active) if a]
    for n, i in enumerate(act_idx):
        if i == 0:
            lower, sig_lower = fitted[1 + n], sig_peaks[1 + n]
        else:
            upper, sig_upper = fitted[1 + n], sig_peaks[1 + n]
    # a lone sideband keeps the slot its fitted position points to
    if lower is not None and upper is None and lower[1] > fc:
        upper, sig_upper, lower, sig_lower = lower, sig_lower, None, None
    if upper is not None and lower is None and upper[1] < fc:
        lower, sig_lower, upper, sig_upper = upper, sig_upper, None, None

    blue_is_lower = delta_r_tilde_hz is not None and delta_r_tilde_hz > 0
    red, blue = (upper, lower) if blue_is_lower else (lower, upper)
    sred, sblue = (sig_upper, sig_lower) if blue_is_lower else (sig_lower, sig_upper)

    nan3 = [0.0, float("nan"), float("nan")]
    red = red or nan3
    blue = blue or nan3
    sred = sred or [0.0, float("nan"), float("nan")]
    sblue = sblue or [0.0, float("nan"), float("nan")]
    sc = sig_peaks[0]
    sigma = {
        "baseline": float(sig[0]),
        "A_c": sc[0], "f_c": sc[1], "w_c": sc[2],
        "A_r": sred[0], "f_r": sred[1], "w_r": sred[2],
        "A_b": sblue[0], "f_b": sblue[1], "w_b": sblue[2],
    }
    values = {
        "A_c": fitted[0][0], "A_r": red[0], "A_b": blue[0],
        "f_c": fitted[0][1], "f_r": red[1], "f_b": blue[1],
        "w_c": fitted[0][2], "w_r": red[2], "w_b": blue[2],
    }
    flags = {}
    for k, v in values.items():
        if v and np.isfinite(v) and k[0] in "Aw":
            flags[k] = bool(sigma[k] / abs(v) > REL_ERR_FLAG)
    if active == [True, True]:
        model = "triplet"
    elif not any(active):
        model = "single"
    else:
        model = "doublet-r" if red[0] > 0 else "doublet-b"
    widths = [w for w in (values["w_c"], values["w_r"], values["w_b"]) if np.isfinite(w)]
    amps = [values["A_c"], values["A_r"], values["A_b"]]
    ok = all(w > 0 for w in widths) and all(a >= 0 for a in amps)
    return LorentzianTriplet(
        f_c=values["f_c"], f_r=values["f_r"], f_b=values["f_b"],
        w_c=values["w_c"], w_r=values["w_r"], w_b=values["w_b"],
        A_c=values["A_c"], A_r=values["A_r"], A_b=values["A_b"],
        baseline=float(popt[0]),
        covariance=pcov,
        sigma=sigma,
        fit_ok=ok,
        model=model,
        flags=flags,
        rms_residual=float(np.sqrt(np.mean(resid**2))),
    )


def ratio_to_squeezing(ratio: float) -> tuple[float, float]:
    """Invert A_b/A_r = n/(n+1): returns (n_th, r)."""
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"ratio {ratio} outside [0, 1)")
    n = ratio / (1.0 - ratio)
    return n, math.asinh(math.sqrt(n))


@dataclass
class HeatingReport:
    """One row per pump amplitude; NaN marks a failed or flagged row."""

    pump_amps: np.ndarray
    ratio_Ab_Ar: np.ndarray
    r_inferred: np.ndarray
    n_th_inferred: np.ndarray
    T_eff: np.ndarray
    flagged: np.ndarray
    notes: list
    fits: list


def heating_report(scan: SpectrumScan, omega_p: Optional[float] = None) -> HeatingReport:
    """Fit every column of ``scan`` and convert the sideband ratio to a temperature.

    The effective temperature refers to the pump frequency.
    """
    wp = scan.omega_p if omega_p is None else omega_p
    f = scan.omega_s / TWO_PI
    n_rows = len(scan.pump_amps)
    ratio = np.full(n_rows, np.nan)
    r = np.full(n_rows, np.nan)
    nth = np.full(n_rows, np.nan)
    T = np.full(n_rows, np.nan)
    flagged = np.zeros(n_rows, bool)
    notes, fits = [], []
    for k in range(n_rows):
        fit = None
        try:
            if not scan.ok[k]:
                raise FitDiverged(f"column failed upstream: {scan.errors[k]}")
            hint = scan.delta_r_tilde[k] / TWO_PI if np.isfinite(scan.delta_r_tilde[k]) else None
            f10 = scan.omega10_ddd[k] / TWO_PI
            fit = fit_three_lorentzians(f, scan.P1[k], hint,
                                        center_hz=f10 if np.isfinite(f10) else None)
            q = fit.A_b / fit.A_r if fit.A_r > 0 else (0.0 if fit.A_b == 0 else float("nan"))
            ratio[k] = q
            if not 0.0 <= q < 1.0:
                flagged[k] = True
                notes.append(f"row {k}: ratio {q:.4g} outside [0, 1)")
            else:
                nth[k], r[k] = ratio_to_squeezing(q)
                T[k] = effective_temperature(nth[k], wp)
                notes.append("")
        except (FitDiverged, DegeneratePeaks, ValueError) as exc:
            flagged[k] = True
            notes.append(f"row {k}: {type(exc).__name__}: {exc}")
        fits.append(fit)
    return HeatingReport(np.asarray(scan.pump_amps), ratio, r, nth, T, flagged, notes, fits)


def compare_runs(analytic: SpectrumScan, oracle: SpectrumScan) -> dict:
    """Column-wise differences of fitted centre, width and sideband ratio.

    Columns whose fits fail on either side get NaN. The summary holds the
    maximum absolute difference of each quantity over the finite entries.
    """
    if analytic.P1.shape != oracle.P1.shape or not (
        np.allclose(analytic.omega_s, oracle.omega_s, rtol=0, atol=0)
        and np.allclose(analytic.pump_amps, oracle.pump_amps, rtol=0, atol=0)
    ):
        raise GridMismatch("analytic and oracle scans use different grids")
    f = analytic.omega_s / TWO_PI
    n = analytic.P1.shape[0]
    out = {k: np.full(n, np.nan) for k in ("d_center_hz", "d_width_hz", "d_ratio")}
    for k in range(n):
        hint = analytic.delta_r_tilde[k] / TWO_PI if np.isfinite(analytic.delta_r_tilde[k]) else None
        f10 = analytic.omega10_ddd[k] / TWO_PI
        centre = f10 if np.isfinite(f10) else None
        try:
            a = fit_three_lorentzians(f, analytic.P1[k], hint, center_hz=centre)
            o = fit_three_lorentzians(f, oracle.P1[k], hint, center_hz=centre)
        except (FitDiverged, DegeneratePeaks, ValueError):
            continue
        out["d_center_hz"][k] = o.f_c - a.f_c
        out["d_width_hz"][k] = o.w_c - a.w_c
        ra = a.ratio if a.A_r > 0 else 0.0
        ro = o.ratio if o.A_r > 0 else 0.0
        out["d_ratio"][k] = ro - ra
    summary = {}
    for key, v in out.items():
        fin = v[np.isfinite(v)]
        summary[f"max_abs_{key}"] = float(np.max(np.abs(fin))) if fin.size else float("nan")
    out["summary"] = summary
    return out
