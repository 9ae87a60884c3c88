"""
Effective two-level master equation after eliminating the squeezed resonator.

The resonator enters only through the complex Lorentzian::

    f(w) = (kappa/2 + i(Dt + w)) / (kappa^2/4 + (Dt + w)^2),   Dt = rescaled detuning

and the sideband spectrum S(w) = |G c|^2 [f(w) sinh^2 r + f*(-w)(1 + sinh^2 r)],
with G = g_0 alpha_{s,0} the spectroscopy Rabi amplitude and
c = beta cosh r + beta^* e^{2i Theta} sinh r. Real parts give the up/down
rates, imaginary parts shift the qubit detuning.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dispersive import DispersiveQuantities, field_dispersives, stark_table
from .params import DriveSpec, SystemParams
from .semiclassical import PointerSolution, distinguishability, solve_pointer_states
from .squeezing import SqueezingSolution, solve_squeezing

__all__ = [
    "SpectralFunction",
    "ReducedRates",
    "SidebandModel",
    "SpectrumScan",
    "spectral_f",
    "sideband_rates",
    "build_rates",
    "steady_state_P1",
    "sideband_ratio",
    "sideband_model",
    "spectrum_scan",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpectralFunction:
    kappa: float
    delta_r_tilde: float

    def f(self, omega):
        x = self.delta_r_tilde + np.asarray(omega, float)
        return (self.kappa / 2 + 1j * x) / (self.kappa**2 / 4 + x**2)

    def L(self, omega):
        return self.f(omega).real


def spectral_f(sf: SpectralFunction, omega):
    return sf.f(omega)


@dataclass(frozen=True)
class ReducedRates:
    """Qubit rates in rad/s; array-valued when evaluated over a detuning grid."""

    gamma_down_tilde: np.ndarray
    gamma_up_tilde: np.ndarray
    gamma_phi_tilde: float
    gamma2_tilde: np.ndarray
    delta_tilde: np.ndarray
    c_coef: complex
    delta: np.ndarray
    g0_alpha_s0: complex


def sideband_rates(
    sf: SpectralFunction,
    r: float,
    c: complex,
    g0_alpha_s0: complex,
    gamma_down3: float,
    gamma_phi3: float,
    delta,
) -> ReducedRates:
    """Rates for bare detuning(s) ``delta`` = omega_10''' - omega_s.

    ``c`` must already include any sideband correction factor.
    """
    delta = np.asarray(delta, float)
    s2 = math.sinh(r) ** 2
    amp = abs(g0_alpha_s0 * c) ** 2
    Lp, Lm = sf.L(delta), sf.L(-delta)
    down = gamma_down3 + amp * ((Lm + Lp) * s2 + Lm)
    up = amp * ((Lm + Lp) * s2 + Lp)
    # Im S_down(delta) - Im S_up(-delta), with S_down = S_up = S
    fp, fm = sf.f(delta), sf.f(-delta)
    im_s_down = amp * (fp.imag * s2 - fm.imag * (1 + s2))
    im_s_up_m = amp * (fm.imag * s2 - fp.imag * (1 + s2))
    return ReducedRates(
        gamma_down_tilde=down,
        gamma_up_tilde=up,
        gamma_phi_tilde=gamma_phi3,
        gamma2_tilde=gamma_phi3 + (up + down) / 2,
        delta_tilde=delta + im_s_down - im_s_up_m,
        c_coef=c,
        delta=delta,
        g0_alpha_s0=complex(g0_alpha_s0),
    )


def _c_coefficient(beta: complex, sqz: SqueezingSolution, correction: float) -> complex:
    e2 = complex(math.cos(2 * sqz.theta), math.sin(2 * sqz.theta))
    c = beta * math.cosh(sqz.r) + beta.conjugate() * e2 * math.sinh(sqz.r)
    return correction * c


def build_rates(
    params: SystemParams,
    disp: DispersiveQuantities,
    sqz: SqueezingSolution,
    sol: PointerSolution,
    omega_s: Optional[float] = None,
) -> ReducedRates:
    """Reduced qubit rates at the spectroscopy frequency of ``sol``'s drives."""
    k_s = sol.drive_index("spectroscopy")
    if omega_s is None:
        omega_s = sol.drives[k_s].frequency
    p = disp.pump_index
    beta = complex(distinguishability(sol, 0)[p])
    c = _c_coefficient(beta, sqz, params.sideband_correction)
    g0 = params.levels[0].g
    gas = g0 * complex(sol.alpha[0, k_s])
    gamma_down3 = params.gamma_down + disp.lambda_alpha[0] ** 2 * params.kappa
    gamma_phi3 = params.gamma_phi + params.kappa * abs(beta) ** 2 / 2
    delta = disp.omega10_ddd - omega_s
    sf = SpectralFunction(params.kappa, sqz.delta_r_tilde)
    return sideband_rates(sf, sqz.r, c, gas, gamma_down3, gamma_phi3, delta)


def steady_state_P1(rates: ReducedRates, g0_alpha_s0: Optional[complex] = None):
    """Steady-state excited-state probability of the driven reduced qubit."""
    G2 = abs(rates.g0_alpha_s0 if g0_alpha_s0 is None else g0_alpha_s0) ** 2
    up = np.asarray(rates.gamma_up_tilde, float)
    tot = up + np.asarray(rates.gamma_down_tilde, float)
    g2 = np.asarray(rates.gamma2_tilde, float)
    dt = np.asarray(rates.delta_tilde, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        p_eq = up / tot
        drive = G2 / tot
        # p_eq + 2 g2 D (1 - 2 p_eq) / (g2^2 + 4 g2 D + dt^2), divided through by g2
        # so that tiny rates cannot underflow into 0/0
        p = p_eq + 2 * drive * (1 - 2 * p_eq) / (g2 + 4 * drive + dt**2 / g2)
    dead = ~(tot > 0)
    if np.any(dead):
        log.warning("all qubit rates vanish at %d point(s); P1 set to 0", int(np.sum(dead)))
        p = np.where(dead, 0.0, p)
    return float(p) if np.ndim(p) == 0 else p


def sideband_ratio(r: float, sf: SpectralFunction) -> tuple[float, float]:
    """Blue/red sideband amplitude ratio: (Lorentzian-weighted, resolved limit).

    The blue sideband sits at delta = +Dt and the red one at delta = -Dt; the
    full form uses the resolved-sideband populations at those two points.
    """
    s2 = math.sinh(r) ** 2
    Lp = float(sf.L(sf.delta_r_tilde))
    Lm = float(sf.L(-sf.delta_r_tilde))
    full = ((Lp + Lm) * s2 + Lp) / ((Lp + Lm) * s2 + Lm)
    return full, s2 / (s2 + 1)


@dataclass(frozen=True)
class SidebandModel:
    """omega_s-independent ingredients of the analytical spectrum.

    Handy for synthetic studies: it pins the spectroscopy Rabi amplitude
    instead of re-solving the pointer states at every omega_s.
    """

    kappa: float
    delta_r_tilde: float
    r: float
    c: complex
    g0_alpha_s0: complex
    gamma_down3: float
    gamma_phi3: float
    omega10_ddd: float = 0.0

    def rates(self, omega_s) -> ReducedRates:
        sf = SpectralFunction(self.kappa, self.delta_r_tilde)
        delta = self.omega10_ddd - np.asarray(omega_s, float)
        return sideband_rates(sf, self.r, self.c, self.g0_alpha_s0, self.gamma_down3,
                              self.gamma_phi3, delta)

    def p1(self, omega_s):
        return steady_state_P1(self.rates(omega_s))


def sideband_model(params, disp, sqz, sol) -> SidebandModel:
    """Freeze the spectrum ingredients of one operating point."""
    rates = build_rates(params, disp, sqz, sol)
    return SidebandModel(
        kappa=params.kappa,
        delta_r_tilde=sqz.delta_r_tilde,
        r=sqz.r,
        c=rates.c_coef,
        g0_alpha_s0=rates.g0_alpha_s0,
        gamma_down3=params.gamma_down + float(disp.lambda_alpha[0]) ** 2 * params.kappa,
        gamma_phi3=rates.gamma_phi_tilde,
        omega10_ddd=disp.omega10_ddd,
    )


# ---------------------------------------------------------------------------
# scans


@dataclass
class SpectrumScan:
    """P(|1>) over (pump amplitude, omega_s); frequencies in rad/s."""

    pump_amps: np.ndarray
    omega_s: np.ndarray
    P1: np.ndarray  # (n_pump, n_ws)
    branch: list
    r: np.ndarray
    delta_r_tilde: np.ndarray
    omega10_ddd: np.ndarray
    ok: np.ndarray
    errors: list = field(default_factory=list)
    omega_p: float = float("nan")
    kappa: float = float("nan")


def _scan_column(args):
    params, pump, spec, omega_s, branch, state = args
    P = np.full(len(omega_s), np.nan)
    meta = dict(branch="", r=np.nan, delta_r_tilde=np.nan, omega10_ddd=np.nan, ok=True, error="")
    sol = None
    try:
        table = stark_table(params, (pump, spec))
        for j, ws in enumerate(omega_s):
            drives = (pump, spec.with_frequency(float(ws)))
            sol = solve_pointer_states(params, drives, table, branch=branch, initial=sol)
            disp = field_dispersives(params, sol, table)
            sqz = solve_squeezing(disp, state=state)
            P[j] = steady_state_P1(build_rates(params, disp, sqz, sol))
            if j == 0:
                meta.update(branch=sol.branch[0], r=sqz.r, delta_r_tilde=sqz.delta_r_tilde,
                            omega10_ddd=disp.omega10_ddd)
                if not sol.branch_consistent:
                    meta["error"] = "; ".join(sol.notes)
    except Exception as exc:  # flagged per column, never dropped silently
        meta["ok"] = False
        meta["error"] = f"{type(exc).__name__}: {exc}"
    return P, meta


def spectrum_scan(
    params: SystemParams,
    drives: Sequence[DriveSpec],
    omega_s_grid: Sequence[float],
    pump_amp_grid: Sequence[complex],
    branch: str = "auto",
    squeezing_state: int = 0,
    workers: int = 1,
) -> SpectrumScan:
    """Analytical P(|1>) map. Each pump amplitude is an independent column.

    The pump phase of the configured drive is kept; ``pump_amp_grid`` sets
    the magnitude (complex entries are used verbatim).
    """
    drives = list(drives)
    pump = next(d for d in drives if d.kind == "pump")
    spec = next(d for d in drives if d.kind == "spectroscopy")
    ws = np.asarray(omega_s_grid, float)
    phase = pump.amplitude / abs(pump.amplitude) if pump.amplitude != 0 else 1.0
    amps = [a if isinstance(a, complex) else a * phase for a in pump_amp_grid]
    jobs = [(params, pump.with_amplitude(a), spec, ws, branch, squeezing_state) for a in amps]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_scan_column, jobs))
    else:
        results = [_scan_column(j) for j in jobs]
    P = np.vstack([r[0] for r in results]) if results else np.zeros((0, ws.size))
    metas = [r[1] for r in results]
    return SpectrumScan(
        pump_amps=np.array([abs(a) for a in amps]),
        omega_s=ws,
        P1=P,
        branch=[m["branch"] for m in metas],
        r=np.array([m["r"] for m in metas]),
        delta_r_tilde=np.array([m["delta_r_tilde"] for m in metas]),
        omega10_ddd=np.array([m["omega10_ddd"] for m in metas]),
        ok=np.array([m["ok"] for m in metas]),
        errors=[m["error"] for m in metas],
        omega_p=pump.frequency,
        kappa=params.kappa,
    )
