"""
Semiclassical steady states of the driven Kerr resonator.

The bare Duffing response reduces to a polynomial in the photon number
``n = |alpha|^2``::

    n [(D + K n + K' n^2)^2 + kappa^2/4] = |eps|^2,    D = omega_r - omega_d

whose real non-negative roots are found with a (batched) companion-matrix
eigenvalue solve. A root is stable when the right-hand side grows with n.

With a qubit present, every qubit state i has its own pointer amplitudes
alpha_{i,d}, one per drive, satisfying::

    0 = (D_d - i kappa/2 + S_i^d + (K + K_i^d/6) n_i + K' n_i^2) alpha_{i,d} + eps_d

where ``n_i = sum_d |alpha_{i,d}|^2`` and (S_i^d, K_i^d) are the classical Stark
coefficients. Drives only talk to each other through ``n_i``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .params import OMEGA_C, DriveSpec, SystemParams, reduced_detuning

__all__ = [
    "NonConvergence",
    "BranchUnavailable",
    "BranchMismatch",
    "ResponseRoot",
    "StabilityCell",
    "StabilityDiagram",
    "PointerSolution",
    "duffing_coefficients",
    "classical_response",
    "stability_diagram",
    "cubic_discriminant",
    "solve_pointer_states",
    "pointer_residuals",
    "distinguishability",
    "measurement_dephasing",
    "response_curve",
    "critical_point",
]

log = logging.getLogger(__name__)

L_ONLY, H_ONLY, BISTABLE = 0, 1, 2
CLASS_NAMES = {L_ONLY: "L_only", H_ONLY: "H_only", BISTABLE: "bistable"}

NEWTON_DAMPING = 0.5
NEWTON_MAX_ITER = 200


class NonConvergence(RuntimeError):
    """Newton iteration failed; ``best`` holds the last iterate."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class BranchUnavailable(RuntimeError):
    pass


class BranchMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# bare Duffing response


def duffing_coefficients(detuning, K, Kp, kappa, eps2):
    """Polynomial coefficients (highest power first) of
    ``n[(D + K n + Kp n^2)^2 + kappa^2/4] - |eps|^2``.

    ``detuning`` and ``eps2`` may be arrays (broadcast together); the result
    then has shape ``broadcast_shape + (degree + 1,)``. Leading zero powers are
    dropped when K' (and K) vanish.
    """
    D, e2 = np.broadcast_arrays(np.asarray(detuning, float), np.asarray(eps2, float))
    one = np.ones_like(D)
    if Kp != 0.0:
        cols = [Kp**2 * one, 2 * K * Kp * one, K**2 + 2 * D * Kp, 2 * D * K,
                D**2 + kappa**2 / 4, -e2]
    elif K != 0.0:
        cols = [K**2 * one, 2 * D * K, D**2 + kappa**2 / 4, -e2]
    else:
        cols = [D**2 + kappa**2 / 4, -e2]
    return np.stack(cols, axis=-1)


def _poly_roots_batch(coeffs: np.ndarray) -> np.ndarray:
    """Roots of many polynomials at once via companion-matrix eigenvalues."""
    coeffs = np.asarray(coeffs, float)
    deg = coeffs.shape[-1] - 1
    batch = coeffs.shape[:-1]
    if deg == 1:
        return (-coeffs[..., 1] / coeffs[..., 0])[..., None].astype(complex)
    monic = coeffs[..., 1:] / coeffs[..., :1]
    comp = np.zeros(batch + (deg, deg))
    comp[..., 0, :] = -monic
    idx = np.arange(deg - 1)
    comp[..., idx + 1, idx] = 1.0
    return np.linalg.eigvals(comp)


def _slope(n, D, K, Kp, kappa):
    """d|eps|^2/dn along the response curve."""
    d_eff = D + K * n + Kp * n**2
    return d_eff**2 + kappa**2 / 4 + 2 * n * d_eff * (K + 2 * Kp * n)


def _inflection_n(D, K, Kp, kappa) -> float:
    """Smallest positive inflection point of |eps|^2(n); inf when there is none.

    Monostable roots below it are labelled L, above it H.
    """
    c = duffing_coefficients(D, K, Kp, kappa, 0.0)
    poly = np.poly1d(c)
    second = np.polyder(poly, 2)
    if second.order < 1 or not np.any(second.coeffs):
        return np.inf
    r = np.roots(second.coeffs)
    r = r[(np.abs(r.imag) < 1e-9 * np.maximum(1, np.abs(r))) & (r.real > 0)].real
    return float(r.min()) if r.size else np.inf


def _real_nonneg(roots: np.ndarray, rtol=1e-7) -> np.ndarray:
    keep = (np.abs(roots.imag) <= rtol * np.maximum(1.0, np.abs(roots.real))) & (roots.real >= 0)
    return np.sort(roots.real[keep])


@dataclass(frozen=True)
class ResponseRoot:
    n: float
    alpha: complex
    stable: bool
    branch: str


def classical_response(
    params: SystemParams,
    drive: DriveSpec,
    stark_S: float = 0.0,
    stark_K: float = 0.0,
) -> list[ResponseRoot]:
    """All steady states of a single pumped Kerr resonator.

    ``stark_S`` / ``stark_K`` optionally add the qubit-state Stark terms
    (shift of the detuning and of the Kerr coefficient by K/6); both default
    to zero, the bare Duffing case.
    """
    D = params.omega_r - drive.frequency + stark_S
    K = params.kerr_K + stark_K / 6.0
    Kp = params.kerr_Kp
    eps2 = abs(drive.amplitude) ** 2
    if eps2 == 0.0:
        return [ResponseRoot(0.0, 0j, True, "L")]
    roots = _real_nonneg(_poly_roots_batch(duffing_coefficients(D, K, Kp, params.kappa, eps2)))
    n_infl = _inflection_n(D, K, Kp, params.kappa)
    stable = [bool(_slope(n, D, K, Kp, params.kappa) > 0) for n in roots]
    n_stable = [n for n, s in zip(roots, stable) if s]
    out = []
    for n, s in zip(roots, stable):
        if not s:
            br = "U"
        elif len(n_stable) >= 2:
            br = "L" if n == n_stable[0] else "H"
        else:
            br = "L" if n < n_infl else "H"
        alpha = -drive.amplitude / (D - 0.5j * params.kappa + K * n + Kp * n**2)
        out.append(ResponseRoot(float(n), complex(alpha), s, br))
    return out


def cubic_discriminant(a, b, c, d):
    """Discriminant of a n^3 + b n^2 + c n + d (positive: three distinct real roots)."""
    return 18 * a * b * c * d - 4 * b**3 * d + b**2 * c**2 - 4 * a * c**3 - 27 * a**2 * d**2


@dataclass(frozen=True)
class StabilityCell:
    omega_reduced: float
    drive_amplitude: float
    classification: str


@dataclass
class StabilityDiagram:
    omega_reduced: np.ndarray
    drive_amplitude: np.ndarray
    codes: np.ndarray  # (n_omega, n_eps) of L_ONLY / H_ONLY / BISTABLE
    n_low: Optional[np.ndarray] = None  # smallest stable photon number per cell
    n_high: Optional[np.ndarray] = None  # largest stable photon number per cell

    def cells(self):
        for i, om in enumerate(self.omega_reduced):
            for j, eps in enumerate(self.drive_amplitude):
                yield StabilityCell(float(om), float(eps), CLASS_NAMES[int(self.codes[i, j])])

    def bistable_onset(self) -> float:
        """Smallest reduced detuning with at least one bistable cell (nan if none)."""
        rows = np.nonzero((self.codes == BISTABLE).any(axis=1))[0]
        return float(self.omega_reduced[rows[0]]) if rows.size else float("nan")


def critical_point(params: SystemParams) -> tuple[float, float]:
    """Cusp of the bistable wedge, (reduced detuning, |eps|), for the K-only cubic.

    The sign of the reduced detuning follows -sign(K); K' is ignored.
    """
    K, kappa = params.kerr_K, params.kappa
    if K == 0.0:
        raise ValueError("a linear resonator has no bistable wedge")
    om = -math.copysign(OMEGA_C, K)
    D = om * kappa / 2
    n_c = -2 * D / (3 * K)
    return om, math.sqrt(n_c * ((D + K * n_c) ** 2 + kappa**2 / 4))


def stability_diagram(
    params: SystemParams,
    omega_grid: Sequence[float],
    eps_grid: Sequence[float],
) -> StabilityDiagram:
    """Classify every (reduced detuning, drive amplitude) cell by its stable roots."""
    om = np.asarray(omega_grid, float)
    eps = np.asarray(eps_grid, float)
    if not (np.all(np.isfinite(om)) and np.all(np.isfinite(eps))):
        raise ValueError("grids must be finite")
    if np.any(np.diff(om) < 0) or np.any(np.diff(eps) < 0):
        raise ValueError("grids must be sorted")
    K, Kp, kappa = params.kerr_K, params.kerr_Kp, params.kappa
    D = (om * kappa / 2)[:, None] * np.ones((1, eps.size))
    E2 = np.ones((om.size, 1)) * (eps**2)[None, :]
    roots = _poly_roots_batch(duffing_coefficients(D, K, Kp, kappa, E2))
    real = (np.abs(roots.imag) <= 1e-7 * np.maximum(1.0, np.abs(roots.real))) & (roots.real >= 0)
    n = roots.real
    stable = real & (_slope(n, D[..., None], K, Kp, kappa) > 0)
    n_stable = stable.sum(axis=-1)
    codes = np.full(D.shape, L_ONLY, dtype=int)
    codes[n_stable >= 2] = BISTABLE
    mono = n_stable < 2
    if np.any(mono):
        n_mono = np.where(stable, n, np.inf).min(axis=-1)
        infl = np.array([_inflection_n(d, K, Kp, kappa) for d in om * kappa / 2])[:, None]
        codes[mono & (n_mono >= infl)] = H_ONLY
    n_low = np.where(stable, n, np.inf).min(axis=-1)
    n_high = np.where(stable, n, -np.inf).max(axis=-1)
    return StabilityDiagram(om, eps, codes, n_low, n_high)


# ---------------------------------------------------------------------------
# pointer states


@dataclass
class PointerSolution:
    """Pointer amplitudes ``alpha[i, d]`` for qubit state i and drive d."""

    alpha: np.ndarray
    drives: tuple
    branch: tuple
    residual: np.ndarray
    converged: bool
    branch_consistent: bool = True
    notes: list = field(default_factory=list)

    @property
    def n(self) -> np.ndarray:
        """Total photon number per qubit state."""
        return np.sum(np.abs(self.alpha) ** 2, axis=1)

    @property
    def m_levels(self) -> int:
        return self.alpha.shape[0]

    def drive_index(self, kind: str) -> int:
        for k, d in enumerate(self.drives):
            if d.kind == kind:
                return k
        raise KeyError(kind)


def _stark_arrays(disp, m: int, n_drives: int):
    if disp is None:
        return np.zeros((m, n_drives)), np.zeros((m, n_drives))
    S = np.asarray(disp.S_coef, float)
    Kc = np.asarray(disp.K_coef, float)
    if S.shape != (m, n_drives) or Kc.shape != (m, n_drives):
        raise ValueError(f"Stark tables must have shape {(m, n_drives)}")
    return S, Kc


class _StateProblem:
    """Pointer equation for one qubit state: F_d(alpha) = A_d(n) alpha_d + eps_d = 0."""

    def __init__(self, params: SystemParams, drives, S_row, K_row):
        self.kappa = params.kappa
        self.det = np.array([params.omega_r - d.frequency for d in drives]) + S_row
        self.K = params.kerr_K + K_row / 6.0
        self.Kp = params.kerr_Kp
        self.eps = np.array([d.amplitude for d in drives], complex)
        self.scale = max(float(np.max(np.abs(self.eps))) if self.eps.size else 0.0, self.kappa)

    def A(self, n):
        n = np.asarray(n, float)[..., None]
        return self.det - 0.5j * self.kappa + self.K * n + self.Kp * n**2

    def residual(self, alpha, s=1.0):
        n = np.sum(np.abs(alpha) ** 2)
        return self.A(n) * alpha + s * self.eps

    def jacobian(self, alpha):
        n = np.sum(np.abs(alpha) ** 2)
        A = self.A(n)
        dA = self.K + 2 * self.Kp * n
        nd = alpha.size
        J = np.zeros((2 * nd, 2 * nd))
        for d in range(nd):
            for e in range(nd):
                jx = dA[d] * alpha[d] * 2 * alpha[e].real
                jy = dA[d] * alpha[d] * 2 * alpha[e].imag
                if d == e:
                    jx += A[d]
                    jy += 1j * A[d]
                J[2 * d, 2 * e], J[2 * d + 1, 2 * e] = jx.real, jx.imag
                J[2 * d, 2 * e + 1], J[2 * d + 1, 2 * e + 1] = jy.real, jy.imag
        return J

    # scalar reduction: n - sum_d |eps_d|^2 / |A_d(n)|^2 = 0
    def g(self, n):
        return n - np.sum(np.abs(self.eps) ** 2 / np.abs(self.A(n)) ** 2, axis=-1)

    def alpha_of_n(self, n):
        return -self.eps / self.A(n)

    def fixed_points(self) -> list[tuple[float, bool]]:
        """All (n, stable) roots of the scalar reduction, ascending in n."""
        e2 = np.sum(np.abs(self.eps) ** 2)
        if e2 == 0.0:
            return [(0.0, True)]
        n_max = e2 / (self.kappa / 2) ** 2 * (1 + 1e-9)
        grid = np.unique(np.concatenate([
            np.linspace(0.0, n_max, 4001),
            n_max * np.geomspace(1e-12, 1.0, 400),
        ]))
        gv = self.g(grid)
        roots = []
        for k in np.nonzero(np.sign(gv[:-1]) != np.sign(gv[1:]))[0]:
            if gv[k] == 0.0:
                roots.append(grid[k])
                continue
            roots.append(brentq(self.g, grid[k], grid[k + 1], xtol=1e-15 * max(1, n_max),
                                rtol=1e-15, maxiter=200))
        out = []
        for n in roots:
            h = 1e-7 * max(n, 1e-9)
            slope = (self.g(n + h) - self.g(max(n - h, 0.0))) / (n + h - max(n - h, 0.0))
            out.append((float(n), bool(slope > 0)))
        return out

    def inflection(self) -> float:
        k = int(np.argmax(np.abs(self.eps)))
        return _inflection_n(self.det[k], self.K[k], self.Kp, self.kappa)

    def newton(self, alpha0, s=1.0, tol=None):
        """Damped Newton (backtracking by NEWTON_DAMPING) from alpha0."""
        tol = 1e-13 * self.scale if tol is None else tol
        a = np.array(alpha0, complex)
        F = self.residual(a, s)
        fn = np.linalg.norm(F)
        for _ in range(NEWTON_MAX_ITER):
            if fn < tol:
                return a, fn, True
            J = self.jacobian(a)
            rhs = np.empty(2 * a.size)
            rhs[0::2], rhs[1::2] = F.real, F.imag
            try:
                step = np.linalg.solve(J, -rhs)
            except np.linalg.LinAlgError:
                return a, fn, False
            da = step[0::2] + 1j * step[1::2]
            t = 1.0
            while True:
                trial = a + t * da
                Ft = self.residual(trial, s)
                ft = np.linalg.norm(Ft)
                if ft < (1 - 1e-4 * t) * fn or t < 1e-6:
                    break
                t *= NEWTON_DAMPING
            if ft >= fn and t < 1e-6:
                return a, fn, False
            a, F, fn = trial, Ft, ft
        return a, fn, fn < tol

    def continue_low_branch(self, h0=0.05, h_min=1e-7):
        """Track the low-amplitude branch while ramping eps from 0 to its full value.

        Returns (alpha, reached); ``reached`` is False when a fold stopped the
        ramp before the target amplitude.
        """
        a = np.zeros(self.eps.size, complex)
        slope = -self.eps / self.A(0.0)  # linear response at s = 0
        s, h = 0.0, h0
        while s < 1.0:
            h = min(h, 1.0 - s)
            guess = a + h * slope
            trial, fn, ok = self.newton(guess, s + h)
            # a corrector far from the predictor has slid onto another branch
            if ok and np.linalg.norm(trial - guess) <= 0.2 * np.linalg.norm(trial) + 1e-14:
                slope = (trial - a) / h
                a, s = trial, s + h
                h = min(2 * h, h0)
            else:
                h *= 0.5
                if h < h_min:
                    return a, False
        return a, True


def _label(n: float, stable_ns: list[float], n_infl: float) -> str:
    if len(stable_ns) >= 2:
        return "L" if n == stable_ns[0] else "H"
    return "L" if n < n_infl else "H"


def _solve_state(prob: _StateProblem, hint: str):
    """Returns (alpha, branch, residual_norm, converged)."""
    stable_ns = [n for n, s in prob.fixed_points() if s]
    if not stable_ns:
        raise NonConvergence("no stable fixed point found")
    n_infl = prob.inflection()
    low_label = _label(stable_ns[0], stable_ns, n_infl)
    high_label = _label(stable_ns[-1], stable_ns, n_infl)
    has_L, has_H = low_label == "L", high_label == "H"
    if hint == "L" and not has_L:
        raise BranchUnavailable("low-amplitude branch does not exist here")
    if hint == "H" and not has_H:
        raise BranchUnavailable("high-amplitude branch does not exist here")
    if hint == "auto":
        hint = "L" if has_L else "H"

    if hint == "L":
        a, reached = prob.continue_low_branch()
        n = float(np.sum(np.abs(a) ** 2))
        if reached and np.isclose(n, stable_ns[0], rtol=1e-6, atol=1e-12):
            a, fn, ok = prob.newton(a)
            return a, "L", fn, ok
        log.debug("continuation stopped short of the low root; seeding from it")
    n_sel = stable_ns[0] if hint == "L" else stable_ns[-1]
    a, fn, ok = prob.newton(prob.alpha_of_n(n_sel))
    return a, hint if len(stable_ns) > 1 else low_label, fn, ok


def solve_pointer_states(
    params: SystemParams,
    drives: Sequence[DriveSpec],
    disp=None,
    branch: str = "auto",
    initial: Optional[PointerSolution] = None,
) -> PointerSolution:
    """Pointer amplitudes for every qubit state and drive.

    Parameters
    ----------
    disp
        Anything exposing ``S_coef`` and ``K_coef`` arrays of shape (M, D);
        ``None`` switches the Stark terms off.
    branch
        ``"L"``, ``"H"`` or ``"auto"``. Auto follows an upward amplitude ramp,
        which stays on L until its fold and then jumps to H. The branch is
        decided on the qubit ground state and then requested for every other
        state; states where it does not exist fall back to the other branch
        and ``branch_consistent`` is set to False.
    initial
        Warm start: polish this solution with Newton instead of re-tracking
        the branch (used by parameter sweeps with small steps).
    """
    if branch not in ("L", "H", "auto"):
        raise ValueError(f"branch hint must be L, H or auto, got {branch!r}")
    drives = tuple(drives)
    m = params.m_levels
    S, Kc = _stark_arrays(disp, m, len(drives))
    alpha = np.zeros((m, len(drives)), complex)
    residual = np.zeros(m)
    branches = []
    converged = True
    consistent = True
    notes = []
    resolved = branch
    for i in range(m):
        prob = _StateProblem(params, drives, S[i], Kc[i])
        if initial is not None and initial.alpha.shape == alpha.shape:
            a, fn, ok = prob.newton(initial.alpha[i])
            br = initial.branch[i]
        else:
            hint = resolved
            try:
                a, br, fn, ok = _solve_state(prob, hint)
            except BranchUnavailable:
                if i == 0 or branch != "auto":
                    raise
                a, br, fn, ok = _solve_state(prob, "auto")
                consistent = False
                notes.append(f"state {i}: branch {hint} unavailable, using {br}")
            if i == 0 and branch == "auto":
                resolved = br
        alpha[i] = a
        residual[i] = fn / prob.scale
        branches.append(br)
        converged &= bool(ok)
    sol = PointerSolution(alpha, drives, tuple(branches), residual, converged, consistent, notes)
    if not converged:
        raise NonConvergence(f"pointer-state Newton failed (residuals {residual})", best=sol)
    return sol


def pointer_residuals(params: SystemParams, sol: PointerSolution, disp=None) -> np.ndarray:
    """|LHS| of the pointer equations, per state, relative to max(|eps|, kappa)."""
    S, Kc = _stark_arrays(disp, sol.m_levels, len(sol.drives))
    out = np.empty(sol.m_levels)
    for i in range(sol.m_levels):
        prob = _StateProblem(params, sol.drives, S[i], Kc[i])
        out[i] = np.max(np.abs(prob.residual(sol.alpha[i]))) / prob.scale
    return out


def distinguishability(sol: PointerSolution, i: int = 0) -> np.ndarray:
    """beta_i = alpha_{i+1} - alpha_i for every drive."""
    if sol.branch[i] != sol.branch[i + 1]:
        raise BranchMismatch(
            f"states {i} and {i + 1} sit on different branches "
            f"({sol.branch[i]} vs {sol.branch[i + 1]})"
        )
    return sol.alpha[i + 1] - sol.alpha[i]


def measurement_dephasing(sol: PointerSolution, kappa: float) -> float:
    """kappa |alpha_1 - alpha_0|^2 / 2, summed over drive components."""
    beta = sol.alpha[1] - sol.alpha[0]
    return float(kappa * np.sum(np.abs(beta) ** 2) / 2)


def response_curve(params: SystemParams, drive: DriveSpec, amplitudes) -> list[tuple]:
    """Rows (reduced detuning, |eps|, n, branch, stable) along an amplitude sweep."""
    om = reduced_detuning(params, drive)
    rows = []
    for amp in amplitudes:
        for root in classical_response(params, drive.with_amplitude(amp)):
            rows.append((om, float(abs(amp)), root.n, root.branch, root.stable))
    return rows
