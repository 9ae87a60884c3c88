"""
Command-line interface: ``kerrprobe <subcommand> <config> [options]``.

Ranges are written ``START:STOP:NUM`` with unit-suffixed endpoints, e.g.
``5680MHz:5770MHz:601``. Every CSV is written in rad/s and gets a JSON
sidecar with the parameter hash, tolerances and library versions.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .dispersive import field_dispersives, stark_table
from .oracle import (
    TruncatedSpace,
    fock_distribution,
    inferred_squeezing,
    is_bimodal,
    min_quadrature_variance,
    moments,
    oracle_spectrum,
    steady_state_auto,
)
from .params import ConfigError, load_scenario_file, param_hash, parse_frequency, reduced_detuning
from .reduced_qubit import spectrum_scan
from .semiclassical import (
    CLASS_NAMES,
    critical_point,
    response_curve,
    solve_pointer_states,
    stability_diagram,
)
from .spectroscopy import TWO_PI, heating_report
from .squeezing import solve_squeezing

__all__ = ["main", "build_parser", "parse_range"]

log = logging.getLogger("kerrprobe")

TOLERANCES = {
    "pointer_newton_rel": 1e-12,
    "squeezing_r_abs": 1e-12,
    "steady_state_residual": 1e-9,
    "density_trace": 1e-8,
    "density_hermiticity": 1e-10,
    "density_positivity": -1e-7,
}


def parse_range(text: str, unit_free: bool = False) -> np.ndarray:
    """``START:STOP:NUM`` to a linspace; endpoints carry units unless ``unit_free``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"range {text!r} must look like START:STOP:NUM")
    conv = float if unit_free else (lambda v: parse_frequency(v.strip(), "range"))
    try:
        num = int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"range {text!r}: NUM must be an integer") from exc
    if num < 1:
        raise ConfigError(f"range {text!r}: NUM must be >= 1")
    return np.linspace(conv(parts[0]), conv(parts[1]), num)


def _load(args):
    sc = load_scenario_file(args.config)
    return sc, param_hash(sc)


def _done(path):
    print(f"wrote {path} (+ {io.sidecar_path(path).name})")


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    sc, h = _load(args)
    p = sc.params
    print(f"config      {args.config}")
    print(f"param hash  {h}")
    print(f"levels      {p.m_levels}")
    for d in sc.drives:
        print(f"drive       {d.kind:<13s} |eps| = {abs(d.amplitude) / TWO_PI:.6g} Hz"
              f"  f = {d.frequency / TWO_PI:.9g} Hz")
    if p.kerr_K != 0.0:
        om_c, eps_c = critical_point(p)
        print(f"pump Omega  {reduced_detuning(p, sc.pump):.6g} (cusp at {om_c:.6g},"
              f" |eps| = {eps_c / TWO_PI:.6g} Hz)")
    return 0


def cmd_response(args) -> int:
    sc, h = _load(args)
    amps = parse_range(args.amp_range)
    rows = [
        (om, eps, n, br, "stable" if st else "unstable")
        for om, eps, n, br, st in response_curve(sc.params, sc.pump, amps)
    ]
    out = io.write_csv(args.out, ("omega_reduced", "eps_d", "n", "branch", "class"), rows, h,
                       TOLERANCES)
    _done(out)
    return 0


def cmd_stability(args) -> int:
    sc, h = _load(args)
    p = sc.params
    om = parse_range(args.omega_range, unit_free=True)
    if args.eps_range:
        eps = parse_range(args.eps_range)
    else:
        _, eps_c = critical_point(p)
        eps = np.linspace(0.0, 3.0 * eps_c, 400)
    diag = stability_diagram(p, om, eps)

    def rows():
        for i, o in enumerate(diag.omega_reduced):
            for j, e in enumerate(diag.drive_amplitude):
                cls = CLASS_NAMES[int(diag.codes[i, j])]
                if cls == "bistable":
                    yield (o, e, diag.n_low[i, j], "L", cls)
                    yield (o, e, diag.n_high[i, j], "H", cls)
                else:
                    yield (o, e, diag.n_low[i, j], cls[0], cls)

    out = io.write_csv(args.out, ("omega_reduced", "eps_d", "n", "branch", "class"), rows(), h,
                       TOLERANCES, {"bistable_onset": diag.bistable_onset()})
    _done(out)
    print(f"bistable onset at reduced detuning {diag.bistable_onset():.6g}")
    return 0


def _operating_point(sc, branch):
    table = stark_table(sc.params, sc.drives)
    sol = solve_pointer_states(sc.params, sc.drives, table, branch=branch)
    return table, sol, field_dispersives(sc.params, sol, table)


def cmd_dispersive(args) -> int:
    sc, h = _load(args)
    table, sol, disp = _operating_point(sc, args.branch)
    kinds = [d.kind for d in sc.drives]
    rows = []
    for name in ("Lambda", "X", "S_coef", "K_coef"):
        arr = getattr(table, name)
        for i in range(arr.shape[0]):
            for k, kind in enumerate(kinds):
                rows.append((name, i, kind, arr[i, k], 0.0))
    for name in ("lambda_alpha", "chi_alpha", "lamb", "pull", "omega_dd", "omega_ddd",
                 "omega_r_shifted", "upsilon"):
        for i, v in enumerate(np.atleast_1d(getattr(disp, name))):
            v = complex(v)
            rows.append((name, i, "field", v.real, v.imag))
    for i in range(sol.alpha.shape[0]):
        for k, kind in enumerate(kinds):
            a = complex(sol.alpha[i, k])
            rows.append(("alpha", i, kind, a.real, a.imag))
    out = io.write_csv(args.out, ("quantity", "index", "drive", "re", "im"), rows, h, TOLERANCES,
                       {"branch": list(sol.branch), "omega10_stark": disp.omega10_ddd})
    _done(out)
    return 0


def cmd_squeezing(args) -> int:
    sc, h = _load(args)
    p = sc.params
    grid = parse_range(args.omega_p_sweep) if args.omega_p_sweep else np.array([sc.pump.frequency])
    rows = []
    sol = None
    for wp in grid:
        drives = [d.with_frequency(float(wp)) if d.kind == "pump" else d for d in sc.drives]
        try:
            table = stark_table(p, drives)
            sol = solve_pointer_states(p, drives, table, branch=args.branch, initial=sol)
            sq = solve_squeezing(field_dispersives(p, sol, table))
            rows.append((wp, sq.r, sq.theta, sq.n_th, sq.delta_r_tilde, sq.r_max, sol.branch[0], ""))
        except Exception as exc:  # flagged row, sweep continues
            sol = None
            nan = float("nan")
            rows.append((wp, nan, nan, nan, nan, nan, "", f"{type(exc).__name__}: {exc}"))
    out = io.write_csv(args.out, ("omega_p", "r", "theta", "n_th", "delta_r_tilde", "r_max",
                                  "branch", "error"), rows, h, TOLERANCES)
    _done(out)
    return 0


def _default_ws_grid(sc, amps, n_points, branch):
    """omega_s grid spanning every column's centre line and both sidebands."""
    lo, hi = math.inf, -math.inf
    phase = sc.pump.amplitude / abs(sc.pump.amplitude) if sc.pump.amplitude else 1.0
    for a in amps:
        drives = [d.with_amplitude(a * phase) if d.kind == "pump" else d for d in sc.drives]
        try:
            table = stark_table(sc.params, drives)
            sol = solve_pointer_states(sc.params, drives, table, branch=branch)
            disp = field_dispersives(sc.params, sol, table)
            half = abs(solve_squeezing(disp).delta_r_tilde) + 6 * sc.params.kappa
        except Exception:  # such columns are flagged later by the scan itself
            continue
        lo, hi = min(lo, disp.omega10_ddd - half), max(hi, disp.omega10_ddd + half)
    if not math.isfinite(lo):
        raise ConfigError("no pump amplitude gives a valid operating point; pass --ws-range")
    return np.linspace(lo, hi, n_points)


def _scan(args, sc):
    amps = parse_range(args.pump_range) if args.pump_range else np.linspace(
        0.0, abs(sc.pump.amplitude), 7)
    ws = parse_range(args.ws_range) if args.ws_range else _default_ws_grid(
        sc, amps, args.points, args.branch)
    return spectrum_scan(sc.params, sc.drives, ws, amps, branch=args.branch, workers=args.workers)


def cmd_spectrum(args) -> int:
    sc, h = _load(args)
    scan = _scan(args, sc)
    out = io.write_spectrum_csv(args.out, scan, h, TOLERANCES)
    _done(out)
    bad = int(np.sum(~scan.ok))
    if bad:
        print(f"{bad} pump column(s) flagged; see the error column")
    return 0


def cmd_oracle(args) -> int:
    sc, h = _load(args)
    p = sc.params
    m = min(args.levels, p.m_levels)
    extra = {"n_fock": args.n_fock, "m_levels": m, "frame": "rotating"}
    if args.observable == "moments":
        pumps = [d for d in sc.drives if d.kind == "pump"]
        dm, gen = steady_state_auto(p, pumps, n_fock=args.n_fock, m_levels=m)
        mo = moments(dm)
        row = [mo.a.real, mo.a.imag, mo.n, mo.a2.real, mo.a2.imag, min_quadrature_variance(mo),
               inferred_squeezing(mo), is_bimodal(fock_distribution(dm))] + [
                   float(x) for x in mo.populations]
        head = ["a_re", "a_im", "n", "a2_re", "a2_im", "v_min", "r_inferred", "bimodal"] + [
            f"P{i}" for i in range(len(mo.populations))]
        extra.update(n_fock=gen.space.n_fock, metadata=gen.metadata)
        out = io.write_csv(args.out, head, [row], h, TOLERANCES, extra)
        final = dm
    else:
        ws = parse_range(args.ws_range) if args.ws_range else np.array(
            [sc.spectroscopy.frequency])
        space = TruncatedSpace(args.n_fock, m)
        t_settle = args.t_settle if args.t_settle else 20.0 / p.kappa
        P, ok = oracle_spectrum(p, sc.drives, ws, space, t_settle)
        out = io.write_csv(args.out, ("omega_s", "P1", "converged"), zip(ws, P, ok), h,
                           TOLERANCES, extra)
        final = None
    _done(out)
    if args.fock_dump:
        if final is None:
            pumps = [d for d in sc.drives if d.kind == "pump"]
            final, _ = steady_state_auto(p, pumps, n_fock=args.n_fock, m_levels=m)
        dump = io.write_csv(args.fock_dump, ("n", "probability"),
                            enumerate(fock_distribution(final)), h, TOLERANCES, extra)
        _done(dump)
    return 0


def _write_analysis(scan, fits_path, heat_path, h):
    rep = heating_report(scan)
    fit_head = ("pump_amp", "model", "fit_ok", "f_c", "f_r", "f_b", "w_c", "w_r", "w_b",
                "A_c", "A_r", "A_b", "baseline", "sigma_f_c", "sigma_f_r", "sigma_f_b",
                "sigma_A_r", "sigma_A_b", "rms_residual", "flags")
    nan = float("nan")
    fit_rows = []
    for amp, fit in zip(rep.pump_amps, rep.fits):
        if fit is None:
            fit_rows.append((amp, "none", False) + (nan,) * 16 + ("",))
            continue
        s = fit.sigma
        fit_rows.append((amp, fit.model, fit.fit_ok, fit.f_c, fit.f_r, fit.f_b, fit.w_c, fit.w_r,
                         fit.w_b, fit.A_c, fit.A_r, fit.A_b, fit.baseline, s.get("f_c", nan),
                         s.get("f_r", nan), s.get("f_b", nan), s.get("A_r", nan),
                         s.get("A_b", nan), fit.rms_residual, json.dumps(fit.flags, default=str)))
    extra = {"units_fit": "Hz (f, w) and probability (A, baseline)"}
    f_out = io.write_csv(fits_path, fit_head, fit_rows, h, TOLERANCES, extra)
    heat_rows = zip(rep.pump_amps, rep.ratio_Ab_Ar, rep.r_inferred, rep.n_th_inferred, rep.T_eff,
                    rep.flagged, rep.notes)
    h_out = io.write_csv(heat_path, ("pump_amp", "ratio_Ab_Ar", "r", "n_th", "T_eff_K", "flagged",
                                     "note"), heat_rows, h, TOLERANCES, {"omega_p": scan.omega_p})
    return f_out, h_out, rep


def _hash_of(csv_path):
    side = io.sidecar_path(csv_path)
    if side.exists():
        return json.loads(side.read_text()).get("param_hash")
    return None


def cmd_analyze(args) -> int:
    outs = [s.strip() for s in args.out.split(",")]
    if len(outs) != 2:
        raise ConfigError("--out takes two comma-separated paths: fits.csv,heating.csv")
    scan = io.read_spectrum_csv(args.spectrum)
    f_out, h_out, _ = _write_analysis(scan, outs[0], outs[1], _hash_of(args.spectrum))
    _done(f_out)
    _done(h_out)
    return 0


def cmd_pipeline(args) -> int:
    sc, h = _load(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scan = _scan(args, sc)
    spec_path = io.write_spectrum_csv(out_dir / "spectrum.csv", scan, h, TOLERANCES)
    f_out, h_out, rep = _write_analysis(scan, out_dir / "fits.csv", out_dir / "heating.csv", h)
    for path in (spec_path, f_out, h_out):
        _done(path)
    print(f"{'pump |eps| (Hz)':>16s} {'branch':>6s} {'f10 Stark (Hz)':>16s} {'Ab/Ar':>8s}"
          f" {'r':>8s} {'T_eff (K)':>10s}")
    for k, amp in enumerate(scan.pump_amps):
        print(f"{amp / TWO_PI:16.6g} {scan.branch[k] or '-':>6s} "
              f"{scan.omega10_ddd[k] / TWO_PI:16.9g} {rep.ratio_Ab_Ar[k]:8.4f} "
              f"{rep.r_inferred[k]:8.4f} {rep.T_eff[k]:10.4g}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kerrprobe",
        description="Qubit spectroscopy of squeezing and heating in a driven Kerr resonator",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, out_default=None):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("config", help="scenario YAML file")
        if out_default is not None:
            sp.add_argument("--out", default=out_default, help="output CSV path")
        sp.set_defaults(func=func)
        return sp

    add("validate", cmd_validate, "parse a config and print the resolved parameters")

    sp = add("response", cmd_response, "pump response curve n(|eps|)", "response.csv")
    sp.add_argument("--amp-range", required=True, help="pump amplitudes START:STOP:NUM")

    sp = add("stability", cmd_stability, "bistability diagram", "stability.csv")
    sp.add_argument("--omega-range", default="0:4:400",
                    help="reduced detuning START:STOP:NUM (unitless)")
    sp.add_argument("--eps-range", help="pump amplitudes START:STOP:NUM (default 0..3x cusp)")

    sp = add("dispersive", cmd_dispersive, "Stark and dispersive coefficient tables",
             "dispersive.csv")
    sp.add_argument("--branch", default="auto", choices=("auto", "L", "H"))

    sp = add("squeezing", cmd_squeezing, "squeezing parameters", "squeezing.csv")
    sp.add_argument("--omega-p-sweep", help="pump frequencies START:STOP:NUM")
    sp.add_argument("--branch", default="auto", choices=("auto", "L", "H"))

    def scan_opts(sp):
        sp.add_argument("--ws-range", help="spectroscopy frequencies START:STOP:NUM")
        sp.add_argument("--pump-range", help="pump amplitudes START:STOP:NUM (default 0..config, 7)")
        sp.add_argument("--points", type=int, default=801,
                        help="omega_s points when --ws-range is omitted")
        sp.add_argument("--branch", default="auto", choices=("auto", "L", "H"))
        sp.add_argument("--workers", type=int, default=1, help="parallel pump columns")

    sp = add("spectrum", cmd_spectrum, "analytical P(|1>) map", "spectrum.csv")
    scan_opts(sp)

    sp = add("oracle", cmd_oracle, "truncated Lindblad reference", "oracle.csv")
    sp.add_argument("--observable", choices=("P1", "moments"), default="P1")
    sp.add_argument("--ws-range", help="spectroscopy frequencies for P1 (default: config)")
    sp.add_argument("--n-fock", type=int, default=30)
    sp.add_argument("--levels", type=int, default=2, help="qubit levels kept")
    sp.add_argument("--t-settle", type=float, help="settling time in s (default 20/kappa)")
    sp.add_argument("--fock-dump", help="also write the diagonal Fock distribution here")

    sp = sub.add_parser("analyze", help="fit a spectrum CSV")
    sp.add_argument("spectrum", help="CSV written by the spectrum subcommand")
    sp.add_argument("--out", default="fits.csv,heating.csv", help="FITS.csv,HEATING.csv")
    sp.set_defaults(func=cmd_analyze)

    sp = add("pipeline", cmd_pipeline, "scan, fit and report in one go")
    sp.add_argument("--out-dir", default="kerrprobe_out")
    scan_opts(sp)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
