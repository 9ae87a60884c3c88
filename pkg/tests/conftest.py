"""Shared builders for small, dimensionless test systems (kappa = 1 unless noted)."""

from pathlib import Path

import pytest

from kerrprobe.params import DriveSpec, Level, SystemParams

ROOT = Path(__file__).resolve().parents[1]
EXAMPLE_CONFIG = ROOT / "configs" / "example_approx.yaml"


def make_params(
    omega_r=100.0,
    kerr_K=-0.01,
    kerr_Kp=0.0,
    kappa=1.0,
    levels=((0.0, 0.9, 0.0), (90.0, 0.0, 1.0)),
    gamma_down=0.05,
    gamma_phi=0.02,
    sideband_correction=1.0,
) -> SystemParams:
    return SystemParams(
        omega_r=omega_r,
        kerr_K=kerr_K,
        kerr_Kp=kerr_Kp,
        kappa=kappa,
        levels=tuple(Level(*lv) for lv in levels),
        gamma_down=gamma_down,
        gamma_phi=gamma_phi,
        sideband_correction=sideband_correction,
    )


def three_level_params(**kw) -> SystemParams:
    kw.setdefault("levels", ((0.0, 0.8, 0.0), (90.0, 1.1, 1.0), (175.0, 0.0, 2.1)))
    return make_params(**kw)


def pump(amplitude=0.3, frequency=100.5) -> DriveSpec:
    return DriveSpec(amplitude, frequency, "pump")


def probe(amplitude=0.05, frequency=90.0) -> DriveSpec:
    return DriveSpec(amplitude, frequency, "spectroscopy")


@pytest.fixture
def example_config_path():
    return EXAMPLE_CONFIG


_ACCEPTANCE = []


@pytest.fixture
def acceptance_log():
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    def record(number, passed, detail, seconds):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  ({seconds:.1f} s)  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
