"""Scenario orchestration, output files and the acceptance suite."""

from .analysis import TEST_FUNCTIONS, fit_growth_rate, weak_form_residual
from .config import SCENARIOS, Scenario, load_scenario, parse_ini
from .scenarios import RunManifest, k_sweep, rerun_from_manifest, run_scenario

__all__ = [
    "SCENARIOS",
    "Scenario",
    "RunManifest",
    "TEST_FUNCTIONS",
    "fit_growth_rate",
    "k_sweep",
    "load_scenario",
    "parse_ini",
    "rerun_from_manifest",
    "run_scenario",
    "weak_form_residual",
]
