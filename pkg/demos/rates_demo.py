"""Small rate experiment: matching vs kernel smoothing on the identity map in d=2.

Writes ``rates_demo.csv`` and ``rates_demo.svg`` next to this script and
prints the fitted log-log slopes.
"""
from pathlib import Path

from otmaps import ExperimentConfig, emit, fit_rate, run_experiment

here = Path(__file__).parent
config = ExperimentConfig("id", 2, [50, 100, 200, 400], 4, ("matching", "kernel"), timing=False)
records = run_experiment(config)
emit(records, "csv", here / "rates_demo.csv")
emit(records, "svg", here / "rates_demo.svg")
for name in ("matching", "kernel"):
    fit = fit_rate(records, name)
    print(f"{name:9s} slope {fit.slope:+.3f}  r^2 {fit.r_squared:.3f}")
