"""Check the stability sandwich for a cosine perturbation of the quadratic potential."""
import numpy as np

from otmaps import Box, Grid, ScalarField, stability_certificate
from otmaps.grid import unit_box

d, M = 2, 1.0
k = np.array([1, 2])
grid = Grid(Box.cube(-0.5, 1.5, d), 65)
quad = Grid(unit_box(d), 33)
density = ScalarField(quad, np.ones(quad.size))
f0 = ScalarField.from_function(grid, lambda x: 0.5 * np.sum(x**2, 1))
for c in (0.05, 0.2, 0.4):
    amp = c / (np.pi**2 * float(k @ k))
    f = ScalarField.from_function(grid, lambda x: 0.5 * np.sum(x**2, 1) + amp * np.prod(np.cos(np.pi * k * x), 1))
    r = stability_certificate(f, f0, density, M)
    print(
        f"c={c:.2f}  {r.l2_dist_sq / (8 * M):.3e} <= gap {r.gap:.3e} <= {2 * M * r.l2_dist_sq:.3e}  ok={r.ok}"
    )
