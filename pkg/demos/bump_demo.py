"""Build a bump problem, check its Hessian bounds and show the inadmissible-amplitude error."""
import numpy as np

from otmaps import make_bump_problem
from otmaps.synthetic import density_integral

problem = make_bump_problem(2, 3, 0.01, seed=4)
eig = np.linalg.eigvalsh(problem.hessian(np.random.default_rng(0).random((5000, 2))))
print(f"Hessian eigenvalues in [{eig.min():.3f}, {eig.max():.3f}]")
print(f"target density integrates to {density_integral(problem):.5f}")
try:
    make_bump_problem(2, 3, 0.05, seed=4)
except ValueError as exc:
    print(f"rejected: {exc}")
