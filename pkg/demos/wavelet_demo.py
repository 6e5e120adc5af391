"""Fit the wavelet semi-dual estimator in d=1 at every scale and compare with the truth."""
import numpy as np

from otmaps import draw_pair, make_problem, mse, select_scale

problem = make_problem("exp", 1)
X, Y = draw_pair(problem, 400, seed=7)
model, values = select_scale(X, Y, problem, N=65)
for J, value in values.items():
    print(f"J={J}  population semi-dual {value:.6f}")
print(f"selected J={model.meta['J']}, MSE {mse(model, problem, X):.2e}")
x = np.linspace(0.05, 0.95, 7)[:, None]
for xi, est, true in zip(x[:, 0], model(x)[:, 0], problem.eval_T0(x)[:, 0]):
    print(f"x={xi:.2f}  estimate {est:.4f}  truth {true:.4f}")
