"""
Steering followers with an optimal leader
=========================================

Ten followers should reach x* = 1.5. The leader's velocity is optimized by
projected gradient descent, with gradients from the exact discrete adjoint.
We first confirm the adjoint gradient against finite differences.
"""

import numpy as np

from leadfollow.kernels import KernelSpec, Kernels
from leadfollow.microdynamics import ControlSignal, SwarmState
from leadfollow.optcontrol import CostSpec, cost_and_gradient, evaluate_cost, optimize

kernels = Kernels(KernelSpec("attraction_repulsion", (0.5,), 1), KernelSpec("constant", (1.0,), 1))
start = SwarmState([[0.0]], np.linspace(-1, 1, 10)[:, None])
cost = CostSpec([1.5], control_weight=0.1)

trial = ControlSignal.constant([[0.3]], T=1.0, n_pieces=5)
_, grad, _, _ = cost_and_gradient(start, trial, cost, kernels, dt=0.02)
h = 1e-6
bumped = trial.values.copy()
bumped[2, 0, 0] += h
fd = (evaluate_cost(start, trial.with_values(bumped), cost, kernels, 0.02)
      - evaluate_cost(start, trial, cost, kernels, 0.02)) / h
print(f"adjoint {grad[2, 0, 0]:.6f} vs forward difference {fd:.6f}")

res = optimize(start, cost, kernels, T=1.0, dt=0.02, n_pieces=10, u_max=3.0, step=1.0, tol=1e-6)
print(res.summary())
print("optimal leader velocity per piece:", res.control.values[:, 0, 0].round(3))
print("cost with u = 0:", evaluate_cost(start, ControlSignal.zeros(1, 1, 1.0), cost, kernels, 0.02))
