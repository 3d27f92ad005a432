"""
Particle clouds approaching their mean-field limit
==================================================

Initial clouds are nested: the N-particle cloud is the first N points of a
1600-point reference cloud. As N grows, the worst-in-time W1 distance to the
reference run shrinks. A perturbation experiment then measures how much a
small initial change can grow.
"""

import numpy as np

from leadfollow.kernels import KernelSpec, Kernels
from leadfollow.meanfield import MeanFieldProblem, box_sampler, convergence_study, stability_experiment
from leadfollow.microdynamics import ControlSignal

kernels = Kernels(KernelSpec("attraction_repulsion", (1.0,), 1), KernelSpec("stokes_like", (1.0,), 1))
sampler = box_sampler(-1.0, 1.0)
u = ControlSignal.constant([[0.5]], T=1.0)

rows = convergence_study(sampler, [[0.0]], u, kernels, dt=0.01, n_list=[50, 100, 200, 400], reference_n=1600)
for r in rows:
    print(f"N={r.n:4d}  max_t W1 = {r.max_w1:.5f}")
print("last/first:", rows[-1].max_w1 / rows[0].max_w1)

problem = MeanFieldProblem(sampler(0, 400), np.array([[0.0]]), u, kernels, dt=0.01)
for delta in (1e-2, 1e-3):
    rep = stability_experiment(problem, delta, delta)
    print(f"delta={delta:g}: growth ratio {rep.ratio:.4f}, certified bound {rep.bound:.3g}")
