"""
Optimal controls as the crowd grows
===================================

The same tracking problem is solved for growing nested clouds. Optimal costs
and controls settle as N increases, which is what the large-population limit
of the optimal control problem predicts. Reference size is kept small here
so the script runs in a few seconds.
"""

from leadfollow.gamma_limit import TrackingProblem, gamma_sweep, infinite_optimality_residual
from leadfollow.kernels import KernelSpec, Kernels
from leadfollow.meanfield import box_sampler
from leadfollow.optcontrol import CostSpec

problem = TrackingProblem(box_sampler(-1, 1), [[0.0]],
                          Kernels(KernelSpec("attraction_repulsion", (0.5,), 1), KernelSpec("constant", (1.0,), 1)),
                          CostSpec([1.5], control_weight=0.1, scaling="mean"), T=1.0, dt=0.02, n_pieces=10,
                          u_max=3.0, step=2.0, tol=1e-6)
report = gamma_sweep(problem, [25, 50, 100], n_ref=200)
print(f"reference J = {report.reference_cost:.5f}")
for row, gap in zip(report.rows, report.cost_gaps()):
    print(f"N={row.n:3d}  J={row.optimal_cost:.5f}  |J-J_ref|={gap:.2e}  control gap={row.control_gap:.2e}")

atoms = problem.cloud(200)
print("measure-form residual at the reference optimum:",
      infinite_optimality_residual(report.reference_control, atoms, problem.leaders, problem.kernels,
                                   problem.cost, problem.dt, step=2.0))
