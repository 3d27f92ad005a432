"""
Binary interactions in the quasi-invariant regime
=================================================

Agents meet in random pairs. Each agent is controlled with probability p.
With interaction strength eps and frequency 1/eps, the Monte Carlo ensemble
approaches the solution of a transport equation driven by the averaged
interaction kernel.
"""

from leadfollow.kernels import KernelSpec, Kernels
from leadfollow.kinetic import KineticControls, limit_kernel, quasi_invariant_sweep
from leadfollow.meanfield import box_sampler

kernels = Kernels(KernelSpec("constant", (1.0,), 1), KernelSpec("attraction_repulsion", (1.0,), 1))
controls = KineticControls.constant([0.5], [1.0], T=1.0)

print("averaged kernel at p = 0.5, x - y = 1:", limit_kernel([1.0], [0.0], [0.5], [1.0], 0.5, kernels))

table = quasi_invariant_sweep([0.2, 0.1, 0.05], M=1000, p=0.3, controls=controls, kernels=kernels, T=1.0,
                              sampler=box_sampler(0, 1), seeds=(0, 1, 2))
for eps, w1 in table.medians().items():
    print(f"eps={eps:<5g} median max_t W1 = {w1:.4f}")
