"""Watching the decay: Lindblad propagation reproduces the rate equations.

The density matrix is split into particle-number blocks.  The resonance
block decays as exp(-Gamma t); the absorber feeds the one-particle block,
whose channel populations follow dP_p/dt = Gamma_p exp(-Gamma t).  The
one-particle block stays coherent between channels, so its purity has a
closed form too.

    python3 demos/03_lindblad_branching.py
"""

import numpy as np

from partialwidths import BlockDensity, build_generator, propagate, purity_closed_form, rate_oracle
from partialwidths.pipeline import reference_studies

st = reference_studies(kinds=("CAP",))["CAP"]
rep = st.report
G = rep.gamma_total
basis = st.basis

gen = build_generator(basis, st.mid.modes, [0, 1, 2])
init = BlockDensity.from_pure(st.resonance.vector, 2, {0: 1, 1: basis.dim(1)})
traj = propagate(init, gen, 5 / G, dt=0.5, method="adaptive", samples=11, channels=st.channels)

oracle = rate_oracle(G, rep.partials, traj.times)
closed, asym = purity_closed_form(rep.kappa, rep.energies, G, traj.times)
print("   G t     P_res      P_0        P_1      rate eq. P_1   purity")
for j, t in enumerate(traj.times):
    print(f"{G * t:6.2f}  {traj.P_res[j]:.6f}  {traj.P[j, 0]:.6f}  {traj.P[j, 1]:.6f}  "
          f"{oracle.channels[j, 1]:.6f}     {traj.purity[j]:.6f}")

print(f"\nmax |P_res - exp(-Gamma t)| = {np.max(np.abs(traj.P_res - np.exp(-G * traj.times))):.1e}")
print(f"max |P_p - rate equations|  = {np.max(np.abs(traj.P - oracle.channels)):.1e}")
print(f"max |trace - 1|             = {np.max(np.abs(traj.total_trace - 1)):.1e}")
print(f"purity tends to {asym:.6f}; it would tend to 1 with a single open channel")
