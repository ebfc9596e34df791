"""
Sign structure of small rotor chains
====================================

The dipolar chain Hamiltonian is not stoquastic in the free-rotor basis, so
its ground state may carry negative amplitudes. This script diagonalises a
few short chains and shows how little weight those negative amplitudes hold.
"""

import numpy as np

from rotortomo import HilbertSpace, amplitude_ratio, build_hamiltonian, ground_state, sign_metrics
from rotortomo.signs import stoquasticity_check

# a two-rotor chain with ell_max = 1 already has positive off-diagonal elements
H = build_hamiltonian(HilbertSpace(2, 1), 1.0)
print("stoquastic:", stoquasticity_check(H))

# the ground state is dominated by the all-zero configuration
print(f"{'N':>2} {'R':>5} {'E0':>12} {'gap':>9} {'ratio':>9} {'tau-':>10} {'eps/gap':>10}")
for n in (2, 3):
    for R in (1.0, 1.5, 2.0):
        H = build_hamiltonian(HilbertSpace(n, 3), R)
        sol = ground_state(H)
        tau, eps = sign_metrics(sol, H)
        print(f"{n:>2} {R:>5} {sol.energy_0:>12.6f} {sol.gap:>9.5f} {amplitude_ratio(sol):>9.1f} "
              f"{tau:>10.2e} {eps / sol.gap:>10.2e}")

# tau- against the truncation: it settles once ell_max reaches 3 or 4
for ell_max in range(1, 5):
    H = build_hamiltonian(HilbertSpace(3, ell_max), 1.0)
    tau, _ = sign_metrics(ground_state(H), H)
    print(f"N=3 R=1.0 ell_max={ell_max}: tau- = {tau:.4e}")

# where do the negative amplitudes sit? (at N=2 they are rounding noise)
H = build_hamiltonian(HilbertSpace(3, 2), 1.0)
psi = ground_state(H).amplitudes
neg = np.flatnonzero(psi * psi[0] < 0)
print("largest negative amplitudes (config, psi):")
for i in neg[np.argsort(psi[neg] ** 2)[::-1][:5]]:
    print("  ", H.space.config(i), f"{psi[i]:+.2e}")
