"""A decay-protected superposition in n = 7 when only one field axis couples.

With fine structure switched off and decay restricted to the n = 6 level,
the m_j = 1/2 even-parity block of n = 7 has seven states but only six
independent decay channels if the environment couples through z alone.
One combination therefore does not decay at all. An isotropic environment
adds channels and the protection disappears.

Run: python demos/02_dark_state.py
"""

import numpy as np

from vacmix import LorentzianModel, participation_ratio
from vacmix.verify import dark_state_check

for name, g_xx in (("z only", 0.0), ("isotropic", 4e-4)):
    model = LorentzianModel.from_ev(g_xx, 4e-4, 2e-3, 1.95, allow_unphysical=True)
    block, rates, cert, _ = dark_state_check(model)
    print(f"{name}: block of {block.dim} states, rates relative to the largest:")
    print("   " + " ".join(f"{r:9.2e}" for r in np.sort(rates) / rates.max()))
    if cert is not None:
        weights = np.abs(cert) ** 2
        print(f"   protected state spreads over P = {participation_ratio(cert):.2f} basis states:")
        for label, w in sorted(zip(block.labels, weights), key=lambda t: -t[1]):
            print(f"     {label.label:>15s}  {w:.4f}")
    else:
        print("   no protected state")
