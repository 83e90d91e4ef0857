# Zeeman-split resonances and a simulated ODMR scan.

import numpy as np

from nvlab import PhysicalConstants, find_dips, resonance_frequencies, run_odmr_scan
from nvlab.experiment import NoiseModel

# %%
c = PhysicalConstants()
for B in (0.0, 2.0, 8.5):
    up, lo = resonance_frequencies(c, B)
    print(f"B = {B:4.1f} mT: {lo:7.1f} MHz and {up:7.1f} MHz")

# %%
# scan 2.5-3.3 GHz at 8.5 mT with 1% shot noise and look for the two dips
freqs = np.linspace(2500, 3300, 401)
scan = run_odmr_scan(freqs, B_z=8.5, noise=NoiseModel(rng_seed=1))
print("dips at", [round(d, 1) for d in find_dips(scan)], "MHz")

# the deepest point of the scan, as a quick look at the contrast
i = int(np.argmin(scan.mean))
print(f"minimum normalized signal {scan.mean[i]:.3f} at {scan.x[i]:.0f} MHz")
