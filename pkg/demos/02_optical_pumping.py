# Optical spin polarization from the seven-level rate model.

import numpy as np

from nvlab import pumping
from nvlab.experiment import Readout

scheme = pumping.LevelScheme()

# %%
# laser-on steady state: most of the population ends in ground |0>
ss = pumping.steady_state(scheme)
for label, p in zip(pumping.LABELS, ss):
    print(f"{label:8s} {p:.4f}")

# %%
# polarization builds up within a few microseconds of pumping
for t in (0.0, 500.0, 2000.0, 10_000.0, 350_000.0):
    print(f"pump {t / 1e3:7.1f} us -> |0> fraction {pumping.pumped_polarization(scheme, t):.3f}")

# %%
# without spin-selective crossing there is neither polarization nor contrast
sym = scheme.symmetric()
g = pumping.steady_state(sym)[list(pumping.GROUND)]
print("symmetric ground fractions", np.round(g / g.sum(), 6))
print(f"readout contrast: default {pumping.readout_contrast(scheme):.3f}, "
      f"symmetric {pumping.readout_contrast(sym):.1e}")

# %%
# what the virtual camera sees
r = Readout.from_scheme(scheme)
print(f"baseline {r.baseline:.3f}, contrast {r.contrast:.3f}, normalized depth {r.depth:.3f}")
